"""Compare the numba kernels with the pure-numpy fallback.

Kernel timings run in-process on the same inputs.  The end-to-end timing
runs an SD rate optimization in two subprocesses, one with
COHDEC_DISABLE_NUMBA=1.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--no-end-to-end]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from cohdec import kernels
from cohdec.gaussian import ChannelParams
from cohdec.measurement import Povm
from cohdec.measurement import channel_matrix

END_TO_END = """
import time, numpy as np
from cohdec.gaussian import ChannelParams
from cohdec.measurement import Povm
from cohdec.rates import optimize_sd_rate
from cohdec.kernels import BACKEND
t = time.perf_counter()
r = optimize_sd_rate(np.linspace(-3, 3, 61), (np.linspace(-1, 1, 11), [0.0]),
                     ChannelParams.pure_loss(0.8), Povm.pnr(0j, 6), 0.5, rounds=2)
print(BACKEND, time.perf_counter() - t, repr(r.rate))
"""


def best_of(fn, repeat):
    fn()  # warm up (numba compiles on first call)
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return min(ts)


def kernel_rows(repeat):
    rows = []
    for n_points, povm in ((21, Povm.kennedy(0.2)), (61, Povm.pnr(0.1, 6)), (201, Povm.pnr(0.1, 10))):
        pts = np.linspace(-3, 3, n_points)
        w = np.ascontiguousarray(channel_matrix(pts, ChannelParams.pure_loss(0.8), povm))
        cost = np.abs(pts) ** 2
        p0 = np.full(n_points, 1.0 / n_points)
        args = (w, cost, 0.5, p0, 0.0, 2000)  # tol 0: fixed iteration budget
        t_np = best_of(lambda: kernels.ba_lagrangian_numpy(*args), repeat)
        t_nb = best_of(lambda: kernels.ba_lagrangian_numba(*args), repeat) if kernels.HAVE_NUMBA else float("nan")
        rows.append((f"ba 2000 it {w.shape[0]}x{w.shape[1]}", t_np, t_nb))
        prior = p0.copy()
        t_np = best_of(lambda: kernels.mutual_information_numpy(prior, w), repeat * 20)
        t_nb = (best_of(lambda: kernels.mutual_information_numba(prior, w), repeat * 20)
                if kernels.HAVE_NUMBA else float("nan"))
        rows.append((f"mi {w.shape[0]}x{w.shape[1]}", t_np, t_nb))
    return rows


def end_to_end():
    out = {}
    for disable in ("0", "1"):
        env = dict(os.environ, COHDEC_DISABLE_NUMBA=disable)
        r = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True,
                           check=True)
        backend, secs, rate = r.stdout.split()
        out[backend] = (float(secs), rate)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-end-to-end", action="store_true")
    args = ap.parse_args()
    print(f"numba available: {kernels.HAVE_NUMBA}")
    print(f"{'kernel':<28}{'numpy s':>12}{'numba s':>12}{'speedup':>10}")
    for name, a, b in kernel_rows(args.repeat):
        print(f"{name:<28}{a:>12.3e}{b:>12.3e}{a / b:>10.1f}")
    if not args.no_end_to_end:
        print("\nend-to-end SD optimization (pnr, 61 points, E=0.5)")
        for backend, (secs, rate) in end_to_end().items():
            print(f"  {backend:<8}{secs:8.2f} s  rate {rate}")


if __name__ == "__main__":
    main()
