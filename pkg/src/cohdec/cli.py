"""Command-line front end.

Every experiment writes ``manifest.json`` (normalized config, code version,
wall time, results summary) and experiment-specific CSV files into the
output directory: ``--out``, else ``$COHDEC_OUT_DIR``, else ``output.dir``
from the config, else ``./cohdec-out``.  Exit status: 0 success, 1 error,
2 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod
from .adaptive import (CodebookSequence, compile_policy_to_encoder, random_policy, simulate_ad,
                       simulate_classical_picture)
from .errors import CohdecError, ValidationError
from .kernels import BACKEND
from .policy_search import optimize_ad_rate
from .rates import _jsonable, concavity_certificate, kennedy_scaling_study, optimize_sd_rate
from .theorem import run_instance, term_rows

log = logging.getLogger("cohdec")

OUT_ENV = "COHDEC_OUT_DIR"
LN2 = math.log(2.0)
PICTURE_TOL = 1e-12


class VerificationFailed(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, rows: list[dict], columns: list[str] | None = None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) for c in columns])


def _search(cfg):
    return cfg.raw["search"]


def run_channel_info(cfg, out: Path) -> dict:
    ch = cfg.channel
    info = {"mu1": ch.mu1, "mu2": ch.mu2, "nbar": ch.nbar, "classification": ch.classify(),
            "is_amplifier": ch.is_amplifier}
    if ch.is_amplifier:
        log.warning("amplifier channel (mu1 > 1): supported but outside the studied regime")
    write_csv(out / "channel_info.csv", [info])
    return info


def _sd(cfg, energy, threads, point_rounds=None):
    s = _search(cfg)
    return optimize_sd_rate(cfg.points, cfg.lambda_axes, cfg.channel, cfg.povm, float(energy),
                            rounds=s["rounds"], shrink=s["shrink"], threads=threads,
                            point_rounds=s["point_rounds"] if point_rounds is None else point_rounds)


def run_rate_sd(cfg, out: Path) -> dict:
    rows, prior_rows = [], []
    for e in cfg.energies:
        r = _sd(cfg, e, cfg.threads)
        lam = r.parameters.get("lambda")
        lam = 0j if lam is None else complex(lam)
        d = r.diagnostics
        rows.append({"energy": float(e), "rate_nats": r.rate, "rate_bits": r.rate / LN2,
                     "lambda_re": lam.real, "lambda_im": lam.imag, "duality_gap": d["duality_gap"],
                     "energy_used": d["energy_used"], "multiplier": d["multiplier"],
                     "iterations": d["iterations"], "refinement_residual": d.get("refinement_residual", 0.0)})
        for p, q in zip(r.points, r.prior):
            if q > 1e-12:
                prior_rows.append({"energy": float(e), "point_re": p.real, "point_im": p.imag, "prior": q})
    write_csv(out / "rate_sd.csv", rows)
    write_csv(out / "rate_sd_priors.csv", prior_rows, ["energy", "point_re", "point_im", "prior"])
    return {"rates": rows}


def run_rate_ad(cfg, out: Path) -> dict:
    s = _search(cfg)
    rows, trace_rows = [], []
    for e in cfg.energies:
        r = optimize_ad_rate(cfg.n_modes, cfg.points, cfg.channel, cfg.povm, float(e),
                             lambda_grid=cfg.lambda_axes,
                             angle_grid=(cfgmod.axis(s["theta"], "search.theta"),
                                         cfgmod.axis(s["phi"], "search.phi")),
                             rounds=s["rounds"], shrink=s["shrink"], sweeps=s["sweeps"],
                             threads=cfg.threads)
        sd = _sd(cfg, e, cfg.threads, point_rounds=0)
        d = r.diagnostics
        rows.append({"energy": float(e), "n_modes": cfg.n_modes, "rate_nats": r.rate,
                     "rate_bits": r.rate / LN2, "sd_rate_nats": sd.rate, "difference_nats": r.rate - sd.rate,
                     "duality_gap": d["duality_gap"], "energy_used": d["energy_used"],
                     "evaluations": d["evaluations"]})
        for k, t in enumerate(d["trace"]):
            par = complex(t.get("parameter", 0j))
            trace_rows.append({"energy": float(e), "step": k, "sweep": t["sweep"], "coordinate": t["coordinate"],
                               "parameter_re": par.real, "parameter_im": par.imag, "value_nats": t["value"],
                               "improvement": t["improvement"]})
    write_csv(out / "rate_ad.csv", rows)
    write_csv(out / "rate_ad_trace.csv", trace_rows,
              ["energy", "step", "sweep", "coordinate", "parameter_re", "parameter_im", "value_nats",
               "improvement"])
    return {"rates": rows}


def run_theorem_check(cfg, out: Path) -> dict:
    s, t = _search(cfg), cfg.raw["theorem"]
    rows, terms, summaries = [], [], []
    for k, e in enumerate(cfg.energies):
        e = float(e)
        cert_e = None
        if t.get("certificate_points"):
            cert_e = np.linspace(0.0, 2.0 * e, t["certificate_points"])
        rep = run_instance(
            cfg.n_modes, cfg.channel, cfg.povm, e, seed=int(cfg.seed) + k, reference_points=cfg.points,
            lambda_grid=cfg.lambda_axes, n_random=t["n_random"], n_optimized=t["n_optimized"],
            point_rounds=t["point_rounds"], rounds=s["rounds"], certificate_energies=cert_e,
            lam_scale=t["lambda_scale"], tol=t["tolerance"], threads=cfg.threads,
            optimize_kw={"sweeps": s["sweeps"]})
        rows += rep.rows()
        terms += [dict(r, energy=e) for r in term_rows(rep)]
        summaries.append(rep.summary())
    write_csv(out / "theorem_check.csv", rows)
    write_csv(out / "theorem_terms.csv", terms,
              ["energy", "case", "use", "history", "prob_history", "info_nats", "use_energy", "bound_nats",
               "passes"])
    result = {"instances": summaries,
              "violations": sum(x["violations"] for x in summaries),
              "passes": all(x["passes"] for x in summaries)}
    if not result["passes"]:
        raise VerificationFailed(result)
    return result


def run_kennedy_scaling(cfg, out: Path) -> dict:
    sc = cfg.raw["scaling"]
    s = _search(cfg)
    ch = cfgmod.parse_channel(cfg.raw["channel"]) if "channel" in cfg.raw else None
    rows = kennedy_scaling_study(
        cfg.energies, ch,
        alpha_axis=cfgmod.axis(sc["alpha"], "scaling.alpha") if "alpha" in sc else None,
        lambda_axis=cfgmod.axis(sc["lambda"], "scaling.lambda") if "lambda" in sc else None,
        rounds=s["rounds"], shrink=s["shrink"])
    table = [{"E": r.energy, "rate_nats": r.rate, "rate_bits": r.rate_bits, "reference_nats": r.reference,
              "ratio": r.ratio, "amplitude": r.amplitude, "lambda_re": complex(r.displacement).real,
              "prior_on": r.prior_on, "warning": r.warning} for r in rows]
    for r in rows:
        if r.warning:
            log.warning("E=%g: %s", r.energy, r.warning)
    write_csv(out / "kennedy_scaling.csv", table)
    return {"rows": table}


def run_picture_equivalence(cfg, out: Path) -> dict:
    p = cfg.raw["picture"]
    rng = np.random.default_rng(int(cfg.seed))
    povm = cfg.povm
    n_max = povm.n_max if povm.family == "pnr" else 2
    rows = []
    for k in range(p["n_instances"]):
        n = int(p["modes"][k % len(p["modes"])])
        pts = p["amplitude_scale"] * (rng.standard_normal(p["n_points"]) + 1j * rng.standard_normal(p["n_points"]))
        prior = rng.dirichlet(np.ones(pts.size))
        codebook = CodebookSequence.product(pts, n, prior)
        policy = random_policy(n, rng, povm.family, 1.0, n_max)
        a = simulate_ad(codebook, cfg.channel, policy)
        enc = compile_policy_to_encoder(codebook, policy)
        b = simulate_classical_picture(codebook, cfg.channel, enc, policy.povm_schedule())
        rows.append({"instance": k, "n_modes": n, "n_messages": codebook.n_messages,
                     "n_outcomes": len(a.histories), "max_abs_diff": a.max_abs_diff(b),
                     "energy_audit": enc.energy_audit(policy.povm_schedule())})
    write_csv(out / "picture_equivalence.csv", rows)
    worst = max(r["max_abs_diff"] for r in rows)
    result = {"instances": len(rows), "max_abs_diff": worst, "passes": worst <= PICTURE_TOL}
    if not result["passes"]:
        raise VerificationFailed(result)
    return result


RUNNERS = {
    "channel-info": run_channel_info,
    "rate-sd": run_rate_sd,
    "rate-ad": run_rate_ad,
    "theorem-check": run_theorem_check,
    "kennedy-scaling": run_kennedy_scaling,
    "picture-equivalence": run_picture_equivalence,
}


def output_dir(args_out, cfg) -> Path:
    d = args_out or os.environ.get(OUT_ENV) or cfg.get("output", "dir") or "cohdec-out"
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run(cfg: cfgmod.ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    status, code, result = "ok", 0, None
    try:
        result = RUNNERS[cfg.experiment](cfg, out)
    except VerificationFailed as exc:
        status, code, result = "verification-failed", 2, exc.args[0]
        log.error("verification failed: see %s", out / "manifest.json")
    manifest = {
        "manifest_version": 1,
        "tool": "cohdec",
        "version": __version__,
        "experiment": cfg.experiment,
        "status": status,
        "config": cfg.to_dict(),
        "wall_time_s": time.perf_counter() - t0,
        "environment": {"python": platform.python_version(), "numpy": np.__version__, "backend": BACKEND},
        "result": _jsonable(result),
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cohdec", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cohdec {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="YAML or JSON config, or a run manifest")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or output.dir)")
        p.add_argument("--seed", type=int, help="random seed, overrides the config")
        p.add_argument("--threads", type=int, help="worker threads, overrides the config")
    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("path", nargs="?")
    p.add_argument("--config")
    p.add_argument("--experiment", choices=list(RUNNERS))
    return ap


def cmd_validate(args) -> int:
    path = args.config or args.path
    if path is None:
        print("validate: give a config path", file=sys.stderr)
        return 1
    try:
        raw = cfgmod.read_raw(path)
    except OSError as exc:
        print(f"validate: cannot read {path}: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(json.dumps({"path": str(path), "violations": [str(exc)]}, indent=2))
        return 1
    bad = cfgmod.violations(raw, args.experiment)
    print(json.dumps({"path": str(path), "violations": bad}, indent=2))
    return 0 if not bad else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate":
        return cmd_validate(args)
    try:
        cfg = cfgmod.load(args.config, args.command, args.seed, args.threads)
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: invalid config {args.config}: {exc}", file=sys.stderr)
        return 1
    try:
        out = output_dir(args.out, cfg)
        return run(cfg, out)
    except CohdecError as exc:
        print(f"error: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, ValueError) as exc:
        print(f"error: numeric failure in {cfg.experiment}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
