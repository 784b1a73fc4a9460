"""Hot numeric kernels.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
fallback with identical semantics.  Set ``COHDEC_DISABLE_NUMBA=1`` (or run
without numba installed) to select the fallback.  ``BACKEND`` names the
active path.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("COHDEC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

# keeps every output reachable so divergences stay finite
P_FLOOR = 1e-300
# largest over-relaxation factor of the accelerated update
MU_MAX = 2.0 ** 20


def _xlogx_ratio_np(w, q):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = w * np.log(w / q)
    return np.where(w > 0, t, 0.0)


def _objective_np(w, cost, s, p):
    q = p @ w
    return float(p @ (_xlogx_ratio_np(w, q[None, :]).sum(axis=1) - s * cost))


def _scaled_step_np(p, z, mu):
    out = np.maximum(p * np.exp(mu * z), P_FLOOR)
    return out / out.sum()


def ba_lagrangian_numpy(w, cost, s, p0, tol, max_iter):
    """Blahut-Arimoto ascent on ``I(p) - s <cost, p>`` for a fixed multiplier.

    Each iteration also tries the over-relaxed update ``p exp(mu z)`` and
    keeps it only if it beats the plain update, so the objective never
    decreases; ``mu`` doubles on success and falls back on failure.  This
    matters when all scores are nearly equal (low-information channels),
    where the plain update moves by tiny multiplicative steps.

    Returns ``(p, info, energy, gap, iterations, min_increment)`` where ``gap``
    is the certified distance of the Lagrangian from its maximum and
    ``min_increment`` the smallest per-iteration change of the objective.
    """
    p = p0.copy()
    min_inc = np.inf
    prev = -np.inf
    info = 0.0
    gap = np.inf
    it = 0
    mu = 1.0
    for it in range(1, max_iter + 1):
        q = p @ w
        d = _xlogx_ratio_np(w, q[None, :]).sum(axis=1)
        info = float(p @ d)
        obj = info - s * float(p @ cost)
        score = d - s * cost
        gap = float(score.max()) - obj
        if it > 1:
            min_inc = min(min_inc, obj - prev)
        prev = obj
        if gap <= tol or it == max_iter:
            break
        z = score - score.max()
        plain = _scaled_step_np(p, z, 1.0)
        if mu > 1.0:
            fast = _scaled_step_np(p, z, mu)
            if _objective_np(w, cost, s, fast) >= _objective_np(w, cost, s, plain):
                p = fast
                mu = min(2.0 * mu, MU_MAX)
                continue
            mu = max(1.0, 0.125 * mu)
        else:
            mu = 2.0
        p = plain
    return p, info, float(p @ cost), gap, it, min_inc


def mutual_information_numpy(prior, table):
    q = prior @ table
    d = _xlogx_ratio_np(table, q[None, :]).sum(axis=1)
    return float(prior @ d)


if HAVE_NUMBA:

    @njit(cache=True, nogil=True, error_model="numpy")
    def _divergences(w, p, d):
        m, k = w.shape
        q = np.zeros(k)
        for i in range(m):
            pi = p[i]
            if pi > 0.0:
                for y in range(k):
                    q[y] += pi * w[i, y]
        for i in range(m):
            acc = 0.0
            for y in range(k):
                wy = w[i, y]
                if wy > 0.0:
                    acc += wy * np.log(wy / q[y])
            d[i] = acc

    @njit(cache=True, nogil=True, error_model="numpy")
    def _scaled_step(p, d, cost, s, best, mu, out):
        tot = 0.0
        for i in range(p.size):
            out[i] = max(p[i] * np.exp(mu * (d[i] - s * cost[i] - best)), P_FLOOR)
            tot += out[i]
        for i in range(p.size):
            out[i] /= tot

    @njit(cache=True, nogil=True, error_model="numpy")
    def _objective(w, cost, s, p, scratch):
        _divergences(w, p, scratch)
        acc = 0.0
        for i in range(p.size):
            acc += p[i] * (scratch[i] - s * cost[i])
        return acc

    @njit(cache=True, nogil=True, error_model="numpy")
    def ba_lagrangian_numba(w, cost, s, p0, tol, max_iter):
        m = w.shape[0]
        p = p0.copy()
        d = np.empty(m)
        scratch = np.empty(m)
        plain = np.empty(m)
        fast = np.empty(m)
        min_inc = np.inf
        prev = -np.inf
        info = 0.0
        gap = np.inf
        it = 0
        mu = 1.0
        for it in range(1, max_iter + 1):
            _divergences(w, p, d)
            info = 0.0
            energy = 0.0
            best = -np.inf
            for i in range(m):
                info += p[i] * d[i]
                energy += p[i] * cost[i]
                sc = d[i] - s * cost[i]
                if sc > best:
                    best = sc
            obj = info - s * energy
            gap = best - obj
            if it > 1:
                inc = obj - prev
                if inc < min_inc:
                    min_inc = inc
            prev = obj
            if gap <= tol or it == max_iter:
                break
            _scaled_step(p, d, cost, s, best, 1.0, plain)
            if mu > 1.0:
                _scaled_step(p, d, cost, s, best, mu, fast)
                if _objective(w, cost, s, fast, scratch) >= _objective(w, cost, s, plain, scratch):
                    p[:] = fast
                    mu = min(2.0 * mu, MU_MAX)
                    continue
                mu = max(1.0, 0.125 * mu)
            else:
                mu = 2.0
            p[:] = plain
        energy = 0.0
        for i in range(m):
            energy += p[i] * cost[i]
        return p, info, energy, gap, it, min_inc

    @njit(cache=True, nogil=True, error_model="numpy")
    def mutual_information_numba(prior, table):
        d = np.empty(table.shape[0])
        _divergences(table, prior, d)
        acc = 0.0
        for i in range(table.shape[0]):
            acc += prior[i] * d[i]
        return acc

    BACKEND = "numba"
    ba_lagrangian = ba_lagrangian_numba
    _mi_kernel = mutual_information_numba
else:
    BACKEND = "numpy"
    ba_lagrangian = ba_lagrangian_numpy
    _mi_kernel = mutual_information_numpy


def mutual_information_kernel(prior, table) -> float:
    return float(_mi_kernel(np.ascontiguousarray(prior, dtype=float),
                            np.ascontiguousarray(table, dtype=float)))


def run_ba(w, cost, s, p0, tol=1e-13, max_iter=200_000):
    w = np.ascontiguousarray(w, dtype=float)
    cost = np.ascontiguousarray(cost, dtype=float)
    p0 = np.ascontiguousarray(p0, dtype=float)
    p, info, energy, gap, it, min_inc = ba_lagrangian(w, cost, float(s), p0, float(tol), int(max_iter))
    return p, float(info), float(energy), float(gap), int(it), float(min_inc)
