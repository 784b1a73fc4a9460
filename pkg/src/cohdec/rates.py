"""Energy-constrained capacities and rate optimization for separable and adaptive decoders.

All rates are in nats.  Optimizers over continuous parameters work on grids
with local refinement, so every returned rate is a lower bound on the true
supremum over that parameter set.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import NumericError, ParameterDomainError
from .gaussian import ChannelParams
from .kernels import mutual_information_kernel, run_ba
from .measurement import Povm, channel_matrix

log = logging.getLogger(__name__)

S_MAX = 1e3
BA_TOL = 1e-13


def _divergence_rows(w, q):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(w > 0, w * np.log(w / q), 0.0).sum(axis=1)


def _kkt_solve(w, cost, s, active, x, steps: int = 25):
    """Newton on ``D_i(q) - s c_i = nu`` for i in ``active`` and ``sum x = 1``.

    Returns ``(x, nu)``; an int (the local index of the point to drop) if a
    step leaves the simplex; None if the system is singular.
    """
    ws, cs = w[active], cost[active]
    k = active.size
    q = x @ ws
    nu = float(x @ (_divergence_rows(ws, q) - s * cs))
    for _ in range(steps):
        q = x @ ws
        f = np.empty(k + 1)
        f[:k] = _divergence_rows(ws, q) - s * cs - nu
        f[k] = x.sum() - 1.0
        if np.max(np.abs(f)) < 1e-13:
            return x, nu
        jac = np.zeros((k + 1, k + 1))
        pos = q > 0
        jac[:k, :k] = -(ws[:, pos] / q[pos]) @ ws[:, pos].T
        jac[:k, k] = -1.0
        jac[k, :k] = 1.0
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            return None
        x_new = x + step[:k]
        if not np.all(np.isfinite(x_new)):
            return None
        if np.any(x_new <= 0):
            # report the point the full step pushes furthest out of the simplex
            return int(np.argmin(x_new))
        x = x_new
        nu += step[k]
        if np.max(np.abs(step)) < 1e-16:
            break
    return x, nu


def _lagrangian(w, cost, s, p):
    q = p @ w
    return float(p @ (_divergence_rows(w, q) - s * cost))


def _embed(size, active, x):
    out = np.full(size, 1e-15)
    out[active] = x
    return out / out.sum()


def _lp_vertex(w, cost, s, p):
    """Prior with the output law of ``p``, at most rank(W) points and no smaller objective.

    With the output law ``q = p W`` held fixed the objective is linear in the
    prior, so the best prior producing ``q`` is an LP vertex.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_h = np.where(w > 0, w * np.log(w), 0.0).sum(axis=1)
    lp = linprog(s * cost - neg_h, A_eq=w.T, b_eq=p @ w, bounds=(0, None), method="highs")
    if lp.status != 0:
        return None
    x = np.maximum(lp.x, 0.0)
    return x / x.sum()


def _newton_polish(w, cost, s, p, rank: int, max_pivots: int = 8):
    """Polish a BA iterate by solving the KKT conditions on a guessed support.

    At a fixed multiplier the objective depends on ``p`` only through the
    output distribution plus a linear cost, so some optimal prior uses at most
    rank(W) points.  Starting from the heaviest points of ``p`` (and their
    one-smaller subsets), the support is solved by Newton, then the
    best-scoring outside point is pivoted in, dropping a member when the
    support is full, until no outside point beats the common score.
    Inactive points keep a tiny mass so later BA sweeps can revive them.
    Returns the best candidate (or None) and every KKT point visited.
    """
    m = p.size
    order = np.argsort(p)[::-1][:rank + 1]
    heavy = order[p[order] > 1e-9 * p[order[0]]]
    best, best_val = None, -np.inf
    vertices = []
    vertex = _lp_vertex(w, cost, s, p)

    def attempt(active, x0):
        nonlocal best, best_val
        sol = _kkt_solve(w, cost, s, active, x0 / x0.sum())
        while isinstance(sol, int) and active.size > 1:
            active, x0 = np.delete(active, sol), np.delete(x0, sol)
            sol = _kkt_solve(w, cost, s, active, x0 / x0.sum())
        if sol is None or isinstance(sol, int):
            return None
        cand = _embed(m, active, sol[0])
        val = _lagrangian(w, cost, s, cand)
        vertices.append(cand)
        if val > best_val:
            best, best_val = cand, val
        return active, sol[0], sol[1], val

    trials = [(heavy[:rank], p)]
    trials += [(np.delete(heavy, i), p) for i in range(heavy.size)] if heavy.size > 1 else []
    if vertex is not None:
        trials.insert(0, (np.flatnonzero(vertex > 1e-12), vertex))
    cur = None
    for t, x in trials:
        r = attempt(t, x[t])
        if r is not None and (cur is None or r[3] > cur[3]):
            cur = r
    if cur is None:
        return None, vertices
    for _ in range(max_pivots):
        active, x, nu, _ = cur
        score = _divergence_rows(w, x @ w[active]) - s * cost
        score[active] = -np.inf
        j = int(np.argmax(score))
        if score[j] <= nu + 1e-14:
            break
        options = [(np.append(active, j), np.append(x, 1e-3))] if active.size < rank else []
        options += [(np.append(np.delete(active, i), j), np.append(np.delete(x, i), x[i]))
                     for i in range(active.size)]
        nxt = None
        for act, x0 in options:
            r = attempt(act, x0)
            if r is not None and (nxt is None or r[3] > nxt[3]):
                nxt = r
        if nxt is None or nxt[3] <= cur[3]:
            break
        cur = nxt
    return best, vertices


def solve_lagrangian(w, cost, s, p0, tol=BA_TOL, max_iter=200_000, chunk: int = 300,
                     max_polish: int = 6, patience: int = 20_000):
    """Maximize ``I(p) - s <cost, p>``: BA sweeps plus support Newton polishing when BA stalls.

    A polished prior is accepted only if it does not lower the objective, so
    the objective sequence stays nondecreasing.  Also returns the KKT points
    the polish visited; near a degenerate multiplier these are the vertices
    of the optimal face, which BA alone approaches very slowly.  Gives up
    when the certified gap has not halved within ``patience`` iterations;
    the returned gap is then larger than ``tol`` but still certified.
    """
    p = p0
    total = 0
    min_inc = math.inf
    polishes = 0
    prev_gap = math.inf
    rank = None
    vertices = []
    best_gap, best_at = math.inf, 0
    while True:
        p, info, e, gap, it, inc = run_ba(w, cost, s, p, tol, min(chunk, max_iter - total))
        total += it
        min_inc = min(min_inc, inc)
        if gap <= tol or total >= max_iter:
            break
        if gap < 0.5 * best_gap:
            best_gap, best_at = gap, total
        elif total - best_at > patience:
            break
        stalled = gap > 0.05 * prev_gap
        prev_gap = gap
        if not stalled or polishes >= max_polish:
            continue
        polishes += 1
        if rank is None:
            rank = int(np.linalg.matrix_rank(w))
        cand, seen = _newton_polish(w, cost, s, p, rank)
        vertices.extend(seen)
        if cand is None:
            continue
        pc, ic, ec, gc, _, _ = run_ba(w, cost, s, cand, tol, 1)
        if ic - s * ec >= info - s * e:
            min_inc = min(min_inc, (ic - s * ec) - (info - s * e))
            p, prev_gap = pc, gc
            if gc <= tol:
                info, e, gap = ic, ec, gc
                break
    return p, info, e, gap, total, min_inc, vertices


def _undominated_rows(w, cost, atol: float = 1e-15):
    """Indices of inputs whose output row is not repeated by a cheaper (or earlier equal-cost) input.

    A repeated row with a higher cost is dominated: moving its mass to the
    cheapest copy keeps the output law and lowers the cost, so dropping it
    leaves the constrained capacity unchanged.
    """
    order = np.lexsort((np.arange(cost.size), cost))
    kept = [order[0]]
    for i in order[1:]:
        if np.min(np.max(np.abs(w[kept] - w[i]), axis=1)) > atol:
            kept.append(i)
    return np.sort(np.array(kept, dtype=int))


@dataclass
class CapacityResult:
    """Constrained capacity of a fixed discrete channel ``w`` with input costs."""

    rate: float
    prior: np.ndarray
    multiplier: float
    energy: float
    upper_bound: float
    iterations: int
    ba_runs: int
    min_increment: float

    @property
    def gap(self) -> float:
        return self.upper_bound - self.rate


def constrained_capacity(w, cost, energy: float, *, tol: float = BA_TOL, max_iter: int = 200_000,
                         s_max: float = S_MAX, rate_tol: float = 3e-13) -> CapacityResult:
    """max I(p) subject to <cost, p> <= energy, by BA plus a root search on the multiplier.

    For a fixed multiplier ``s`` BA maximizes ``I(p) - s <cost, p>``.  The
    multiplier is bracketed in [0, s_max] (extended geometrically if the
    constraint is still violated there) and narrowed by a safeguarded cutting-plane
    step on the dual.  Once the bracket ends straddle the constraint, the mixture of
    their priors that spends exactly ``energy`` is a feasible candidate; the
    search stops when the best feasible rate is within ``rate_tol`` of the
    smallest Lagrange dual bound seen.
    """
    w = np.asarray(w, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m = w.shape[0]
    if m == 0:
        raise ParameterDomainError("empty input grid")
    if not np.all(np.isfinite(w)):
        raise NumericError("non-finite transition probabilities")
    cmin = float(cost.min())
    if energy < cmin - 1e-15:
        raise ParameterDomainError(f"energy {energy} below the cheapest input ({cmin})")

    keep = _undominated_rows(w, cost)
    if keep.size < m:
        res = constrained_capacity(w[keep], cost[keep], energy, tol=tol, max_iter=max_iter,
                                   s_max=s_max, rate_tol=rate_tol)
        prior = np.zeros(m)
        prior[keep] = res.prior
        res.prior = prior
        return res

    total_it = 0
    runs = 0
    min_inc = math.inf
    pool = []  # (prior, information, energy) of every candidate seen

    def ba(s, p0, ww=w, cc=cost):
        nonlocal total_it, runs, min_inc
        # blend warm starts with uniform: near-zero masses recover only slowly
        p0 = 0.5 * p0 + 0.5 / p0.size
        p, info, e, gap, it, inc, verts = solve_lagrangian(ww, cc, s, p0, tol, max_iter)
        total_it += it
        runs += 1
        min_inc = min(min_inc, inc)
        pool.append((p, info, e))
        for v in verts:
            pool.append((v, mutual_information_kernel(v, ww), float(v @ cc)))
        if not np.isfinite(info):
            raise NumericError("Blahut-Arimoto produced a non-finite objective")
        return p, info, e, gap

    # only the cheapest inputs are feasible
    if energy <= cmin + 1e-15:
        sel = np.flatnonzero(cost <= cmin + 1e-15)
        p_sub, info, e, gap = ba(0.0, np.full(sel.size, 1.0 / sel.size), w[sel], cost[sel])
        prior = np.zeros(m)
        prior[sel] = p_sub
        return CapacityResult(info, prior, 0.0, e, info + gap, total_it, runs, min_inc)

    p, info, e, gap = ba(0.0, np.full(m, 1.0 / m))
    if e <= energy:
        return CapacityResult(info, p, 0.0, e, info + gap, total_it, runs, min_inc)

    def dual(s, info, e, gap):
        return info - s * e + gap + s * energy

    upper = info + gap  # the unconstrained capacity bounds the constrained one
    lo, p_lo, e_lo = 0.0, p, e
    hi = min(1.0, s_max)
    p_hi, info_hi, e_hi, gap_hi = ba(hi, p)
    while e_hi > energy:
        upper = min(upper, dual(hi, info_hi, e_hi, gap_hi))
        lo, p_lo, e_lo = hi, p_hi, e_hi
        hi = min(4.0 * hi, s_max) if hi < s_max else 2.0 * hi
        if hi > 1e12:
            raise NumericError(f"could not satisfy energy {energy} with multiplier up to 1e12")
        p_hi, info_hi, e_hi, gap_hi = ba(hi, p_hi)
    upper = min(upper, dual(hi, info_hi, e_hi, gap_hi))

    def best_feasible():
        # best candidate, or mixture of an over- and an under-budget candidate
        # that meets the constraint with equality
        best = max(((i, p, e) for p, i, e in pool if e <= energy), key=lambda t: t[0],
                   default=(info_hi, p_hi, e_hi))
        # near the optimal multiplier the useful endpoints nearly maximize I - s e
        s = hi

        def rank(t):
            return -(t[1] - s * t[2])

        over = sorted((t for t in pool if t[2] > energy), key=rank)[:8]
        under = sorted((t for t in pool if t[2] <= energy), key=rank)[:8]
        for (pa, _, ea), (pb, _, eb) in itertools.product(over, under):
            t = (energy - eb) / (ea - eb)
            p_mix = t * pa + (1.0 - t) * pb
            i_mix = mutual_information_kernel(p_mix, w)
            if i_mix > best[0]:
                best = (i_mix, p_mix, float(p_mix @ cost))
        return best

    rate, prior, used = best_feasible()
    info_lo = mutual_information_kernel(p_lo, w)
    for k in range(200):
        if upper - rate <= rate_tol or hi - lo <= 1e-13 * hi:
            break
        # cutting plane: the Lagrangian lines of the two bracket ends meet
        # where the dual is smallest if e(s) jumps there, which binary
        # outputs make the typical case; bisection every third step
        mid = (info_lo - info_hi) / (e_lo - e_hi)
        if k % 3 == 2 or not lo < mid < hi:
            mid = 0.5 * (lo + hi)
        p_m, info_m, e_m, gap_m = ba(mid, p_hi if e_hi > 0 else p_lo)
        upper = min(upper, dual(mid, info_m, e_m, gap_m))
        if e_m > energy:
            lo, p_lo, info_lo, e_lo = mid, p_m, info_m, e_m
        else:
            hi, p_hi, info_hi, e_hi, gap_hi = mid, p_m, info_m, e_m, gap_m
        rate, prior, used = best_feasible()
    return CapacityResult(rate, prior, hi, used, max(upper, rate), total_it, runs, min_inc)


@dataclass
class RateResult:
    rate: float
    prior: np.ndarray
    points: np.ndarray
    parameters: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def rate_bits(self) -> float:
        return self.rate / math.log(2.0)

    @property
    def energy_used(self) -> float:
        return float(self.diagnostics.get("energy_used", np.nan))

    def to_dict(self) -> dict:
        pts = np.asarray(self.points)
        d = {
            "rate_nats": self.rate,
            "rate_bits": self.rate_bits,
            "prior": np.asarray(self.prior).tolist(),
            "parameters": _jsonable(self.parameters),
            "diagnostics": _jsonable(self.diagnostics),
        }
        if pts.ndim == 1:
            d["points"] = [[z.real, z.imag] for z in pts.astype(complex)]
        else:
            d["points_re"] = pts.real.tolist()
            d["points_im"] = pts.imag.tolist()
        return d


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Povm):
        return obj.to_dict()
    return obj


def blahut_arimoto_constrained(points, params: ChannelParams, povm: Povm, energy: float,
                               **kw) -> RateResult:
    """Capacity of the programmable channel on a fixed amplitude grid at input energy <= ``energy``."""
    points = np.asarray(points, dtype=complex).ravel()
    if points.size == 0:
        raise ParameterDomainError("empty amplitude grid")
    if energy < 0:
        raise ParameterDomainError(f"energy must be >= 0, got {energy}")
    w = channel_matrix(points, params, povm)
    cost = np.abs(points) ** 2
    res = constrained_capacity(w, cost, energy, **kw)
    return RateResult(
        rate=res.rate,
        prior=res.prior,
        points=points,
        parameters={"povm": povm, "lambda": povm.parameter},
        diagnostics={
            "iterations": res.iterations,
            "ba_runs": res.ba_runs,
            "duality_gap": res.gap,
            "upper_bound": res.upper_bound,
            "energy_used": res.energy,
            "energy_limit": energy,
            "multiplier": res.multiplier,
            "min_increment": res.min_increment,
        },
    )


def _axis_step(axis):
    axis = np.unique(np.asarray(axis, dtype=float))
    return float(np.min(np.diff(axis))) if axis.size > 1 else 0.0


def _lam_key(lam: complex):
    # tie-break toward smaller |lambda|, then lexicographic (re, im)
    return (round(abs(lam), 12), round(lam.real, 12), round(lam.imag, 12))


def grid_search(evaluate, re_axis, im_axis, rounds: int = 3, shrink: float = 0.2, threads: int = 1,
                cache: dict | None = None):
    """Maximize ``evaluate(complex) -> (value, payload)`` over a product grid with local refinement.

    Each refinement round recentres every axis on the incumbent and shrinks
    its window by ``shrink``, keeping the number of points (made odd, so the
    incumbent stays on the grid).  Ties go to the smaller ``|lambda|``.
    Returns ``(best_lambda, best_value, best_payload, trace)``.
    """
    cache = {} if cache is None else cache
    trace = []

    def run(cands):
        todo = [c for c in dict.fromkeys(cands) if c not in cache]
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(threads) as ex:
                vals = list(ex.map(evaluate, todo))
        else:
            vals = [evaluate(c) for c in todo]
        cache.update(zip(todo, vals))

    def best_of():
        return max(cache.items(), key=lambda kv: (kv[1][0], tuple(-x for x in _lam_key(kv[0]))))

    re_axis = np.unique(np.asarray(re_axis, dtype=float))
    im_axis = np.unique(np.asarray(im_axis, dtype=float))
    run([complex(a, b) for a in re_axis for b in im_axis])
    lam, (val, payload) = best_of()
    trace.append({"round": 0, "lambda": lam, "value": val, "evaluations": len(cache),
                  "step_re": _axis_step(re_axis), "step_im": _axis_step(im_axis)})
    n_re, n_im = re_axis.size | 1, im_axis.size | 1
    w_re, w_im = float(np.ptp(re_axis)), float(np.ptp(im_axis))
    for r in range(1, rounds + 1):
        w_re *= shrink
        w_im *= shrink
        re_new = lam.real + np.linspace(-0.5 * w_re, 0.5 * w_re, n_re) if w_re > 0 else np.array([lam.real])
        im_new = lam.imag + np.linspace(-0.5 * w_im, 0.5 * w_im, n_im) if w_im > 0 else np.array([lam.imag])
        run([complex(a, b) for a in re_new for b in im_new])
        prev = val
        lam, (val, payload) = best_of()
        trace.append({"round": r, "lambda": lam, "value": val, "improvement": val - prev,
                      "evaluations": len(cache), "step_re": _axis_step(re_new), "step_im": _axis_step(im_new)})
    return lam, val, payload, trace


def _split_axes(lambda_grid):
    """Accept a complex array (product structure inferred) or an (re_axis, im_axis) pair."""
    if isinstance(lambda_grid, tuple) and len(lambda_grid) == 2:
        return np.asarray(lambda_grid[0], float), np.asarray(lambda_grid[1], float)
    lg = np.asarray(lambda_grid, dtype=complex).ravel()
    return np.unique(lg.real), np.unique(lg.imag)


def _refine_points(points, support, h_re, h_im, shrink):
    """Superset of ``points`` with a local product grid of half-width ``h`` around each support point."""
    n_side = int(round(1.0 / shrink))
    offs = np.arange(-n_side, n_side + 1) * shrink
    re = h_re * offs if h_re > 0 else np.array([0.0])
    im = h_im * offs if h_im > 0 else np.array([0.0])
    local = (re[:, None] + 1j * im[None, :]).ravel()
    new = (support[:, None] + local[None, :]).ravel()
    out = np.concatenate([points, new])
    # drop exact duplicates while keeping the original points first
    _, idx = np.unique(np.round(out.real, 13) + 1j * np.round(out.imag, 13), return_index=True)
    return out[np.sort(idx)]


def optimize_sd_rate(points, lambda_grid, params: ChannelParams, povm: Povm, energy: float, *,
                     rounds: int = 3, shrink: float = 0.2, threads: int = 1, point_rounds: int = 0,
                     support_tol: float = 1e-9, null_point: bool = True, **ba_kw) -> RateResult:
    """Separable-decoder rate: outer search over the POVM parameter, inner constrained BA.

    ``povm`` fixes the family (and e.g. ``n_max`` or bin edges); its tuning
    parameter is replaced by each grid value.  With ``point_rounds > 0`` the
    amplitude grid is then refined around the current support, alternating
    with a local parameter search; every refined grid contains the previous
    one and every local search contains the incumbent, so the rate never
    decreases.  With ``null_point`` the displacement families also offer the
    input ``lambda / mu1`` that the displacement maps to vacuum.
    """
    points = np.asarray(points, dtype=complex).ravel()
    if povm.family == "helstrom-binary":
        res = blahut_arimoto_constrained(points, params, povm, energy, **ba_kw)
        res.diagnostics["lambda_trace"] = []
        return res

    nulling = null_point and povm.family in ("kennedy", "pnr") and params.mu1 > 0

    def search(pts, re_axis, im_axis, n_rounds):
        def evaluate(lam):
            # the input nulled by the displacement is always offered, so the
            # landscape in lambda does not depend on how the grid is aligned
            grid = np.append(pts, lam / params.mu1) if nulling and not np.any(pts == lam / params.mu1) else pts
            r = blahut_arimoto_constrained(grid, params, povm.with_parameter(lam), energy, **ba_kw)
            return r.rate, r
        return grid_search(evaluate, re_axis, im_axis, n_rounds, shrink, threads)

    re_axis, im_axis = _split_axes(lambda_grid)
    if povm.family == "homodyne":
        im_axis = np.array([0.0])
    lam, _, best, trace = search(points, re_axis, im_axis, rounds)
    # the parameter and the support move together, so every point round
    # repeats a full zoom search one coarse step around the incumbent
    h_lre, h_lim = trace[0]["step_re"], trace[0]["step_im"]
    h_re = _axis_step(points.real)
    h_im = _axis_step(points.imag)
    point_trace = []
    pts = points
    for r in range(point_rounds):
        support = best.points[best.prior > support_tol]
        pts = _refine_points(best.points, support, h_re, h_im, shrink)
        n_side = int(round(1.0 / shrink))
        offs = np.arange(-n_side, n_side + 1) * shrink
        la = lam.real + h_lre * offs if h_lre > 0 else np.array([lam.real])
        lb = lam.imag + h_lim * offs if h_lim > 0 else np.array([lam.imag])
        prev = best.rate
        lam, _, best, _ = search(pts, la, lb, rounds)
        point_trace.append({"round": r + 1, "n_points": int(best.points.size), "lambda": lam,
                            "value": best.rate, "improvement": best.rate - prev})
        h_re, h_im = h_re * shrink, h_im * shrink
    best.diagnostics["lambda_trace"] = trace
    best.diagnostics["point_trace"] = point_trace
    last = point_trace[-1] if point_trace else trace[-1]
    best.diagnostics["refinement_residual"] = last.get("improvement", 0.0)
    best.parameters["lambda"] = lam
    return best


@dataclass
class ConcavityCertificate:
    energies: np.ndarray
    values: np.ndarray
    worst_violation: float
    worst_monotonicity: float
    results: list = field(default_factory=list, repr=False)
    tol: float = 1e-6
    monotone_tol: float = 1e-9

    @property
    def passes(self) -> bool:
        return self.worst_violation >= -self.tol

    @property
    def monotone(self) -> bool:
        return self.worst_monotonicity >= -self.monotone_tol

    def upper_envelope(self, e: float) -> float:
        """Upper bound on C1(e) valid for a concave nondecreasing C1 sampled on the grid."""
        es, cs = self.energies, self.values
        if e <= es[0]:
            return float(cs[0])
        k = int(np.searchsorted(es, e))
        bound = float(cs[k]) if k < es.size else math.inf
        if k >= 2:
            slope = (cs[k - 1] - cs[k - 2]) / (es[k - 1] - es[k - 2])
            bound = min(bound, float(cs[k - 1] + slope * (e - es[k - 1])))
        return bound

    def interpolate(self, e: float) -> float:
        return float(np.interp(e, self.energies, self.values))

    def to_dict(self) -> dict:
        return {
            "energies": self.energies.tolist(),
            "values": self.values.tolist(),
            "worst_violation": self.worst_violation,
            "worst_monotonicity": self.worst_monotonicity,
            "passes": self.passes,
            "monotone": self.monotone,
        }


def midpoint_concavity(energies, values):
    """Worst ``C((a+b)/2) - (C(a)+C(b))/2`` over grid pairs whose midpoint is on the grid."""
    energies = np.asarray(energies, float)
    values = np.asarray(values, float)
    worst = math.inf
    for i in range(energies.size):
        for j in range(i + 2, energies.size):
            mid = 0.5 * (energies[i] + energies[j])
            k = np.flatnonzero(np.isclose(energies, mid, rtol=0, atol=1e-12))
            if k.size:
                worst = min(worst, values[k[0]] - 0.5 * (values[i] + values[j]))
    return worst


def concavity_certificate(params: ChannelParams, povm: Povm, energies, points, lambda_grid,
                          tol: float = 1e-6, **kw) -> ConcavityCertificate:
    energies = np.sort(np.asarray(energies, dtype=float))
    if energies.size < 5:
        raise ParameterDomainError("concavity certificate needs at least 5 energies")
    results = [optimize_sd_rate(points, lambda_grid, params, povm, e, **kw) for e in energies]
    values = np.array([r.rate for r in results])
    worst = midpoint_concavity(energies, values)
    mono = float(np.min(np.diff(values)))
    return ConcavityCertificate(energies, values, worst, mono, results, tol)


@dataclass
class ScalingRow:
    energy: float
    rate: float
    reference: float
    ratio: float
    amplitude: float
    displacement: complex
    prior_on: float
    warning: str = ""

    @property
    def rate_bits(self) -> float:
        return self.rate / math.log(2.0)


def kennedy_leading_order(e: float) -> float:
    """E ln(1/E) - E ln ln(1/E), the two leading terms of the low-energy Kennedy rate."""
    return e * math.log(1.0 / e) - e * math.log(math.log(1.0 / e))


def _binary_kennedy_rate(alpha, params, energy, lambda_grid, rounds, shrink):
    res = optimize_sd_rate([0.0, alpha], lambda_grid, params, Povm.kennedy(), energy,
                           rounds=rounds, shrink=shrink)
    return res.rate, res


def kennedy_scaling_study(energies, params: ChannelParams | None = None, *, alpha_axis=None,
                          lambda_axis=None, rounds: int = 3, shrink: float = 0.2) -> list[ScalingRow]:
    """Separable on/off rate at low energy, optimized over the on-off amplitude and displacement.

    The amplitude grid is ``{0, alpha}`` plus the input nulled by the
    displacement; ``alpha`` is itself searched on a grid with refinement.
    Rows whose energy exceeds 0.2 carry a warning.
    """
    params = ChannelParams.identity() if params is None else params
    rows = []
    for e in energies:
        e = float(e)
        if not 0 < e < 1:
            raise ParameterDomainError(f"scaling study energies must lie in (0, 1), got {e}")
        a_axis = np.asarray(alpha_axis if alpha_axis is not None else
                            np.linspace(0.5, 1.5 * math.sqrt(math.log(1 / e)) + 1.5, 21), float)
        l_axis = np.asarray(lambda_axis if lambda_axis is not None else np.linspace(-0.3, 0.3, 7), float)
        a_axis = a_axis[a_axis ** 2 > e]  # alpha^2 <= E would make the constraint inactive

        def evaluate(a):
            rate, res = _binary_kennedy_rate(a.real, params, e, (l_axis, [0.0]), rounds, shrink)
            return rate, res

        alpha, rate, res, _ = grid_search(evaluate, a_axis, [0.0], rounds, shrink)
        ref = e * math.log(1 / e)
        rows.append(ScalingRow(
            energy=e, rate=rate, reference=kennedy_leading_order(e), ratio=rate / ref,
            amplitude=alpha.real, displacement=res.parameters["lambda"], prior_on=float(res.prior[1]),
            warning="" if e <= 0.2 else "energy outside the low-energy regime (E > 0.2)",
        ))
    return rows
