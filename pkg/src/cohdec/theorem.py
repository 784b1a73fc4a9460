"""Per-instance verification that adaptive decoding does not beat separable decoding.

For each candidate (policy, codebook) the harness

a. computes I(W : Y_1..Y_N) from the receiver-side simulation;
b. rebuilds it from the compiled feedback encoder as a sum of per-use
   conditional terms (chain rule);
c. bounds every term by the single-use capacity of that branch's
   measurement at the branch's conditional energy, computed by constrained
   BA on the reference grid plus the branch's transmitted amplitudes (the
   branch's own input law is feasible there, so this bound is exact up to
   BA accuracy);
d. checks that the conditional energies average to at most N E;
e. checks I/N against the separable reference rate, the averaged branch
   bounds against the same rate, and the concavity certificate.

A negative control repeats step e against the separable rate at E/2, which
good policies must violate.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adaptive import (AdaptivePolicy, CodebookSequence, PolicyNode, chain_rule_terms,
                       compile_policy_to_encoder, history_key, mutual_information, random_policy,
                       simulate_ad)
from .gaussian import ChannelParams
from .measurement import Povm
from .policy_search import PolicyParameters, check_search_space, optimize_ad_rate, policy_rate
from .rates import (ConcavityCertificate, RateResult, blahut_arimoto_constrained, concavity_certificate,
                    optimize_sd_rate)

STEPS = ("a", "b", "c", "d", "e")
# certified to 1e-10 nats: ample against the 1e-6 check tolerance and far
# cheaper than the default; case rates are recomputed exactly from the codebook
CASE_BA = {"tol": 1e-11, "rate_tol": 1e-10}


@dataclass
class PolicyCase:
    name: str
    kind: str  # non-adaptive | random | optimized
    policy: AdaptivePolicy
    codebook: CodebookSequence


@dataclass
class TermBound:
    use: int
    history: tuple
    prob: float
    info: float
    energy: float
    bound: float
    tol: float

    @property
    def passes(self) -> bool:
        return self.info <= self.bound + self.tol


@dataclass
class CaseReport:
    name: str
    kind: str
    n_modes: int
    rate: float  # I / N, nats per mode
    info: float
    chain_sum: float
    mean_energy: float  # (1/N) sum_j E[E_j(history)]
    chain_bound: float  # (1/N) sum_j E[C_branch(E_j(history))]
    jensen_value: float
    terms: list = field(repr=False)
    steps: dict = field(default_factory=dict)
    control_violation: bool = False

    @property
    def chain_error(self) -> float:
        return abs(self.chain_sum - self.info)

    @property
    def passes(self) -> bool:
        return all(self.steps.values())


@dataclass
class TheoremReport:
    n_modes: int
    energy: float
    params: ChannelParams
    povm: Povm
    sd_rate: float
    control_rate: float
    cases: list
    certificate: ConcavityCertificate | None = None
    tol: float = 1e-6

    @property
    def violations(self) -> int:
        """Cases breaking I/N <= R_SD + tol."""
        return sum(c.rate > self.sd_rate + self.tol for c in self.cases)

    @property
    def step_failures(self) -> dict:
        return {s: sum(not c.steps[s] for c in self.cases) for s in STEPS}

    @property
    def control_flagged(self) -> bool:
        return any(c.control_violation for c in self.cases)

    @property
    def best_non_adaptive_gap(self) -> float:
        gaps = [abs(c.rate - self.sd_rate) for c in self.cases if c.kind == "non-adaptive"]
        return min(gaps, default=math.inf)

    @property
    def max_chain_error(self) -> float:
        return max((c.chain_error for c in self.cases), default=0.0)

    @property
    def passes(self) -> bool:
        return all(c.passes for c in self.cases) and self.control_flagged

    def rows(self) -> list[dict]:
        out = []
        for c in self.cases:
            row = {
                "case": c.name, "kind": c.kind, "energy": self.energy, "rate_nats": c.rate,
                "info_nats": c.info, "chain_sum_nats": c.chain_sum, "chain_error": c.chain_error,
                "mean_energy": c.mean_energy, "chain_bound_nats": c.chain_bound,
                "sd_rate_nats": self.sd_rate, "control_rate_nats": self.control_rate,
            }
            row.update({f"step_{s}": int(c.steps[s]) for s in STEPS})
            row["control_violation"] = int(c.control_violation)
            out.append(row)
        return out

    def summary(self) -> dict:
        return {
            "n_modes": self.n_modes,
            "energy": self.energy,
            "cases": len(self.cases),
            "sd_rate_nats": self.sd_rate,
            "control_rate_nats": self.control_rate,
            "violations": self.violations,
            "step_failures": self.step_failures,
            "max_chain_error": self.max_chain_error,
            "best_non_adaptive_gap": self.best_non_adaptive_gap,
            "max_rate_nats": max((c.rate for c in self.cases), default=0.0),
            "control_flagged": self.control_flagged,
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "passes": self.passes,
        }


def check_case(case: PolicyCase, params: ChannelParams, energy: float, sd_rate: float,
               control_rate: float, reference_points, certificate: ConcavityCertificate | None = None,
               tol: float = 1e-6, chain_tol: float = 1e-9, energy_tol: float = 1e-9) -> CaseReport:
    n = case.policy.n_modes
    codebook = case.codebook
    table = simulate_ad(codebook, params, case.policy)
    info = mutual_information(codebook.priors, table)
    ceiling = min(math.log(codebook.n_messages), math.log(table.probs.shape[1]))
    step_a = bool(np.isfinite(info)) and info <= ceiling + 1e-12

    encoder = compile_policy_to_encoder(codebook, case.policy)
    terms = chain_rule_terms(codebook, params, encoder, case.policy.povm_schedule())
    chain_sum = sum(t.prob_history * t.info for t in terms)
    step_b = abs(chain_sum - info) <= chain_tol

    ref = np.asarray(reference_points, dtype=complex).ravel()
    bounds = []
    for t in terms:
        grid = np.concatenate([ref, t.betas])
        cap = blahut_arimoto_constrained(grid, params, t.povm, t.energy, **CASE_BA)
        bounds.append(TermBound(t.use, t.history, t.prob_history, t.info, t.energy, cap.rate, tol))
    step_c = all(b.passes for b in bounds)

    mean_energy = sum(t.prob_history * t.energy for t in terms) / n
    step_d = mean_energy <= energy + energy_tol and codebook.satisfies_energy(energy, energy_tol)

    rate = info / n
    chain_bound = sum(b.prob * b.bound for b in bounds) / n
    step_e = rate <= sd_rate + tol and chain_bound <= sd_rate + tol
    jensen = math.nan
    if certificate is not None:
        # the concave interpolant of C1 obeys Jensen, so its branch average stays below its value at E
        jensen = sum(b.prob * certificate.interpolate(b.energy) for b in bounds) / n
        step_e = step_e and certificate.passes and jensen <= certificate.interpolate(energy) + tol
    return CaseReport(
        name=case.name, kind=case.kind, n_modes=n, rate=rate, info=info, chain_sum=chain_sum,
        mean_energy=mean_energy, chain_bound=chain_bound, jensen_value=jensen, terms=bounds,
        steps={"a": step_a, "b": step_b, "c": step_c, "d": step_d, "e": step_e},
        control_violation=rate > control_rate + tol,
    )


def theorem_check(n_modes: int, params: ChannelParams, povm: Povm, energy: float, cases, *,
                  sd_reference: RateResult, control_reference: RateResult, reference_points=None,
                  certificate: ConcavityCertificate | None = None, tol: float = 1e-6,
                  chain_tol: float = 1e-9, threads: int = 1) -> TheoremReport:
    """Run steps a-e and the negative control on every case; failures are report entries."""
    ref = sd_reference.points if reference_points is None else reference_points

    def one(case):
        return check_case(case, params, energy, sd_reference.rate, control_reference.rate, ref,
                          certificate, tol, chain_tol)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            reports = list(ex.map(one, cases))
    else:
        reports = [one(c) for c in cases]
    return TheoremReport(n_modes, energy, params, povm, sd_reference.rate, control_reference.rate,
                         reports, certificate, tol)


def support_of(result: RateResult, tol: float = 1e-12):
    keep = result.prior > tol
    p = result.prior[keep]
    return result.points[keep], p / p.sum()


def non_adaptive_case(n_modes: int, sd: RateResult, povm: Povm) -> PolicyCase:
    """The separable optimum used on every mode: product policy, i.i.d. optimal prior."""
    pts, prior = support_of(sd)
    lam = sd.parameters.get("lambda")
    node_povm = povm if lam is None else povm.with_parameter(lam)
    policy = AdaptivePolicy.non_adaptive(n_modes, node_povm)
    return PolicyCase("non-adaptive-sd", "non-adaptive", policy, CodebookSequence.product(pts, n_modes, prior))


def build_cases(n_modes: int, params: ChannelParams, povm: Povm, energy: float, sd: RateResult, *,
                rng: np.random.Generator, n_random: int = 200, n_optimized: int = 2, base_points=None,
                lam_scale: float = 1.0, optimize_kw: dict | None = None) -> list[PolicyCase]:
    """Non-adaptive optimum, random adaptive policies and locally optimized adaptive policies.

    Random and optimized policies use a product codebook on ``base_points``
    (default: the separable optimum's support plus the vacuum) with the
    BA-optimal prior for that policy.
    """
    check_search_space(n_modes, povm)
    cases = [non_adaptive_case(n_modes, sd, povm)]
    if base_points is None:
        sup, _ = support_of(sd)
        # refined grids leave clusters of adjacent support points; one per cluster suffices
        base_points = np.unique(np.round(np.concatenate([sup, [0.0]]), 2))
    base_points = np.asarray(base_points, dtype=complex)
    n_max = povm.n_max if povm.family == "pnr" else 2
    for k in range(n_random):
        policy = random_policy(n_modes, rng, povm.family, lam_scale, n_max)
        if povm.family == "homodyne":
            # keep the configured binning, randomize only the phase
            policy = AdaptivePolicy(n_modes, {
                h: PolicyNode(node.unitary, povm.with_parameter(node.povm.theta))
                for h, node in policy.nodes.items()})
        _, codebook, _ = policy_rate(base_points, policy, params, energy, **CASE_BA)
        cases.append(PolicyCase(f"random-{k:03d}", "random", policy, codebook))
    kw = {"lambda_grid": (np.linspace(-1, 1, 5), np.linspace(-1, 1, 5)), "rounds": 2, "sweeps": 2, **CASE_BA}
    kw.update(optimize_kw or {})
    for k in range(n_optimized):
        init = None if k == 0 else PolicyParameters.random(n_modes, povm.n_outcomes, rng, lam_scale)
        res = optimize_ad_rate(n_modes, base_points, params, povm, energy, init=init, **kw)
        cases.append(PolicyCase(f"optimized-{k:02d}", "optimized", res.parameters["policy"],
                                res.parameters["codebook"]))
    return cases


def run_instance(n_modes: int, params: ChannelParams, povm: Povm, energy: float, *, seed: int,
                 reference_points, lambda_grid, n_random: int = 200, n_optimized: int = 2,
                 point_rounds: int = 4, rounds: int = 3, certificate_energies=None,
                 base_points=None, lam_scale: float = 1.0, tol: float = 1e-6,
                 optimize_kw: dict | None = None, threads: int = 1) -> TheoremReport:
    """Separable references, candidate policies and the full check for one (N, channel, POVM, E)."""
    sd_kw = {"rounds": rounds, "point_rounds": point_rounds, "threads": threads}
    sd = optimize_sd_rate(reference_points, lambda_grid, params, povm, energy, **sd_kw)
    control = optimize_sd_rate(reference_points, lambda_grid, params, povm, 0.5 * energy, **sd_kw)
    cert = None
    if certificate_energies is not None:
        cert = concavity_certificate(params, povm, certificate_energies, reference_points, lambda_grid,
                                     tol=tol, rounds=rounds, threads=threads)
    rng = np.random.default_rng(seed)
    cases = build_cases(n_modes, params, povm, energy, sd, rng=rng, n_random=n_random,
                        n_optimized=n_optimized, base_points=base_points, lam_scale=lam_scale,
                        optimize_kw=optimize_kw)
    return theorem_check(n_modes, params, povm, energy, cases, sd_reference=sd, control_reference=control,
                         certificate=cert, tol=tol, threads=threads)


def term_rows(report: TheoremReport) -> list[dict]:
    rows = []
    for c in report.cases:
        for t in c.terms:
            rows.append({"case": c.name, "use": t.use, "history": history_key(t.history),
                         "prob_history": t.prob, "info_nats": t.info, "use_energy": t.energy,
                         "bound_nats": t.bound, "passes": int(t.passes)})
    return rows
