"""Acceptance criteria, one test each, at their stated tolerances and time limits.

Each test appends a PASS/FAIL line that conftest prints in the terminal summary.
"""
import math
import time

import numpy as np
import pytest
import yaml

import conftest
from cohdec import (ChannelParams, CodebookSequence, DisplacedThermal, PassiveUnitary, Povm, apply_interferometer,
                    blahut_arimoto_constrained, commute_channel_unitary_check, compile_policy_to_encoder,
                    kennedy_off_probability, pnr_distribution, simulate_ad, simulate_classical_picture)
from cohdec import cli
from cohdec.adaptive import random_policy
from cohdec.gaussian import random_unitary
from cohdec.measurement import outcome_matrix
from cohdec.rates import concavity_certificate, kennedy_scaling_study
from cohdec.theorem import run_instance

from oracles import PhotonOracle

PURE = ChannelParams.pure_loss(0.8)
REF = np.linspace(-3, 3, 61)
LAM = (np.linspace(-1, 1, 11), [0.0])


def record(num, title, ok, detail, elapsed, limit):
    within = limit is None or elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    budget = f" (limit {limit:g} s)" if limit is not None else ""
    conftest.ACCEPTANCE_LINES.append(f"[{status}] {num}. {title}: {detail}; {elapsed:.1f} s{budget}")
    return ok and within


def test_c1_measurement_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    means = 3 * np.sqrt(rng.uniform(0, 1, 10)) * np.exp(2j * np.pi * rng.uniform(0, 1, 10))
    nbars = np.linspace(0, 2, 5)
    lams = 3 * np.sqrt(rng.uniform(0, 1, 10)) * np.exp(2j * np.pi * rng.uniform(0, 1, 10))
    n_max = 30
    photon_distribution = PhotonOracle()
    worst_off = worst_pnr = worst_tail = worst_complete = 0.0
    for m in means:
        for nb in nbars:
            for lam in lams:
                ref = photon_distribution(m - lam, nb)
                state = DisplacedThermal(m, nb)
                p = pnr_distribution(state, lam, n_max)
                worst_pnr = max(worst_pnr, np.max(np.abs(p[:-1] - ref[:n_max + 1])))
                worst_tail = max(worst_tail, abs(p[-1] - ref[n_max + 1:].sum()))
                worst_off = max(worst_off, abs(kennedy_off_probability(state, lam) - ref[0]))
                for povm in (Povm.kennedy(lam), Povm.pnr(lam, n_max)):
                    row = outcome_matrix(povm, np.array([m]), nb)[0]
                    worst_complete = max(worst_complete, abs(row.sum() - 1.0))
    worst = max(worst_off, worst_pnr, worst_tail)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and worst_complete < 1e-12
    assert record(1, "measurement oracles", ok,
                  f"max oracle error {worst:.2e} (tol 1e-8), completeness {worst_complete:.1e} (tol 1e-12)",
                  elapsed, 10)


def test_c2_z_channel():
    t0 = time.perf_counter()
    res = blahut_arimoto_constrained([0.0, 1.0], ChannelParams.identity(), Povm.kennedy(), 1.0)
    elapsed = time.perf_counter() - t0
    eps = math.exp(-1)
    expected = math.log(1.0 + (1.0 - eps) * eps ** (eps / (1.0 - eps)))
    err = abs(res.rate - expected)
    assert record(2, "Z-channel benchmark", err < 1e-6,
                  f"rate {res.rate:.9f} vs {expected:.9f} nats, error {err:.1e} (tol 1e-6)", elapsed, 1)


def test_c3_picture_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(100):
        n = (2, 3)[k % 2]
        n_msg = int(rng.integers(2, 6))
        amps = rng.normal(size=(n_msg, n)) + 1j * rng.normal(size=(n_msg, n))
        cb = CodebookSequence(amps, rng.dirichlet(np.ones(n_msg)))
        params = ChannelParams.thermal_loss(rng.uniform(0.2, 1.0), rng.uniform(0, 0.5))
        pol = random_policy(n, rng, "kennedy")
        direct = simulate_ad(cb, params, pol)
        assert direct.probs.shape[1] == 2 ** n  # binary outcome per mode
        classical = simulate_classical_picture(cb, params, compile_policy_to_encoder(cb, pol),
                                               pol.povm_schedule())
        worst = max(worst, direct.max_abs_diff(classical))
    elapsed = time.perf_counter() - t0
    assert record(3, "picture equivalence", worst <= 1e-12,
                  f"100 instances, max entrywise difference {worst:.1e} (tol 1e-12)", elapsed, 30)


@pytest.mark.slow
def test_c4_adaptive_bound_harness():
    t0 = time.perf_counter()
    reports = [run_instance(2, PURE, Povm.kennedy(), e, seed=7 + k, reference_points=REF, lambda_grid=LAM,
                            n_random=200, n_optimized=2)
               for k, e in enumerate((0.05, 0.1, 0.5))]
    elapsed = time.perf_counter() - t0
    violations = sum(r.violations for r in reports)
    gap = max(r.best_non_adaptive_gap for r in reports)
    chain = max(r.max_chain_error for r in reports)
    control = all(r.control_flagged for r in reports)
    ok = violations == 0 and gap <= 1e-9 and chain <= 1e-9 and control
    excess = max(max(c.rate for c in r.cases) - r.sd_rate for r in reports)
    assert record(4, "adaptive rate bound harness", ok,
                  f"{sum(len(r.cases) for r in reports)} policies, {violations} violations, "
                  f"max excess over SD {excess:.1e}, best non-adaptive gap {gap:.1e}, chain error {chain:.1e}, "
                  f"negative control flagged {control}", elapsed, 600)


@pytest.mark.slow
def test_c5_concavity_certificate():
    t0 = time.perf_counter()
    cert = concavity_certificate(PURE, Povm.kennedy(), np.linspace(0, 0.5, 11), REF, LAM)
    elapsed = time.perf_counter() - t0
    ok = cert.worst_violation >= -1e-6 and cert.worst_monotonicity >= -1e-9
    assert record(5, "concavity certificate", ok,
                  f"worst midpoint defect {cert.worst_violation:.1e} (tol -1e-6), "
                  f"worst monotonicity step {cert.worst_monotonicity:.1e} (tol -1e-9)", elapsed, 300)


@pytest.mark.slow
def test_c6_kennedy_scaling():
    t0 = time.perf_counter()
    energies = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
    rows = kennedy_scaling_study(energies)
    elapsed = time.perf_counter() - t0
    ratios = np.array([r.rate / (r.energy * math.log(1 / r.energy)) for r in rows])
    increasing = bool(np.all(np.diff(ratios) > 0))
    in_band = bool(np.all((ratios > 0.4) & (ratios < 1.0)))
    e = 1e-3
    floor = e * math.log(1 / e) - 1.5 * e * math.log(math.log(1 / e))
    above = rows[-1].rate > floor
    ok = increasing and in_band and above
    assert record(6, "low-energy on/off scaling", ok,
                  f"ratios {', '.join(f'{x:.4f}' for x in ratios)}; strictly increasing {increasing}, "
                  f"in (0.4, 1.0) {in_band}, R(1e-3) {rows[-1].rate:.6f} > {floor:.6f} {above}",
                  elapsed, 600)


def test_c7_invariance_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    energy_err = 0.0
    for _ in range(1000):
        dim = int(rng.integers(1, 7))
        u = PassiveUnitary(random_unitary(dim, rng))
        means = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        out = apply_interferometer(u, means)
        energy_err = max(energy_err, abs(np.sum(np.abs(out) ** 2) - np.sum(np.abs(means) ** 2)))
    commute_ok = True
    for _ in range(200):
        dim = int(rng.integers(1, 6))
        mu1 = rng.uniform(0, 1.5)
        params = ChannelParams(mu1, abs(1 - mu1 ** 2) + rng.uniform(0, 1))
        means = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        rep = commute_channel_unitary_check(params, PassiveUnitary(random_unitary(dim, rng)), means, tol=1e-12)
        commute_ok &= bool(rep["equal"])
    shift_err = 0.0
    for _ in range(200):
        lam = complex(*rng.normal(size=2))
        shift = complex(*rng.normal(size=2))
        pts = rng.normal(size=4) + 1j * rng.normal(size=4)
        nbar = rng.uniform(0, 1)
        for povm in (Povm.kennedy(lam), Povm.pnr(lam, 8), Povm.homodyne(rng.uniform(0, math.pi), (-0.5, 0.0, 0.7))):
            a = outcome_matrix(povm, pts, nbar)
            b = outcome_matrix(povm.displaced(shift), pts + shift, nbar)
            shift_err = max(shift_err, np.max(np.abs(a - b)))
    refine_worst = math.inf
    for _ in range(20):
        params = ChannelParams.thermal_loss(rng.uniform(0.3, 1), rng.uniform(0, 0.5))
        povm = Povm.kennedy(complex(rng.uniform(-1, 1), 0))
        coarse = np.linspace(-2, 2, 5)
        fine = np.linspace(-2, 2, 9)  # contains the coarse grid
        e = rng.uniform(0.1, 1.0)
        small = blahut_arimoto_constrained(coarse, params, povm, e)
        big = blahut_arimoto_constrained(fine, params, povm, e)
        refine_worst = min(refine_worst, big.rate - small.rate)
    elapsed = time.perf_counter() - t0
    ok = energy_err <= 1e-12 and commute_ok and shift_err <= 1e-12 and refine_worst >= -1e-12
    assert record(7, "invariance suite", ok,
                  f"energy {energy_err:.1e}, commutation {commute_ok}, shift {shift_err:.1e}, "
                  f"refinement min gain {refine_worst:.1e} (tol -1e-12)", elapsed, 60)


def test_c8_cli_determinism(tmp_path):
    t0 = time.perf_counter()
    raw = {"experiment": "theorem-check", "seed": 7, "channel": {"eta": 0.8}, "povm": {"family": "kennedy"},
           "energy": 0.1, "n_modes": 2,
           "grids": {"points": {"re": {"linspace": [-3, 3, 31]}}, "lambda": {"re": {"linspace": [-1, 1, 11]}}},
           "theorem": {"n_random": 20, "n_optimized": 1, "point_rounds": 1, "certificate_points": 0}}
    p = tmp_path / "theorem.yaml"
    p.write_text(yaml.safe_dump(raw))
    codes, outs = [], []
    for name in ("a", "b"):
        out = tmp_path / name
        codes.append(cli.main(["theorem-check", "--config", str(p), "--out", str(out)]))
        outs.append(out)
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
               for f in ("theorem_check.csv", "theorem_terms.csv"))
    elapsed = time.perf_counter() - t0
    ok = same and codes == [0, 0]
    assert record(8, "CLI determinism", ok, f"exit codes {codes}, CSV bit-identical {same}", elapsed, None)
