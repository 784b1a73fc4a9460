import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohdec import (ChannelParams, ParameterDomainError, Povm, blahut_arimoto_constrained, concavity_certificate,
                    kennedy_scaling_study, optimize_sd_rate)
from cohdec.rates import constrained_capacity, grid_search, kennedy_leading_order, midpoint_concavity

from oracles import binary_entropy, z_channel_capacity, z_channel_scan

PURE = ChannelParams.pure_loss(0.8)


def test_zero_energy_gives_zero_rate():
    res = blahut_arimoto_constrained(np.linspace(-2, 2, 9), PURE, Povm.kennedy(), 0.0)
    assert res.rate < 1e-12
    assert res.prior[4] > 1 - 1e-9
    assert optimize_sd_rate(np.linspace(-2, 2, 9), np.linspace(-1, 1, 5), PURE, Povm.kennedy(), 0.0).rate < 1e-12


def test_z_channel_closed_form_and_scan():
    eps = math.exp(-1)
    res = blahut_arimoto_constrained([0.0, 1.0], ChannelParams.identity(), Povm.kennedy(), 1.0)
    scan, p1 = z_channel_scan(eps)
    assert abs(res.rate - z_channel_capacity(eps)) < 1e-9
    assert abs(res.rate - scan) < 1e-9
    assert abs(res.prior[1] - p1) < 2e-6
    assert abs(res.rate - 0.3024902) < 1e-7


def test_z_channel_energy_constraint_binds():
    # below the optimal usage the constrained optimum spends exactly E
    e = 0.1
    res = blahut_arimoto_constrained([0.0, 1.0], ChannelParams.identity(), Povm.kennedy(), e)
    q1 = e * (1 - math.exp(-1))
    expected = binary_entropy(q1) - e * binary_entropy(math.exp(-1))
    assert abs(res.rate - expected) < 1e-10
    assert abs(res.energy_used - e) < 1e-9


def test_symmetric_helstrom_prior_is_uniform():
    a = 0.6
    res = blahut_arimoto_constrained([a, -a], ChannelParams.identity(), Povm.helstrom_binary(a, -a), 1.0)
    assert np.max(np.abs(res.prior - 0.5)) < 1e-6
    p_err = (1 - math.sqrt(1 - math.exp(-4 * a * a))) / 2
    assert abs(res.rate - (math.log(2) - binary_entropy(p_err))) < 1e-10


def test_zero_channel_has_zero_capacity():
    res = blahut_arimoto_constrained(np.linspace(-2, 2, 5), ChannelParams.pure_loss(0.0), Povm.kennedy(0.3), 1.0)
    assert res.rate < 1e-12


def test_dual_bound_and_ascent_diagnostics():
    res = blahut_arimoto_constrained(np.linspace(-3, 3, 31), PURE, Povm.pnr(0.2, 6), 0.4)
    d = res.diagnostics
    assert 0 <= d["duality_gap"] < 1e-9
    assert d["upper_bound"] >= res.rate
    assert d["min_increment"] >= -1e-12
    assert d["energy_used"] <= 0.4 + 1e-9


def test_bad_inputs():
    with pytest.raises(ParameterDomainError):
        blahut_arimoto_constrained([], PURE, Povm.kennedy(), 0.1)
    with pytest.raises(ParameterDomainError):
        blahut_arimoto_constrained([1.0, 2.0], PURE, Povm.kennedy(), 0.5)
    with pytest.raises(ParameterDomainError):
        blahut_arimoto_constrained([0, 1], PURE, Povm.kennedy(), -0.1)


def test_duplicate_rows_do_not_change_capacity():
    rng = np.random.default_rng(0)
    w = rng.dirichlet(np.ones(4), size=5)
    cost = rng.uniform(0, 2, 5)
    base = constrained_capacity(w, cost, 0.5)
    dup = constrained_capacity(np.vstack([w, w[:2]]), np.concatenate([cost, cost[:2] + 0.3]), 0.5)
    assert abs(base.rate - dup.rate) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.5))
def test_capacity_is_certified_and_monotone_in_grid(seed, energy):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2, 2, 8) + 1j * rng.uniform(-1, 1, 8)
    pts[0] = 0.0  # keeps every energy feasible
    params = ChannelParams.thermal_loss(rng.uniform(0.3, 1), rng.uniform(0, 0.5))
    povm = Povm.kennedy(complex(rng.uniform(-1, 1), rng.uniform(-1, 1)))
    small = blahut_arimoto_constrained(pts[:5], params, povm, energy)
    big = blahut_arimoto_constrained(pts, params, povm, energy)
    for r in (small, big):
        assert r.diagnostics["duality_gap"] < 1e-9
        assert r.diagnostics["min_increment"] >= -1e-12
        assert r.energy_used <= energy + 1e-9
    # the larger grid may only help; both values are certified to within the gap
    assert big.diagnostics["upper_bound"] >= small.rate - 1e-12
    assert big.rate >= small.rate - 1e-9


def test_grid_search_rounds_never_decrease():
    f = lambda z: (-abs(z - (0.313 - 0.271j)) ** 2, None)
    lam, val, _, trace = grid_search(f, np.linspace(-1, 1, 5), np.linspace(-1, 1, 5), rounds=4)
    assert all(t.get("improvement", 0.0) >= 0 for t in trace)
    assert abs(lam - (0.313 - 0.271j)) < 0.02


def test_grid_search_tie_break_prefers_small_lambda():
    lam, _, _, _ = grid_search(lambda z: (0.0, None), np.linspace(-1, 1, 5), [0.0], rounds=0)
    assert lam == 0


def test_point_refinement_never_decreases():
    res = optimize_sd_rate(np.linspace(-2, 2, 21), np.linspace(-1, 1, 5), PURE, Povm.kennedy(), 0.2,
                           rounds=2, point_rounds=3)
    assert all(t["improvement"] >= -1e-12 for t in res.diagnostics["point_trace"])
    coarse = optimize_sd_rate(np.linspace(-2, 2, 21), np.linspace(-1, 1, 5), PURE, Povm.kennedy(), 0.2, rounds=2)
    assert res.rate >= coarse.rate - 1e-12


def test_displacement_helps_on_off_keying():
    e = 1e-3
    pts = [0.0, 2.5]
    plain = blahut_arimoto_constrained(pts, PURE, Povm.kennedy(), e)
    best = optimize_sd_rate(pts, np.linspace(-0.3, 0.3, 7), PURE, Povm.kennedy(), e)
    assert best.rate - plain.rate >= -1e-12


def test_homodyne_rate_increases_with_energy():
    pts = np.linspace(-2, 2, 17)
    rates = [optimize_sd_rate(pts, [0.0], ChannelParams.identity(), Povm.homodyne(), e).rate
             for e in (0.05, 0.1, 0.2, 0.4, 0.8)]
    assert np.all(np.isfinite(rates))
    assert np.all(np.diff(rates) > 0)


def test_concavity_certificate_zero_channel():
    cert = concavity_certificate(ChannelParams.pure_loss(0.0), Povm.kennedy(), np.linspace(0, 0.5, 5),
                                 np.linspace(-1, 1, 5), np.linspace(-1, 1, 3))
    assert np.all(cert.values < 1e-12)
    assert cert.passes and cert.monotone


def test_midpoint_concavity_detects_convexity():
    e = np.linspace(0, 1, 5)
    assert midpoint_concavity(e, np.sqrt(e)) > 0
    assert midpoint_concavity(e, e ** 2) < 0


def test_leading_order_terms():
    e = 1e-3
    assert abs(kennedy_leading_order(e) - (e * math.log(1e3) - e * math.log(math.log(1e3)))) < 1e-18


@pytest.mark.slow
def test_scaling_rows_below_leading_term():
    rows = kennedy_scaling_study([1e-2, 1e-4], rounds=2)
    for r in rows:
        assert 0 < r.rate <= r.energy * math.log(1 / r.energy)
        assert abs(r.ratio - r.rate / (r.energy * math.log(1 / r.energy))) < 1e-15
        assert r.warning == ""
    with pytest.raises(ParameterDomainError):
        kennedy_scaling_study([0.0])
