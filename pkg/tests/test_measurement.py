import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from cohdec import (ChannelParams, DisplacedThermal, ParameterDomainError, Povm, UnsupportedHypothesisError,
                    helstrom_binary_distribution, homodyne_binned_distribution, kennedy_off_probability,
                    outcome_distribution, pnr_distribution, programmable_channel_prob)
from cohdec.measurement import channel_matrix, default_homodyne_edges, helstrom_error_probability, outcome_matrix

from oracles import displacement_matrix, photon_distribution


def test_kennedy_examples():
    assert kennedy_off_probability(DisplacedThermal(0j, 0.0), 0j) == 1.0
    assert kennedy_off_probability(DisplacedThermal(1.3 + 0.4j, 0.0), 1.3 + 0.4j) == 1.0
    vac = displacement_matrix(1.0, dim=64)[0, 0]
    assert abs(kennedy_off_probability(DisplacedThermal(1.0, 0.0), 0j) - abs(vac) ** 2) < 1e-12
    assert abs(kennedy_off_probability(DisplacedThermal(0j, 1.0), 0j) - 0.5) < 1e-15


def test_pnr_examples():
    p = pnr_distribution(DisplacedThermal(0j, 0.0), 0j, 5)
    assert p[0] == 1.0 and np.all(p[1:] == 0)
    p = pnr_distribution(DisplacedThermal(math.sqrt(2), 0.0), 0j, 5)
    assert abs(p[2] - 2 * math.exp(-2)) < 1e-14
    p = pnr_distribution(DisplacedThermal(0j, 0.5), 0j, 5)
    assert abs(p[1] - 0.5 / 2.25) < 1e-15


def test_pnr_rejects_negative_cutoff():
    with pytest.raises(ParameterDomainError):
        pnr_distribution(DisplacedThermal(0j, 0.0), 0j, -1)


@pytest.mark.parametrize("mean, nbar, lam", [(2.5 - 1j, 0.0, 0.3), (1 + 1j, 0.7, -0.5j), (0.2, 2.0, 2.0), (3.0, 1.3, -2.5)])
def test_pnr_matches_fock_oracle(mean, nbar, lam):
    ref = photon_distribution(mean - lam, nbar)
    p = pnr_distribution(DisplacedThermal(mean, nbar), lam, 25)
    assert np.max(np.abs(p[:-1] - ref[:26])) < 1e-10
    assert abs(p[-1] - ref[26:].sum()) < 1e-8
    assert abs(kennedy_off_probability(DisplacedThermal(mean, nbar), lam) - ref[0]) < 1e-10


def test_homodyne_examples():
    vac = DisplacedThermal(0j, 0.0)
    assert np.allclose(homodyne_binned_distribution(vac, 0.0, [-np.inf, 0.0, np.inf]), [0.5, 0.5], atol=1e-15)
    p = homodyne_binned_distribution(DisplacedThermal(1.0, 0.0), 0.0, [0.0])
    assert abs(p[0] - ndtr(-2.0)) < 1e-15
    assert abs(p[0] - 0.0227501319481792) < 1e-12
    assert np.array_equal(homodyne_binned_distribution(DisplacedThermal(2 - 1j, 0.4), 0.3, []), [1.0])
    with pytest.raises(ParameterDomainError):
        homodyne_binned_distribution(vac, 0.0, [1.0, 0.0])


def test_homodyne_quadrature_phase():
    # theta = pi/2 reads the imaginary part
    p = homodyne_binned_distribution(DisplacedThermal(1j, 0.0), math.pi / 2, [0.0])
    assert abs(p[0] - ndtr(-2.0)) < 1e-15


def fock_helstrom_error(g0, g1, q0, q1, dim=60):
    v0 = displacement_matrix(g0, dim)[:, 0]
    v1 = displacement_matrix(g1, dim)[:, 0]
    gam = q0 * np.outer(v0, v0.conj()) - q1 * np.outer(v1, v1.conj())
    return 0.5 * (1.0 - np.sum(np.abs(np.linalg.eigvalsh(gam))))


def test_helstrom_symmetric_example():
    a = 0.5  # |a|^2 = 0.25
    p_ok, p_err = helstrom_binary_distribution(a, -a)
    ov = math.exp(-4 * a * a)  # |<-a|a>|^2
    expected = (1 - math.sqrt(1 - ov)) / 2
    assert abs(p_err - expected) < 1e-12
    assert abs(p_err - 0.1024700) < 1e-7
    assert abs(p_err - fock_helstrom_error(a, -a, 0.5, 0.5)) < 1e-12


@pytest.mark.parametrize("g0, g1, q0", [(0.3, -0.2j, 0.5), (1 + 1j, 0.4, 0.3), (0.0, 0.8, 0.8)])
def test_helstrom_matches_fock_oracle(g0, g1, q0):
    p_ok, p_err = helstrom_binary_distribution(g0, g1, (q0, 1 - q0))
    ref = fock_helstrom_error(g0, g1, q0, 1 - q0)
    assert abs(p_err - ref) < 1e-10
    assert abs(helstrom_error_probability(g0, g1, (q0, 1 - q0)) - ref) < 1e-10


def test_helstrom_limits():
    assert abs(helstrom_binary_distribution(0.4, 0.4, (0.3, 0.7))[1] - 0.3) < 1e-12
    assert helstrom_binary_distribution(8.0, -8.0)[1] < 1e-15
    with pytest.raises(UnsupportedHypothesisError):
        helstrom_binary_distribution(0.4, -0.4, nbar=0.1)
    with pytest.raises(UnsupportedHypothesisError):
        outcome_distribution(Povm.helstrom_binary(0.4, -0.4), DisplacedThermal(0.4, 0.2))


def test_programmable_channel_examples():
    beta = 0.9 - 0.4j
    assert programmable_channel_prob(beta, ChannelParams.identity(), Povm.kennedy(beta))[0] == 1.0
    eta = 0.8
    p = programmable_channel_prob(beta, ChannelParams.pure_loss(eta), Povm.kennedy(0j))
    assert abs(p[0] - math.exp(-eta * abs(beta) ** 2)) < 1e-15


def test_povm_round_trip():
    for povm in [Povm.kennedy(0.3 - 1j), Povm.pnr(0.2, 7), Povm.homodyne(0.4, (-1.0, 0.5)),
                 Povm.helstrom_binary(0.5, -0.5j, (0.4, 0.6))]:
        assert Povm.from_dict(povm.to_dict()) == povm
        assert len(povm.outcome_labels) == povm.n_outcomes


def test_unknown_family_rejected():
    with pytest.raises(ParameterDomainError):
        Povm("dolinar")


def test_default_homodyne_edges():
    edges = default_homodyne_edges(0.0, n_bins=4, n_sd=2.0)
    assert np.allclose(edges, np.linspace(-math.sqrt(2), math.sqrt(2), 5))


means = st.complex_numbers(max_magnitude=4, allow_nan=False, allow_infinity=False)
povms = st.one_of(
    st.builds(Povm.kennedy, means),
    st.builds(Povm.pnr, means, st.integers(0, 30)),
    st.builds(lambda t, e: Povm.homodyne(t, sorted(set(e))), st.floats(0, 2 * math.pi),
              st.lists(st.integers(-40, 40), max_size=5).map(lambda e: [0.1 * k for k in e])),
)


@settings(max_examples=300, deadline=None)
@given(povms, means, st.floats(0, 3))
def test_completeness_and_positivity(povm, mean, nbar):
    p = outcome_distribution(povm, DisplacedThermal(mean, nbar))
    assert p.shape == (povm.n_outcomes,)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) < 1e-12


@settings(max_examples=300, deadline=None)
@given(st.one_of(povms, st.builds(Povm.helstrom_binary, means, means)), means, means)
def test_shift_equivalence(povm, mean, shift):
    # displacing the state and the measurement together leaves the statistics unchanged
    nbar = 0.0 if povm.family == "helstrom-binary" else 0.6
    a = outcome_matrix(povm, np.array([mean]), nbar)
    b = outcome_matrix(povm.displaced(shift), np.array([mean + shift]), nbar)
    assert np.max(np.abs(a - b)) < 1e-12


def test_channel_matrix_rows():
    pts = np.linspace(-2, 2, 9) + 0.5j
    w = channel_matrix(pts, ChannelParams.thermal_loss(0.6, 0.2), Povm.pnr(0.1, 10))
    assert w.shape == (9, 12)
    assert np.allclose(w.sum(axis=1), 1, atol=1e-12)
