"""Single-mode destructive measurements and their outcome statistics.

All outcome distributions are evaluated on displaced thermal states, vectorized
over an array of complex means that share one thermal occupation.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .errors import ParameterDomainError, UnsupportedHypothesisError, ValidationError
from .gaussian import ChannelParams, DisplacedThermal, apply_channel

FAMILIES = ("kennedy", "pnr", "homodyne", "helstrom-binary")


@dataclass(frozen=True)
class Povm:
    """A member of one of the catalog POVM families.

    ``displacement`` is used by kennedy and pnr, ``n_max`` by pnr, ``theta``
    and the interior bin ``edges`` by homodyne, ``gammas``/``priors`` by
    helstrom-binary.  Amplitudes refer to the received (post-channel) mode.
    """

    family: str
    displacement: complex = 0j
    n_max: int = 0
    theta: float = 0.0
    edges: tuple = ()
    gammas: tuple = (0j, 0j)
    priors: tuple = (0.5, 0.5)
    _labels: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterDomainError(f"unknown POVM family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "displacement", complex(self.displacement))
        if self.family == "pnr" and int(self.n_max) < 0:
            raise ParameterDomainError(f"n_max must be >= 0, got {self.n_max}")
        if self.family == "homodyne":
            edges = np.asarray(self.edges, dtype=float).ravel()
            edges = edges[np.isfinite(edges)]
            if np.any(np.diff(edges) <= 0):
                raise ParameterDomainError("homodyne bin edges must be strictly increasing")
            object.__setattr__(self, "edges", tuple(edges.tolist()))
        if self.family == "helstrom-binary":
            q = np.asarray(self.priors, dtype=float)
            if q.shape != (2,) or np.any(q < 0) or abs(q.sum() - 1) > 1e-12:
                raise ParameterDomainError(f"helstrom priors must be a 2-point distribution, got {self.priors}")
            object.__setattr__(self, "gammas", tuple(complex(g) for g in self.gammas))
            object.__setattr__(self, "priors", tuple(float(x) for x in q))

    @classmethod
    def kennedy(cls, displacement: complex = 0j) -> "Povm":
        return cls("kennedy", displacement=displacement)

    @classmethod
    def pnr(cls, displacement: complex = 0j, n_max: int = 20) -> "Povm":
        return cls("pnr", displacement=displacement, n_max=int(n_max))

    @classmethod
    def homodyne(cls, theta: float = 0.0, edges=(0.0,)) -> "Povm":
        return cls("homodyne", theta=float(theta), edges=tuple(edges))

    @classmethod
    def helstrom_binary(cls, gamma0: complex, gamma1: complex, priors=(0.5, 0.5)) -> "Povm":
        return cls("helstrom-binary", gammas=(gamma0, gamma1), priors=tuple(priors))

    @property
    def n_outcomes(self) -> int:
        if self.family == "kennedy":
            return 2
        if self.family == "pnr":
            return self.n_max + 2
        if self.family == "homodyne":
            return len(self.edges) + 1
        return 2

    @property
    def outcome_labels(self) -> list[str]:
        if self.family == "kennedy":
            return ["off", "click"]
        if self.family == "pnr":
            return [str(n) for n in range(self.n_max + 1)] + ["overflow"]
        if self.family == "homodyne":
            return [f"bin{k}" for k in range(self.n_outcomes)]
        return ["gamma0", "gamma1"]

    def with_parameter(self, value) -> "Povm":
        """Copy with the family's scalar tuning parameter replaced (displacement or phase)."""
        if self.family in ("kennedy", "pnr"):
            return replace(self, displacement=complex(value))
        if self.family == "homodyne":
            return replace(self, theta=float(np.real(value)))
        raise ParameterDomainError("helstrom-binary has no scalar tuning parameter")

    @property
    def parameter(self):
        if self.family in ("kennedy", "pnr"):
            return self.displacement
        if self.family == "homodyne":
            return self.theta
        return None

    def displaced(self, shift: complex) -> "Povm":
        """The POVM conjugated by a displacement ``D(shift)`` of the measured mode."""
        shift = complex(shift)
        if self.family in ("kennedy", "pnr"):
            return replace(self, displacement=self.displacement + shift)
        if self.family == "homodyne":
            dx = np.sqrt(2.0) * np.real(shift * np.exp(-1j * self.theta))
            return replace(self, edges=tuple((np.asarray(self.edges) + dx).tolist()))
        return replace(self, gammas=tuple(g + shift for g in self.gammas))

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family in ("kennedy", "pnr"):
            d["lambda_re"] = self.displacement.real
            d["lambda_im"] = self.displacement.imag
        if self.family == "pnr":
            d["n_max"] = self.n_max
        if self.family == "homodyne":
            d["theta"] = self.theta
            d["edges"] = list(self.edges)
        if self.family == "helstrom-binary":
            d["gammas"] = [[g.real, g.imag] for g in self.gammas]
            d["priors"] = list(self.priors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Povm":
        family = d["family"]
        lam = complex(d.get("lambda_re", 0.0), d.get("lambda_im", 0.0))
        if family == "kennedy":
            return cls.kennedy(lam)
        if family == "pnr":
            return cls.pnr(lam, int(d.get("n_max", 20)))
        if family == "homodyne":
            return cls.homodyne(float(d.get("theta", 0.0)), d.get("edges", (0.0,)))
        if family == "helstrom-binary":
            g0, g1 = (complex(*g) if isinstance(g, (list, tuple)) else complex(g) for g in d["gammas"])
            return cls.helstrom_binary(g0, g1, d.get("priors", (0.5, 0.5)))
        raise ParameterDomainError(f"unknown POVM family {family!r}")


def kennedy_off_probability(state: DisplacedThermal, lam: complex) -> float:
    return float(_kennedy_off(np.asarray(state.mean), state.nbar, lam))


def _kennedy_off(means, nbar, lam):
    d2 = np.abs(np.asarray(means, dtype=complex) - lam) ** 2
    return np.exp(-d2 / (1.0 + nbar)) / (1.0 + nbar)


def _pnr_matrix(means, nbar, lam, n_max):
    """Rows: photon-number distribution of ``D(-lam)`` applied to each state, plus overflow."""
    u = np.abs(np.asarray(means, dtype=complex) - lam) ** 2 / (1.0 + nbar)
    # s_n = nbar^n L_n(-|d|^2 / (nbar (1 + nbar))); finite as nbar -> 0 where s_n -> u^n / n!
    out = np.empty(u.shape + (n_max + 2,))
    g = 1.0 / (1.0 + nbar)
    s_prev = np.zeros_like(u)
    s = np.ones_like(u)
    pref = np.exp(-u) * g
    out[..., 0] = pref
    for n in range(n_max):
        s_next = (((2 * n + 1) * nbar + u) * s - n * nbar * nbar * s_prev) / (n + 1)
        s_prev, s = s, s_next
        pref = pref * g
        out[..., n + 1] = s * pref
    out[..., -1] = np.clip(1.0 - out[..., :-1].sum(axis=-1), 0.0, None)
    return out


def pnr_distribution(state: DisplacedThermal, lam: complex, n_max: int) -> np.ndarray:
    if n_max < 0:
        raise ParameterDomainError(f"n_max must be >= 0, got {n_max}")
    return _pnr_matrix(np.asarray(state.mean), state.nbar, lam, int(n_max))


def _homodyne_matrix(means, nbar, theta, edges):
    edges = np.asarray(edges, dtype=float)
    x0 = np.sqrt(2.0) * np.real(np.asarray(means, dtype=complex) * np.exp(-1j * theta))
    sd = np.sqrt((1.0 + 2.0 * nbar) / 2.0)
    cdf = ndtr((edges - x0[..., None]) / sd)
    zeros = np.zeros(x0.shape + (1,))
    return np.diff(np.concatenate([zeros, cdf, zeros + 1.0], axis=-1), axis=-1)


def homodyne_binned_distribution(state: DisplacedThermal, theta: float, bins) -> np.ndarray:
    bins = np.asarray(bins, dtype=float).ravel()
    interior = bins[np.isfinite(bins)]
    if np.any(np.diff(interior) <= 0):
        raise ParameterDomainError("homodyne bin edges must be strictly increasing")
    return _homodyne_matrix(np.asarray(state.mean), state.nbar, theta, interior)


def default_homodyne_edges(nbar: float = 0.0, center: float = 0.0, extra: float = 0.0,
                           n_bins: int = 64, n_sd: float = 6.0) -> np.ndarray:
    """Interior edges of ``n_bins`` uniform bins over ``center +- (n_sd sd + extra)``.

    The two unbounded tail bins are implicit, giving ``n_bins + 2`` outcomes.
    """
    half = n_sd * np.sqrt((1.0 + 2.0 * nbar) / 2.0) + extra
    return np.linspace(center - half, center + half, n_bins + 1)


def _overlap(a, b):
    """<a|b> for coherent states."""
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    return np.exp(-0.5 * np.abs(a) ** 2 - 0.5 * np.abs(b) ** 2 + np.conj(a) * b)


def _helstrom_matrix(means, nbar, gammas, priors):
    if nbar > 0:
        raise UnsupportedHypothesisError("helstrom-binary is implemented for pure (nbar = 0) inputs only")
    g0, g1 = gammas
    q0, q1 = priors
    means = np.asarray(means, dtype=complex)
    s = complex(_overlap(g0, g1))
    # 1 - |<g0|g1>|^2 without cancellation
    r = np.sqrt(-np.expm1(-abs(g0 - g1) ** 2))
    if r < 1e-7:
        p0 = np.ones(means.shape) if q0 >= q1 else np.zeros(means.shape)
    else:
        # q0|g0><g0| - q1|g1><g1| written in the orthonormal basis {g0, (g1 - s g0)/r}
        v = np.array([s, r])
        gam = q0 * np.diag([1.0, 0.0]).astype(complex) - q1 * np.outer(v, v.conj())
        _, vecs = np.linalg.eigh(gam)
        c = vecs[:, -1]
        b0 = _overlap(g0, means)
        b1 = (_overlap(g1, means) - np.conj(s) * b0) / r
        p0 = np.abs(np.conj(c[0]) * b0 + np.conj(c[1]) * b1) ** 2
    p0 = np.clip(p0, 0.0, 1.0)
    return np.stack([p0, 1.0 - p0], axis=-1)


def helstrom_error_probability(gamma0: complex, gamma1: complex, priors=(0.5, 0.5)) -> float:
    q0, q1 = priors
    ov = np.exp(-abs(gamma0 - gamma1) ** 2)
    return float((1.0 - np.sqrt(max(0.0, 1.0 - 4.0 * q0 * q1 * ov))) / 2.0)


def helstrom_binary_distribution(gamma0: complex, gamma1: complex, priors=(0.5, 0.5),
                                 sent: int | None = None, nbar: float = 0.0) -> tuple[float, float]:
    """(P(correct), P(error)) of the optimal binary measurement.

    With ``sent`` in {0, 1} the probabilities are conditioned on that
    hypothesis; otherwise they are averaged over the priors.
    """
    if nbar > 0:
        raise UnsupportedHypothesisError("mixed-state Helstrom discrimination is not implemented")
    probs = _helstrom_matrix(np.array([gamma0, gamma1]), 0.0, (gamma0, gamma1), priors)
    correct = np.array([probs[0, 0], probs[1, 1]])
    if sent is None:
        p_ok = float(np.dot(priors, correct))
    elif sent in (0, 1):
        p_ok = float(correct[sent])
    else:
        raise ParameterDomainError(f"sent must be 0 or 1, got {sent}")
    return p_ok, 1.0 - p_ok


def outcome_matrix(povm: Povm, means, nbar: float) -> np.ndarray:
    """Outcome probabilities, shape ``means.shape + (n_outcomes,)``."""
    means = np.asarray(means, dtype=complex)
    if povm.family == "kennedy":
        off = _kennedy_off(means, nbar, povm.displacement)
        return np.stack([off, 1.0 - off], axis=-1)
    if povm.family == "pnr":
        return _pnr_matrix(means, nbar, povm.displacement, povm.n_max)
    if povm.family == "homodyne":
        return _homodyne_matrix(means, nbar, povm.theta, povm.edges)
    return _helstrom_matrix(means, nbar, povm.gammas, povm.priors)


def outcome_distribution(povm: Povm, state: DisplacedThermal) -> np.ndarray:
    return outcome_matrix(povm, np.asarray(state.mean), state.nbar)


def programmable_channel_prob(beta: complex, params: ChannelParams, povm: Povm) -> np.ndarray:
    """P(y | beta, lambda): the measurement applied to the channel output of |beta>."""
    return outcome_distribution(povm, apply_channel(params, beta))


def channel_matrix(points, params: ChannelParams, povm: Povm) -> np.ndarray:
    """Transition matrix ``W[i, y] = P(y | points[i])`` of the programmable channel."""
    w = outcome_matrix(povm, params.mu1 * np.asarray(points, dtype=complex), params.nbar)
    if not np.all(np.isfinite(w)):
        raise ValidationError("non-finite outcome probabilities")
    return w
