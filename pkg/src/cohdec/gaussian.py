"""Coherent inputs, phase-insensitive Gaussian channels and passive interferometers.

Every state reachable from a product of coherent states through identical
phase-insensitive channels and passive unitaries is a product of displaced
thermal states sharing one thermal occupation, so only the complex mean
vector and a scalar ``nbar`` are tracked.

Convention: ``D(a)|0> = |a>`` and ``<b|D(a)|b> = exp(a b* - a* b - |a|^2 / 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterDomainError, ShapeError, ValidationError

UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class ChannelParams:
    """Phase-insensitive channel ``D(a) -> D(mu1 a) exp(-mu2 |a|^2 / 2)``."""

    mu1: float
    mu2: float

    def __post_init__(self):
        mu1, mu2 = float(self.mu1), float(self.mu2)
        if not (np.isfinite(mu1) and np.isfinite(mu2)):
            raise ParameterDomainError(f"channel parameters must be finite, got ({mu1}, {mu2})")
        if mu1 < 0:
            raise ParameterDomainError(f"mu1 must be >= 0, got {mu1}")
        if mu2 < 0:
            raise ParameterDomainError(f"mu2 must be >= 0, got {mu2}")
        # relative slack so the pure-loss family built from floats is accepted
        if mu2 < abs(1.0 - mu1 * mu1) - 1e-12 * max(1.0, mu1 * mu1):
            raise ParameterDomainError(
                f"unphysical channel: mu2={mu2} < |1 - mu1^2|={abs(1 - mu1 * mu1)}"
            )
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "mu2", mu2)

    @classmethod
    def identity(cls) -> "ChannelParams":
        return cls(1.0, 0.0)

    @classmethod
    def pure_loss(cls, eta: float) -> "ChannelParams":
        if not 0.0 <= eta <= 1.0:
            raise ParameterDomainError(f"transmissivity must lie in [0, 1], got {eta}")
        return cls(np.sqrt(eta), 1.0 - eta)

    @classmethod
    def thermal_loss(cls, eta: float, n_env: float) -> "ChannelParams":
        if not 0.0 <= eta <= 1.0 or n_env < 0:
            raise ParameterDomainError(f"bad thermal-loss parameters eta={eta}, n_env={n_env}")
        return cls(np.sqrt(eta), (1.0 - eta) * (2.0 * n_env + 1.0))

    @classmethod
    def additive_noise(cls, n_add: float) -> "ChannelParams":
        if n_add < 0:
            raise ParameterDomainError(f"added noise must be >= 0, got {n_add}")
        return cls(1.0, 2.0 * n_add)

    @property
    def nbar(self) -> float:
        # clip the -1e-16 residue left by sqrt(eta)**2 on the pure-loss boundary
        return max(0.0, (self.mu1 * self.mu1 + self.mu2 - 1.0) / 2.0)

    @property
    def is_amplifier(self) -> bool:
        return self.mu1 > 1.0

    def classify(self) -> str:
        mu1, mu2 = self.mu1, self.mu2
        if mu1 == 1.0 and mu2 == 0.0:
            return "identity channel"
        boundary = abs(1.0 - mu1 * mu1)
        on_boundary = abs(mu2 - boundary) <= 1e-12 * max(1.0, mu1 * mu1)
        if mu1 < 1.0:
            return "pure-loss channel" if on_boundary else "thermal-loss channel"
        if mu1 == 1.0:
            return "additive-noise channel"
        return "quantum-limited amplifier" if on_boundary else "noisy amplifier"


@dataclass(frozen=True)
class DisplacedThermal:
    mean: complex
    nbar: float

    def __post_init__(self):
        if not self.nbar >= 0:
            raise ParameterDomainError(f"nbar must be >= 0, got {self.nbar}")

    @property
    def energy(self) -> float:
        return abs(self.mean) ** 2 + self.nbar


@dataclass(frozen=True)
class Constellation:
    """Discrete single-mode input distribution over coherent amplitudes."""

    points: np.ndarray
    priors: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=complex).ravel()
        priors = np.asarray(self.priors, dtype=float).ravel()
        if points.shape != priors.shape:
            raise ShapeError(f"{points.size} points but {priors.size} priors")
        if points.size == 0:
            raise ParameterDomainError("empty constellation")
        if np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-12:
            raise ValidationError("priors must be nonnegative and sum to 1")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "priors", priors)

    @classmethod
    def uniform(cls, points) -> "Constellation":
        points = np.asarray(points, dtype=complex).ravel()
        return cls(points, np.full(points.size, 1.0 / points.size))

    @property
    def energy(self) -> float:
        return float(self.priors @ np.abs(self.points) ** 2)

    @property
    def centroid(self) -> complex:
        return complex(self.priors @ self.points)

    @property
    def variance(self) -> float:
        return max(0.0, self.energy - abs(self.centroid) ** 2)

    def shifted(self, delta: complex) -> "Constellation":
        return Constellation(self.points + delta, self.priors)


@dataclass(frozen=True)
class PassiveUnitary:
    """Unitary acting on a vector of mode amplitudes."""

    matrix: np.ndarray
    tol: float = field(default=UNITARY_TOL)

    def __post_init__(self):
        u = np.asarray(self.matrix, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ShapeError(f"unitary must be square, got shape {u.shape}")
        err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])), initial=0.0)
        if err > self.tol:
            raise ValidationError(f"matrix is not unitary (max |U^dag U - 1| = {err:.3e})")
        u.setflags(write=False)
        object.__setattr__(self, "matrix", u)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "PassiveUnitary":
        return cls(np.eye(dim, dtype=complex))

    @classmethod
    def from_mesh(cls, dim: int, elements: Sequence[tuple], phases=None) -> "PassiveUnitary":
        """Compile beam-splitter elements ``(i, j, theta, phi)`` applied left to right.

        Element ``(i, j, theta, phi)`` maps ``(a_i, a_j)`` to
        ``(cos t a_i - e^{-i phi} sin t a_j, e^{i phi} sin t a_i + cos t a_j)``.
        Optional ``phases`` are applied last as ``diag(exp(i phases))``.
        """
        u = np.eye(dim, dtype=complex)
        for i, j, theta, phi in elements:
            if not (0 <= i < dim and 0 <= j < dim and i != j):
                raise ShapeError(f"beam splitter modes ({i}, {j}) invalid for {dim} modes")
            u = beam_splitter(dim, i, j, theta, phi) @ u
        if phases is not None:
            phases = np.asarray(phases, dtype=float)
            if phases.shape != (dim,):
                raise ShapeError(f"expected {dim} phases, got shape {phases.shape}")
            u = np.exp(1j * phases)[:, None] * u
        return cls(u)

    def apply(self, means) -> np.ndarray:
        return apply_interferometer(self, means)


def beam_splitter(dim: int, i: int, j: int, theta: float, phi: float) -> np.ndarray:
    b = np.eye(dim, dtype=complex)
    c, s = np.cos(theta), np.sin(theta)
    b[i, i] = c
    b[i, j] = -np.exp(-1j * phi) * s
    b[j, i] = np.exp(1j * phi) * s
    b[j, j] = c
    return b


def mesh_layout(dim: int) -> list[tuple[int, int]]:
    """Mode pairs of a triangular mesh able to reach any ``dim``-mode unitary up to phases."""
    pairs = []
    for top in range(dim - 1, 0, -1):
        for k in range(top):
            pairs.append((k, k + 1))
    return pairs


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def apply_channel(params: ChannelParams, beta: complex) -> DisplacedThermal:
    if not isinstance(params, ChannelParams):
        raise ParameterDomainError("params must be a ChannelParams")
    return DisplacedThermal(complex(params.mu1 * beta), params.nbar)


def apply_interferometer(u: PassiveUnitary, means) -> np.ndarray:
    if not isinstance(u, PassiveUnitary):
        u = PassiveUnitary(u)
    means = np.asarray(means, dtype=complex)
    if means.shape[-1] != u.dim:
        raise ShapeError(f"unitary acts on {u.dim} modes, amplitude vector has {means.shape[-1]}")
    return means @ u.matrix.T


def commute_channel_unitary_check(params: ChannelParams, u: PassiveUnitary, means, tol=1e-12) -> dict:
    """Compare channel-then-unitary against unitary-then-channel on a mean vector."""
    means = np.asarray(means, dtype=complex)
    bob = apply_interferometer(u, params.mu1 * means)
    alice = np.array([apply_channel(params, b).mean for b in apply_interferometer(u, means)])
    nbar_bob = np.full(means.shape, params.nbar)
    nbar_alice = np.array([apply_channel(params, b).nbar for b in means])
    err = float(np.max(np.abs(bob - alice), initial=0.0))
    return {
        "equal": bool(err <= tol and np.array_equal(nbar_bob, nbar_alice)),
        "max_mean_error": err,
        "nbar": params.nbar,
    }
