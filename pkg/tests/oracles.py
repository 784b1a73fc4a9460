"""Independent reference computations used as test oracles.

Nothing here calls the package's closed forms: photon statistics come from
a truncated Fock-space matrix exponential, capacities from textbook
formulas or brute-force scans.
"""
import math

import numpy as np
from scipy.linalg import expm

FOCK_DIM = 200


def annihilation(dim):
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def displacement_matrix(d, dim=FOCK_DIM, pad=60):
    """D(d) = exp(d a^dag - d* a) on a truncated space, returned on the first ``dim`` levels.

    The exponential is taken in a larger space so truncation only affects
    the discarded levels.
    """
    a = annihilation(dim + pad)
    return expm(d * a.conj().T - np.conj(d) * a)[:dim, :dim]


def thermal_populations(nbar, dim=FOCK_DIM):
    n = np.arange(dim)
    if nbar == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    return nbar ** n / (1.0 + nbar) ** (n + 1)


def photon_distribution(d, nbar, dim=FOCK_DIM):
    """Photon-number law of a thermal state with occupation ``nbar`` displaced by ``d``."""
    dm = displacement_matrix(d, dim)
    return (np.abs(dm) ** 2) @ thermal_populations(nbar, dim)


class PhotonOracle:
    """Batch version of ``photon_distribution`` for many displacements.

    |<m|D(d)|n>|^2 depends only on |d|, and D(r) = exp(r (a^dag - a)) with a
    real antisymmetric generator, so one eigendecomposition serves every r.
    """

    def __init__(self, dim=FOCK_DIM, pad=60):
        a = annihilation(dim + pad).real
        w, v = np.linalg.eigh(1j * (a.T - a))  # Hermitian: a^dag - a = -i H
        self.w, self.v, self.dim = w, v, dim

    def __call__(self, d, nbar):
        vr = self.v[:self.dim]
        dm = (vr * np.exp(-1j * abs(d) * self.w)) @ vr.conj().T
        return (np.abs(dm) ** 2) @ thermal_populations(nbar, self.dim)


def binary_entropy(p):
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def z_channel_capacity(eps):
    """Capacity (nats) of the Z-channel: input 0 is noiseless, input 1 reads as 0 with probability eps."""
    return math.log(1.0 + (1.0 - eps) * eps ** (eps / (1.0 - eps)))


def z_channel_scan(eps, step=1e-6):
    """max over P(1) on a uniform grid of the mutual information of the Z-channel."""
    p = np.arange(0.0, 1.0 + step / 2, step)
    q1 = p * (1 - eps)  # P(output 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(q1 > 0, q1 * np.log(q1), 0) - np.where(q1 < 1, (1 - q1) * np.log(1 - q1), 0)
    mi = h - p * binary_entropy(eps)
    k = int(np.argmax(mi))
    return float(mi[k]), float(p[k])


def monte_carlo_kennedy_off(beta, lam, nbar, n_samples, rng):
    """Identity channel followed by a complex Gaussian displacement with E|xi|^2 = nbar."""
    xi = math.sqrt(nbar / 2) * (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples))
    vals = np.exp(-np.abs(beta + xi - lam) ** 2)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples))
