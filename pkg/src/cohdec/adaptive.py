"""Exact simulation of N-mode adaptive decoders and of the equivalent feedback-encoder picture.

Receiver picture: the channel acts on every mode, then for ``j = 1..N`` a
passive unitary chosen from the outcome history acts on the unmeasured
modes and the first unmeasured mode is measured destructively.

Classical picture: the sender applies the same unitaries to the input
amplitudes (using the fed-back outcomes), transmits one amplitude per use,
and each use is a programmable channel whose measurement is chosen from the
history.  Both pictures produce the conditional table ``P(y_1..y_N | w)``.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import MissingBranchError, SearchSpaceError, ShapeError, ValidationError
from .gaussian import ChannelParams, PassiveUnitary, random_unitary
from .kernels import mutual_information_kernel
from .measurement import Povm, channel_matrix, outcome_matrix

MAX_LEAVES = 10**6

History = tuple


def history_key(history: History) -> str:
    return ".".join(str(y) for y in history)


def parse_history(key: str) -> History:
    return tuple(int(t) for t in key.split(".")) if key else ()


@dataclass(frozen=True)
class CodebookSequence:
    """Messages ``w`` with amplitude sequences ``amplitudes[w]`` and priors ``priors[w]``."""

    amplitudes: np.ndarray
    priors: np.ndarray

    def __post_init__(self):
        amps = np.atleast_2d(np.asarray(self.amplitudes, dtype=complex))
        priors = np.asarray(self.priors, dtype=float).ravel()
        if amps.shape[0] != priors.size:
            raise ShapeError(f"{amps.shape[0]} messages but {priors.size} priors")
        if np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-12:
            raise ValidationError("codebook priors must be nonnegative and sum to 1")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "priors", priors)

    @property
    def n_modes(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def n_messages(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def message_energies(self) -> np.ndarray:
        """Energy per mode of each message."""
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1) / self.n_modes

    @property
    def energy_per_mode(self) -> float:
        return float(self.priors @ self.message_energies)

    def satisfies_energy(self, energy: float, tol: float = 1e-9) -> bool:
        return self.energy_per_mode <= energy + tol

    def with_priors(self, priors) -> "CodebookSequence":
        return CodebookSequence(self.amplitudes, priors)

    @classmethod
    def product(cls, points, n_modes: int, priors=None) -> "CodebookSequence":
        """All sequences over ``points`` in lexicographic order.

        ``priors`` is either None (uniform), a per-point distribution used
        i.i.d. on every mode, or a full distribution over the sequences.
        """
        points = np.asarray(points, dtype=complex).ravel()
        idx = np.array(list(itertools.product(range(points.size), repeat=n_modes)), dtype=int)
        idx = idx.reshape(-1, n_modes)
        amps = points[idx]
        if priors is None:
            pr = np.full(len(idx), 1.0 / len(idx))
        else:
            priors = np.asarray(priors, dtype=float).ravel()
            if priors.size == points.size:
                pr = np.prod(priors[idx], axis=1)
                pr /= pr.sum()
            elif priors.size == len(idx):
                pr = priors
            else:
                raise ShapeError("priors must be per-point or per-sequence")
        return cls(amps, pr)


@dataclass(frozen=True)
class PolicyNode:
    unitary: PassiveUnitary
    povm: Povm


@dataclass
class AdaptivePolicy:
    """Outcome-history-indexed choices of unitary (on the unmeasured modes) and measurement."""

    n_modes: int
    nodes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        for h, node in self.nodes.items():
            if not isinstance(node, PolicyNode):
                raise ValidationError(f"node {history_key(h)!r} is not a PolicyNode")
            if node.unitary.dim != self.n_modes - len(h):
                raise ShapeError(
                    f"node {history_key(h)!r}: unitary acts on {node.unitary.dim} modes, "
                    f"expected {self.n_modes - len(h)}"
                )
        for h in self.reachable_histories():
            if h not in self.nodes:
                raise MissingBranchError(f"policy has no branch for history {history_key(h)!r}")
        if self.n_leaves() > MAX_LEAVES:
            raise SearchSpaceError(f"outcome tree has {self.n_leaves()} leaves (> {MAX_LEAVES})")

    def reachable_histories(self) -> Iterator[History]:
        stack = [()]
        while stack:
            h = stack.pop()
            yield h
            node = self.nodes.get(h)
            if node is None or len(h) + 1 >= self.n_modes:
                continue
            for y in reversed(range(node.povm.n_outcomes)):
                stack.append(h + (y,))

    def n_leaves(self) -> int:
        def count(h):
            node = self.nodes.get(h)
            if node is None:
                return 0
            if len(h) + 1 == self.n_modes:
                return node.povm.n_outcomes
            return sum(count(h + (y,)) for y in range(node.povm.n_outcomes))
        return count(())

    def __getitem__(self, history: History) -> PolicyNode:
        try:
            return self.nodes[tuple(history)]
        except KeyError:
            raise MissingBranchError(f"policy has no branch for history {history_key(history)!r}") from None

    def povm_schedule(self) -> dict:
        return {h: node.povm for h, node in self.nodes.items()}

    @classmethod
    def build(cls, n_modes: int, choose: Callable[[History, int], tuple]) -> "AdaptivePolicy":
        """Grow a complete tree; ``choose(history, dim)`` returns ``(unitary, povm)``."""
        nodes = {}
        stack = [()]
        while stack:
            h = stack.pop()
            u, povm = choose(h, n_modes - len(h))
            if not isinstance(u, PassiveUnitary):
                u = PassiveUnitary(u)
            nodes[h] = PolicyNode(u, povm)
            if len(h) + 1 < n_modes:
                stack.extend(h + (y,) for y in range(povm.n_outcomes))
        return cls(n_modes, nodes)

    @classmethod
    def non_adaptive(cls, n_modes: int, povm: Povm) -> "AdaptivePolicy":
        return cls.build(n_modes, lambda h, d: (PassiveUnitary.identity(d), povm))

    def to_dict(self) -> dict:
        out = {}
        for h, node in sorted(self.nodes.items()):
            u = node.unitary.matrix
            out[history_key(h)] = {
                "unitary_re": u.real.tolist(),
                "unitary_im": u.imag.tolist(),
                "povm": node.povm.to_dict(),
            }
        return {"n_modes": self.n_modes, "nodes": out}

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptivePolicy":
        nodes = {}
        for key, nd in d["nodes"].items():
            u = np.asarray(nd["unitary_re"], dtype=float) + 1j * np.asarray(nd["unitary_im"], dtype=float)
            nodes[parse_history(key)] = PolicyNode(PassiveUnitary(u), Povm.from_dict(nd["povm"]))
        return cls(int(d["n_modes"]), nodes)


def random_policy(n_modes: int, rng: np.random.Generator, family: str = "kennedy",
                  lam_scale: float = 1.0, n_max: int = 2) -> AdaptivePolicy:
    """Haar unitaries and random complex displacements at every node."""
    def choose(h, d):
        lam = lam_scale * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
        if family == "kennedy":
            povm = Povm.kennedy(lam)
        elif family == "pnr":
            povm = Povm.pnr(lam, n_max)
        elif family == "homodyne":
            povm = Povm.homodyne(rng.uniform(0, 2 * np.pi), (float(lam.real),))
        else:
            raise ValidationError(f"random policies are not defined for family {family!r}")
        return random_unitary(d, rng), povm

    # draw in a fixed (depth-first, outcome-ordered) sequence for reproducibility
    return AdaptivePolicy.build(n_modes, choose)


@dataclass
class FeedbackEncoder:
    """``betas[h][w]``: amplitude sent at use ``len(h) + 1`` for message ``w`` after history ``h``."""

    n_modes: int
    betas: dict
    source_energy: np.ndarray | None = None

    def __getitem__(self, history: History) -> np.ndarray:
        try:
            return self.betas[tuple(history)]
        except KeyError:
            raise MissingBranchError(f"encoder has no branch for history {history_key(history)!r}") from None

    def beta(self, message: int, history: History) -> complex:
        return complex(self[history][message])

    @classmethod
    def constant(cls, codebook: CodebookSequence, schedule: dict) -> "FeedbackEncoder":
        """Encoder that ignores feedback: ``beta_j = alpha_j(w)``."""
        betas = {h: codebook.amplitudes[:, len(h)].copy() for h in schedule}
        return cls(codebook.n_modes, betas, np.sum(np.abs(codebook.amplitudes) ** 2, axis=1))

    def energy_audit(self, schedule: dict, tol: float = 1e-12) -> float:
        """Max over messages and complete histories of ``|sum_j |beta_j|^2 - source energy|``."""
        if self.source_energy is None:
            return 0.0
        worst = 0.0

        def walk(h, acc):
            nonlocal worst
            acc = acc + np.abs(self[h]) ** 2
            if len(h) + 1 == self.n_modes:
                worst = max(worst, float(np.max(np.abs(acc - self.source_energy))))
                return
            for y in range(schedule[h].n_outcomes):
                walk(h + (y,), acc)

        walk((), np.zeros_like(self.source_energy))
        return worst


@dataclass
class JointTable:
    """``probs[w, k]`` = P(outcome history ``histories[k]`` | message ``w``)."""

    histories: list
    probs: np.ndarray

    def to_csv(self, path, message_ids=None):
        ids = range(self.probs.shape[0]) if message_ids is None else message_ids
        with open(path, "w", newline="") as f:
            wr = csv.writer(f, lineterminator="\n")
            wr.writerow(["message_id", "outcome", "probability"])
            for w, row in zip(ids, self.probs):
                for h, p in zip(self.histories, row):
                    wr.writerow([w, history_key(h), f"{p:.17g}"])

    def max_abs_diff(self, other: "JointTable") -> float:
        if self.histories != other.histories or self.probs.shape != other.probs.shape:
            raise ShapeError("joint tables have different outcome structure")
        return float(np.max(np.abs(self.probs - other.probs)))


def _check_leaves(policy_like_schedule, n_modes):
    count = 0
    stack = [()]
    while stack:
        h = stack.pop()
        if h not in policy_like_schedule:
            raise MissingBranchError(f"no measurement scheduled for history {history_key(h)!r}")
        k = policy_like_schedule[h].n_outcomes
        if len(h) + 1 == n_modes:
            count += k
            if count > MAX_LEAVES:
                raise SearchSpaceError(f"outcome tree exceeds {MAX_LEAVES} leaves")
        else:
            stack.extend(h + (y,) for y in range(k))


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def simulate_ad(codebook: CodebookSequence, params: ChannelParams, policy: AdaptivePolicy) -> JointTable:
    """Receiver-side recursion on the mean vectors of the unmeasured modes."""
    n = codebook.n_modes
    if policy.n_modes != n:
        raise ShapeError(f"policy is for {policy.n_modes} modes, codebook has {n}")
    nbar = params.nbar
    histories, columns = [], []

    def walk(h, means, logp):
        node = policy[h]
        means = node.unitary.apply(means)
        probs = outcome_matrix(node.povm, means[:, 0], nbar)
        rest = means[:, 1:]
        for y in range(probs.shape[1]):
            lp = logp + _log(probs[:, y])
            if len(h) + 1 == n:
                histories.append(h + (y,))
                columns.append(np.exp(lp))
            else:
                walk(h + (y,), rest, lp)

    walk((), params.mu1 * codebook.amplitudes, np.zeros(codebook.n_messages))
    return JointTable(histories, np.stack(columns, axis=1))


def compile_policy_to_encoder(codebook: CodebookSequence, policy: AdaptivePolicy,
                              audit_tol: float = 1e-12) -> FeedbackEncoder:
    """Move every unitary to the sender: ``beta_j(w, h)`` is the first entry of the rotated remainder."""
    if policy.n_modes != codebook.n_modes:
        raise ShapeError(f"policy is for {policy.n_modes} modes, codebook has {codebook.n_modes}")
    n = codebook.n_modes
    betas = {}

    def walk(h, amps):
        node = policy[h]
        amps = node.unitary.apply(amps)
        betas[h] = amps[:, 0].copy()
        if len(h) + 1 < n:
            for y in range(node.povm.n_outcomes):
                walk(h + (y,), amps[:, 1:])

    walk((), codebook.amplitudes)
    enc = FeedbackEncoder(n, betas, np.sum(np.abs(codebook.amplitudes) ** 2, axis=1))
    err = enc.energy_audit(policy.povm_schedule())
    scale = max(1.0, float(np.max(enc.source_energy, initial=0.0)))
    if err > audit_tol * scale:
        raise ValidationError(f"compiled encoder violates energy conservation by {err:.3e}")
    return enc


def simulate_classical_picture(codebook: CodebookSequence, params: ChannelParams,
                               encoder: FeedbackEncoder, schedule: dict) -> JointTable:
    """Sender-side recursion: one programmable-channel use per mode."""
    n = encoder.n_modes
    _check_leaves(schedule, n)
    histories, columns = [], []

    def walk(h, logp):
        probs = channel_matrix(encoder[h], params, schedule[h])
        for y in range(probs.shape[1]):
            lp = logp + _log(probs[:, y])
            if len(h) + 1 == n:
                histories.append(h + (y,))
                columns.append(np.exp(lp))
            else:
                walk(h + (y,), lp)

    walk((), np.zeros(codebook.n_messages))
    return JointTable(histories, np.stack(columns, axis=1))


def mutual_information(prior, table, tol: float = 1e-9) -> float:
    """I(X:Y) in nats for prior ``p(x)`` and row-stochastic ``table[x, y]``."""
    prior = np.asarray(prior, dtype=float).ravel()
    table = np.asarray(getattr(table, "probs", table), dtype=float)
    if table.ndim != 2 or table.shape[0] != prior.size:
        raise ShapeError(f"prior of size {prior.size} does not match table of shape {table.shape}")
    if np.any(prior < 0) or abs(prior.sum() - 1.0) > tol:
        raise ValidationError("prior must be a probability vector")
    if np.any(table < 0) or np.max(np.abs(table.sum(axis=1) - 1.0), initial=0.0) > tol:
        raise ValidationError("conditional table rows must be probability distributions")
    return max(0.0, mutual_information_kernel(prior, table))


@dataclass
class ChainTerm:
    use: int  # 1-based channel use
    history: History
    prob_history: float
    info: float  # I(B_j : Y_j | Y_(1,j-1) = history), nats
    energy: float  # E_j(history) = E[|beta_j|^2 | history]
    povm: Povm
    posterior: np.ndarray = field(repr=False)
    betas: np.ndarray = field(repr=False)


def chain_rule_terms(codebook: CodebookSequence, params: ChannelParams,
                     encoder: FeedbackEncoder, schedule: dict) -> list[ChainTerm]:
    """Per-history terms of ``I(W:Y) = sum_j sum_h P(h) I(B_j:Y_j | h)``."""
    n = encoder.n_modes
    terms = []

    def walk(h, joint):
        ph = float(joint.sum())
        if ph <= 0.0:
            return
        post = joint / ph
        betas = encoder[h]
        w = channel_matrix(betas, params, schedule[h])
        info = max(0.0, mutual_information_kernel(post, w))
        energy = float(post @ np.abs(betas) ** 2)
        terms.append(ChainTerm(len(h) + 1, h, ph, info, energy, schedule[h], post, betas))
        if len(h) + 1 < n:
            for y in range(w.shape[1]):
                walk(h + (y,), joint * w[:, y])

    walk((), codebook.priors.copy())
    return terms
