"""Per-observation Bayesian labeling over an online-grown label space.

For a new observation at camera ``u`` the node looks at the ``L`` most recent
(observation, belief) pairs from its neighborhood, newest first. Each label
``h`` in the candidate space is scored jointly with a pointer ``l`` naming the
immediate predecessor (``l = 0``: the observation starts a new trajectory):

    weight(h, l) = likelihood(l) * prior(h) * pointer_prior(l | h)

``prior(h)`` picks a neighborhood slot uniformly (or "new") and draws from that
slot's belief; ``pointer_prior`` treats the slot beliefs as independent, so
``l`` is the newest slot labeled ``h``. Summing over ``l`` gives the belief.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .appearance import AppearanceModel, log_appearance_likelihood
from .errors import ConfigError, DegeneratePosteriorError
from .observation import Belief, Label, Observation, normalize
from .spatiotemporal import PathComponent, mixture_components, mixture_likelihood
from .topology import Topology

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InferenceConfig:
    """``None`` for ``memory_depth`` or ``space_cap`` means unbounded."""

    memory_depth: int | None = 20
    space_cap: int | None = 15
    order: int = 0
    lambda0: float = 0.02
    renormalize_truncation: bool = False
    false_alarm_threshold: float | None = None

    def __post_init__(self):
        if self.memory_depth is not None and self.memory_depth < 1:
            raise ConfigError(f"memory depth M must be >= 1, got {self.memory_depth}")
        if self.space_cap is not None and self.space_cap < 2:
            raise ConfigError(f"space cap H must be >= 2, got {self.space_cap}")
        if self.order < 0:
            raise ConfigError(f"neighborhood order q must be >= 0, got {self.order}")
        if not self.lambda0 > 0 or not math.isfinite(self.lambda0):
            raise ConfigError(f"lambda0 must be > 0, got {self.lambda0}")
        if self.false_alarm_threshold is not None and self.false_alarm_threshold < 0:
            raise ConfigError("false_alarm_threshold must be >= 0")


@dataclass(frozen=True)
class NeighborhoodSnapshot:
    """(observation, belief) pairs, newest first."""

    entries: tuple[tuple[Observation, Belief], ...] = ()

    @classmethod
    def from_candidates(
        cls, candidates: Iterable[tuple[Observation, Belief]], memory_depth: int | None
    ) -> "NeighborhoodSnapshot":
        ordered = sorted(candidates, key=lambda e: e[0].event_key(), reverse=True)
        if memory_depth is not None:
            ordered = ordered[:memory_depth]
        return cls(tuple(ordered))

    @property
    def L(self) -> int:
        return len(self.entries)

    @property
    def beliefs(self) -> list[Belief]:
        return [b for _, b in self.entries]


@dataclass(frozen=True, eq=False)
class JointBelief:
    """Normalized table over (label, pointer); column 0 is "new object"."""

    labels: tuple[Label, ...]
    table: np.ndarray
    log_evidence: float
    degenerate: bool = False

    def prob(self, h: Label, l: int) -> float:
        return float(self.table[self.labels.index(h), l])


class PairwiseModel:
    """Log-likelihood of one observation having a given predecessor.

    Path mixtures are built lazily per (source camera, target camera) and
    cached; the object is otherwise immutable.
    """

    def __init__(
        self,
        topo: Topology,
        appearance: AppearanceModel,
        order: int = 0,
        renormalize_truncation: bool = False,
    ):
        self.topo = topo
        self.appearance = appearance
        self.order = order
        self.renormalize = renormalize_truncation
        self._components: dict[tuple[int, int], list[PathComponent]] = {}

    def components(self, src: int, dst: int) -> list[PathComponent]:
        key = (src, dst)
        comps = self._components.get(key)
        if comps is None:
            comps = mixture_components(self.topo, src, dst, self.order)
            self._components[key] = comps
        return comps

    def st_likelihood(self, cur: Observation, prev: Observation) -> float:
        return mixture_likelihood(self.components(prev.camera, cur.camera), cur.st, prev.st, self.renormalize)

    def log_likelihood(self, cur: Observation, prev: Observation) -> float:
        st = self.st_likelihood(cur, prev)
        if st <= 0.0:
            return -math.inf
        return math.log(st) + log_appearance_likelihood(
            self.appearance, cur.histogram, cur.camera, prev.histogram, prev.camera
        )


def likelihood_vector(
    y_cur: Observation, snapshot: NeighborhoodSnapshot, model: PairwiseModel, lambda0: float
) -> np.ndarray:
    """Log-likelihoods for pointer values ``0..L``."""
    out = np.empty(snapshot.L + 1)
    out[0] = math.log(lambda0)
    for l, (prev, _) in enumerate(snapshot.entries, 1):
        out[l] = model.log_likelihood(y_cur, prev)
    return out


def sampling_space(own_label: Label, snapshot: NeighborhoodSnapshot) -> list[Label]:
    """The observation's own label plus every label any snapshot belief supports."""
    space = {own_label}
    for _, b in snapshot.entries:
        space.update(b.labels)
    return sorted(space)


def label_prior(own_label: Label, snapshot: NeighborhoodSnapshot) -> Belief:
    labels, P = support_matrix(own_label, snapshot)
    return Belief(labels, _label_prior(labels.index(own_label), P))


def pointer_prior(h: Label, snapshot: NeighborhoodSnapshot) -> np.ndarray:
    """P(pointer = l | label = h), l = 0..L, with independent slot beliefs."""
    out = np.zeros(snapshot.L + 1)
    none_before = 1.0
    for l, (_, b) in enumerate(snapshot.entries, 1):
        p = b.prob(h)
        out[l] = p * none_before
        none_before *= 1.0 - p
    out[0] = none_before
    return out


def support_matrix(own_label: Label, snapshot: NeighborhoodSnapshot) -> tuple[list[Label], np.ndarray]:
    """Candidate labels (sorted) and the matrix ``P[h, l] = belief_l(h)``."""
    beliefs = snapshot.beliefs
    label_of = {own_label.key: own_label}
    for b in beliefs:
        label_of.update(zip(b.keys.tolist(), b.labels))
    labels = sorted(label_of.values())
    P = np.zeros((len(labels), len(beliefs)))
    if beliefs:
        keys = np.array([lab.key for lab in labels], dtype=np.int64)
        by_key = np.argsort(keys)
        sorted_keys = keys[by_key]
        for l, b in enumerate(beliefs):
            rows = by_key[np.searchsorted(sorted_keys, b.keys)]
            P[rows, l] = b.probs
    return labels, P


def _label_prior(own_row: int, P: np.ndarray) -> np.ndarray:
    prior = P.sum(axis=1)
    prior[own_row] += 1.0
    return prior / (P.shape[1] + 1)


def _pointer_priors(P: np.ndarray) -> np.ndarray:
    n, L = P.shape
    out = np.empty((n, L + 1))
    if L == 0:
        out[:, 0] = 1.0
        return out
    survive = np.cumprod(1.0 - P, axis=1)
    out[:, 0] = survive[:, -1]
    out[:, 1] = P[:, 0]
    out[:, 2:] = P[:, 1:] * survive[:, :-1]
    return out


def joint_from_loglik(own_label: Label, snapshot: NeighborhoodSnapshot, loglik: np.ndarray) -> JointBelief:
    """Normalized joint over (label, pointer) given pointer log-likelihoods."""
    labels, P = support_matrix(own_label, snapshot)
    own_row = labels.index(own_label)
    finite = loglik[np.isfinite(loglik)]
    shift = float(finite.max()) if finite.size else 0.0
    lik = np.exp(loglik - shift)
    weights = _label_prior(own_row, P)[:, None] * _pointer_priors(P) * lik[None, :]
    total = float(weights.sum())
    if not total > 0 or not math.isfinite(total):
        log.warning("degenerate posterior for %s; declaring a new object", own_label)
        table = np.zeros_like(weights)
        table[own_row, 0] = 1.0
        return JointBelief(tuple(labels), table, -math.inf, degenerate=True)
    return JointBelief(tuple(labels), weights / total, math.log(total) + shift)


def joint_posterior(
    y_cur: Observation, snapshot: NeighborhoodSnapshot, model: PairwiseModel, config: InferenceConfig
) -> JointBelief:
    loglik = likelihood_vector(y_cur, snapshot, model, config.lambda0)
    return joint_from_loglik(y_cur.label, snapshot, loglik)


def marginal_posterior(joint: JointBelief) -> Belief:
    rows = joint.table.sum(axis=1)
    return normalize(zip(joint.labels, rows))


def prune_space(b: Belief, cap: int | None) -> Belief:
    """Drop lowest-probability labels (youngest first on ties) until at most ``cap`` remain."""
    if cap is None or len(b) <= cap:
        return b
    if cap < 2:
        raise ConfigError(f"space cap H must be >= 2, got {cap}")
    # entries are label-sorted, so a stable sort on -prob keeps older labels first among ties
    order = np.argsort(-b.probs, kind="stable")[:cap]
    return normalize((b.labels[i], b.probs[i]) for i in sorted(order))


def false_alarm_gate(mass: float, threshold: float | None) -> bool:
    """True to keep the observation: its total unnormalized evidence reaches the threshold."""
    return threshold is None or mass >= threshold


def _gate_log(log_mass: float, threshold: float | None) -> bool:
    if threshold is None or threshold <= 0:
        return True
    return log_mass >= math.log(threshold)


@dataclass(frozen=True, eq=False)
class InferenceOutcome:
    joint: JointBelief
    belief: Belief | None  # None when the observation was gated out

    @property
    def kept(self) -> bool:
        return self.belief is not None

    @property
    def space_size(self) -> int:
        return len(self.joint.labels)


def infer(
    y_cur: Observation, snapshot: NeighborhoodSnapshot, model: PairwiseModel, config: InferenceConfig
) -> InferenceOutcome:
    """One full labeling step: joint, marginal, gate, prune."""
    joint = joint_posterior(y_cur, snapshot, model, config)
    if not joint.degenerate and not _gate_log(joint.log_evidence, config.false_alarm_threshold):
        return InferenceOutcome(joint, None)
    return InferenceOutcome(joint, prune_space(marginal_posterior(joint), config.space_cap))


def make_pairwise_model(topo: Topology, appearance: AppearanceModel, config: InferenceConfig) -> PairwiseModel:
    return PairwiseModel(topo, appearance, config.order, config.renormalize_truncation)


__all__: Sequence[str] = (
    "InferenceConfig",
    "NeighborhoodSnapshot",
    "JointBelief",
    "PairwiseModel",
    "likelihood_vector",
    "sampling_space",
    "label_prior",
    "pointer_prior",
    "support_matrix",
    "joint_from_loglik",
    "joint_posterior",
    "marginal_posterior",
    "prune_space",
    "false_alarm_gate",
    "InferenceOutcome",
    "infer",
    "make_pairwise_model",
)
