"""Reference computations used to check the distributed engine.

``centralized_run`` keeps one global store and rebuilds each event's
neighborhood window from it; the per-node caches and message passing of the
runtime are bypassed entirely. ``exact_joint_run`` drops the product-of-
marginals approximation and carries the exact joint over every label
assignment, which is only feasible for a handful of events.
"""
from __future__ import annotations

import math
import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .appearance import AppearanceModel
from .errors import ConfigError
from .inference import (
    InferenceConfig,
    NeighborhoodSnapshot,
    infer,
    likelihood_vector,
    make_pairwise_model,
)
from .observation import Belief, Label, Observation, belief_argmax, normalize, validate_event_log
from .runtime import LabeledObservation, LabelingResult
from .topology import Topology, neighbors

EXACT_MAX_EVENTS = 10
EXACT_MAX_ASSIGNMENTS = 500_000


def centralized_run(
    topo: Topology, events: Sequence[Observation], config: InferenceConfig, appearance: AppearanceModel
) -> LabelingResult:
    events = list(events)
    validate_event_log(events, topo.n_cameras)
    model = make_pairwise_model(topo, appearance, config)
    hood = {u: neighbors(topo, u, config.order) | {u} for u in range(topo.n_cameras)}
    store: list[tuple[Observation, Belief]] = []
    node_time: dict[int, float] = defaultdict(float)
    result = LabelingResult()
    for obs in events:
        members = hood[obs.camera]
        window = NeighborhoodSnapshot.from_candidates(
            (e for e in store if e[0].camera in members), config.memory_depth
        )
        started = time.perf_counter()
        outcome = infer(obs, window, model, config)
        elapsed = time.perf_counter() - started
        node_time[obs.camera] += elapsed
        if outcome.belief is None:
            result.dropped.append(obs)
            continue
        store.append((obs, outcome.belief))
        result.records.append(
            LabeledObservation(
                obs, outcome.belief, belief_argmax(outcome.belief), outcome.space_size, window.L, elapsed
            )
        )
    result.node_time = {u: node_time.get(u, 0.0) for u in range(topo.n_cameras)}
    return result


def max_belief_difference(a: LabelingResult, b: LabelingResult) -> float:
    """Largest absolute difference of any label probability between two runs."""
    if [r.observation.key for r in a.records] != [r.observation.key for r in b.records]:
        return math.inf
    worst = 0.0
    for ra, rb in zip(a.records, b.records):
        for lab in set(ra.belief.labels) | set(rb.belief.labels):
            worst = max(worst, abs(ra.belief.prob(lab) - rb.belief.prob(lab)))
    return worst


def tv_distance(p: Belief, q: Belief) -> float:
    labels = set(p.labels) | set(q.labels)
    return 0.5 * sum(abs(p.prob(lab) - q.prob(lab)) for lab in labels)


@dataclass(frozen=True, eq=False)
class ExactResult:
    observations: list[Observation]
    marginals: list[Belief]
    assignments: int  # size of the final joint table

    @property
    def labels(self) -> list[Label]:
        return [belief_argmax(b) for b in self.marginals]


def exact_joint_run(
    topo: Topology,
    events: Sequence[Observation],
    config: InferenceConfig,
    appearance: AppearanceModel,
    max_events: int = EXACT_MAX_EVENTS,
) -> ExactResult:
    """Filtered marginals under the exact joint over all labeling variables.

    Given an assignment of labels to the earlier observations, the label
    prior of the new observation is uniform over "new" and the window slots,
    and its predecessor is the newest window slot carrying the chosen label.
    The joint is updated by Bayes' rule each step; no factorization, no
    pruning, unbounded memory.
    """
    events = list(events)
    if len(events) > max_events:
        raise ConfigError(f"exact enumeration is capped at {max_events} events, got {len(events)}")
    validate_event_log(events, topo.n_cameras)
    model = make_pairwise_model(topo, appearance, config)
    hood = {u: neighbors(topo, u, config.order) | {u} for u in range(topo.n_cameras)}

    joint: dict[tuple[Label, ...], float] = {(): 1.0}
    seen: list[Observation] = []
    marginals: list[Belief] = []
    for obs in events:
        members = hood[obs.camera]
        slots = sorted(
            (i for i, o in enumerate(seen) if o.camera in members),
            key=lambda i: seen[i].event_key(),
            reverse=True,
        )
        window = NeighborhoodSnapshot(tuple((seen[i], Belief.certain(seen[i].label)) for i in slots))
        loglik = likelihood_vector(obs, window, model, config.lambda0)
        finite = loglik[np.isfinite(loglik)]
        lik = np.exp(loglik - (finite.max() if finite.size else 0.0))
        own = obs.label
        L = len(slots)
        updated: dict[tuple[Label, ...], float] = {}
        for assignment, mass in joint.items():
            slot_labels = [assignment[i] for i in slots]
            counts: dict[Label, int] = defaultdict(int)
            first: dict[Label, int] = {}
            for l, lab in enumerate(slot_labels, 1):
                counts[lab] += 1
                first.setdefault(lab, l)
            for h in [own, *first]:
                prior = (counts.get(h, 0) + (1 if h == own else 0)) / (L + 1)
                w = mass * prior * lik[first.get(h, 0)]
                if w > 0:
                    updated[assignment + (h,)] = updated.get(assignment + (h,), 0.0) + w
        if len(updated) > EXACT_MAX_ASSIGNMENTS:
            raise ConfigError("exact joint grew beyond the enumeration cap")
        total = sum(updated.values())
        if not total > 0:
            updated = {a + (own,): m for a, m in joint.items()}
            total = sum(updated.values())
        joint = {a: m / total for a, m in updated.items()}
        last: dict[Label, float] = defaultdict(float)
        for a, m in joint.items():
            last[a[-1]] += m
        marginals.append(normalize(last.items()))
        seen.append(obs)
    return ExactResult(events, marginals, len(joint))
