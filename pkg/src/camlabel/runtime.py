"""Event-driven distributed execution over per-camera agents.

Every camera keeps one bounded cache per neighborhood member (itself
included). After labeling a detection it announces the (observation, belief)
pair to every camera whose neighborhood contains it. The scheduler processes
detections in global time order and delivers all announcements of one event
before the next event is handled, so each node sees exactly the results of
strictly earlier events, as it would if it pulled them at detection time.
"""
from __future__ import annotations

import csv
import json
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path as FsPath
from typing import Iterable, Sequence

from .appearance import AppearanceModel
from .errors import DataError, ProtocolError
from .inference import (
    InferenceConfig,
    NeighborhoodSnapshot,
    PairwiseModel,
    infer,
    make_pairwise_model,
)
from .observation import (
    Belief,
    Label,
    Observation,
    belief_argmax,
    label_to_json,
    validate_event_log,
)
from .topology import Topology, neighbors


class MessageKind(Enum):
    BELIEF_ANNOUNCE = "belief_announce"


@dataclass(frozen=True, eq=False)
class Message:
    sender: int
    receiver: int
    observation: Observation
    belief: Belief
    kind: MessageKind = MessageKind.BELIEF_ANNOUNCE


@dataclass(eq=False)
class NodeState:
    camera: int
    neighborhood: frozenset[int]  # includes the camera itself
    config: InferenceConfig
    model: PairwiseModel
    cache: dict[int, deque] = field(default_factory=dict)
    last_local_index: int = 0
    compute_time: float = 0.0
    _seen: set[int] = field(default_factory=set, repr=False)

    def __post_init__(self):
        if self.camera not in self.neighborhood:
            self.neighborhood = frozenset(self.neighborhood | {self.camera})
        for v in sorted(self.neighborhood):
            self.cache.setdefault(v, deque(maxlen=self.config.memory_depth))

    def snapshot(self) -> NeighborhoodSnapshot:
        pooled = [entry for buf in self.cache.values() for entry in buf]
        return NeighborhoodSnapshot.from_candidates(pooled, self.config.memory_depth)

    def cached_entries(self) -> int:
        return sum(len(buf) for buf in self.cache.values())


def deliver(state: NodeState, msg: Message) -> NodeState:
    """Insert an announcement into the sender's buffer; the buffer keeps the M newest."""
    if msg.receiver != state.camera:
        raise ProtocolError(f"message for camera {msg.receiver} delivered to {state.camera}")
    if msg.sender not in state.neighborhood:
        raise ProtocolError(
            f"camera {state.camera} received an announcement from non-neighbor {msg.sender}"
        )
    obs = msg.observation
    if obs.key in state._seen:
        return state
    buf = state.cache[msg.sender]
    if buf and obs.event_key() < buf[-1][0].event_key():
        raise ProtocolError(
            f"out-of-order announcement {obs.camera}:{obs.local_index} at camera {state.camera}"
        )
    if buf.maxlen is not None and len(buf) == buf.maxlen:
        state._seen.discard(buf[0][0].key)
    buf.append((obs, msg.belief))
    state._seen.add(obs.key)
    return state


def on_detection(
    state: NodeState, obs: Observation, subscribers: Sequence[int]
) -> tuple[Belief | None, list[Message], "LabeledObservation | None"]:
    """Label a local detection and build the announcements for ``subscribers``."""
    if obs.camera != state.camera:
        raise ProtocolError(f"observation from camera {obs.camera} handed to camera {state.camera}")
    if obs.local_index <= state.last_local_index:
        raise DataError(f"local index {obs.local_index} not increasing on camera {state.camera}")
    state.last_local_index = obs.local_index
    snapshot = state.snapshot()
    started = time.perf_counter()
    outcome = infer(obs, snapshot, state.model, state.config)
    elapsed = time.perf_counter() - started
    state.compute_time += elapsed
    if outcome.belief is None:
        return None, [], None
    record = LabeledObservation(
        obs, outcome.belief, belief_argmax(outcome.belief), outcome.space_size, snapshot.L, elapsed
    )
    msgs = [Message(state.camera, v, obs, outcome.belief) for v in subscribers]
    return outcome.belief, msgs, record


@dataclass(frozen=True, eq=False)
class LabeledObservation:
    observation: Observation
    belief: Belief
    label: Label
    space_size: int
    snapshot_size: int
    elapsed: float


@dataclass(eq=False)
class LabelingResult:
    records: list[LabeledObservation] = field(default_factory=list)
    dropped: list[Observation] = field(default_factory=list)
    node_time: dict[int, float] = field(default_factory=dict)

    @property
    def tau_d(self) -> float:
        """Largest cumulative inference time over individual camera agents."""
        return max(self.node_time.values(), default=0.0)

    @property
    def labels(self) -> list[Label]:
        return [r.label for r in self.records]

    def same_beliefs(self, other: "LabelingResult") -> bool:
        if len(self.records) != len(other.records):
            return False
        return all(
            a.observation.key == b.observation.key and a.belief == b.belief
            for a, b in zip(self.records, other.records)
        ) and [o.key for o in self.dropped] == [o.key for o in other.dropped]


def subscriber_table(topo: Topology, order: int) -> dict[int, tuple[int, ...]]:
    """Cameras that must hear each camera's announcements (self included)."""
    return {u: tuple(sorted(neighbors(topo, u, order) | {u})) for u in range(topo.n_cameras)}


def build_nodes(
    topo: Topology, config: InferenceConfig, appearance: AppearanceModel
) -> dict[int, NodeState]:
    model = make_pairwise_model(topo, appearance, config)
    table = subscriber_table(topo, config.order)
    return {
        u: NodeState(u, frozenset(table[u]), config, model) for u in range(topo.n_cameras)
    }


def run_simulation(
    topo: Topology,
    events: Sequence[Observation],
    config: InferenceConfig,
    appearance: AppearanceModel,
) -> LabelingResult:
    """Process ``events`` in global order on one agent per camera."""
    events = list(events)
    validate_event_log(events, topo.n_cameras)
    nodes = build_nodes(topo, config, appearance)
    subscribers = subscriber_table(topo, config.order)
    result = LabelingResult()
    for obs in events:
        node = nodes[obs.camera]
        _, msgs, record = on_detection(node, obs, subscribers[obs.camera])
        if record is None:
            result.dropped.append(obs)
            continue
        result.records.append(record)
        for msg in msgs:
            deliver(nodes[msg.receiver], msg)
    result.node_time = {u: n.compute_time for u, n in nodes.items()}
    return result


# ----------------------------------------------------------------------------
# exports


def result_records(result: LabelingResult) -> Iterable[dict]:
    for r in result.records:
        o = r.observation
        yield {
            "global_index": o.global_index,
            "camera": o.camera,
            "local_index": o.local_index,
            "label": label_to_json(r.label),
            "belief": [[*label_to_json(lab), p] for lab, p in r.belief.support],
        }


def write_result(result: LabelingResult, path: str | FsPath) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in result_records(result):
            fh.write(json.dumps(rec) + "\n")


def timing_summary(result: LabelingResult) -> dict:
    return {
        "tau_d": result.tau_d,
        "node_time": {str(k): v for k, v in sorted(result.node_time.items())},
        "events": len(result.records) + len(result.dropped),
        "dropped": len(result.dropped),
    }


def write_timing(result: LabelingResult, path: str | FsPath) -> None:
    FsPath(path).write_text(json.dumps(timing_summary(result), indent=1))


def write_node_timing_csv(result: LabelingResult, path: str | FsPath) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["camera", "compute_seconds"])
        for cam, secs in sorted(result.node_time.items()):
            w.writerow([cam, repr(secs)])
