"""Observations, labels and beliefs exchanged between camera nodes.

A label names an object by the (camera, local index) of its first
observation. Labels also carry the entry time of that head observation so
that every node orders labels identically ("oldest object first").
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import total_ordering
from pathlib import Path as FsPath
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, DegeneratePosteriorError

HIST_TOL = 1e-9
BELIEF_TOL = 1e-9


@total_ordering
@dataclass(frozen=True)
class Label:
    camera: int
    local_index: int
    head_time: float = field(default=0.0, compare=False)

    def sort_key(self) -> tuple[float, int, int]:
        return (self.head_time, self.camera, self.local_index)

    def __lt__(self, other: "Label") -> bool:
        if not isinstance(other, Label):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    @property
    def key(self) -> int:
        """Packed integer id, unique per (camera, local_index)."""
        return (int(self.camera) << 32) | int(self.local_index)

    def __str__(self) -> str:
        return f"{self.camera}:{self.local_index}"


@dataclass(frozen=True)
class SpatioTemporalObs:
    t_en: float
    e_en: int
    t_le: float
    e_le: int

    def __post_init__(self):
        if self.t_le < self.t_en:
            raise DataError(f"leave time {self.t_le} precedes entry time {self.t_en}")


def check_histogram(hist) -> np.ndarray:
    """Validate a (channels x bins) histogram and return a read-only float copy."""
    arr = np.array(hist, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"histogram must be a non-empty channels x bins array, got shape {arr.shape}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DataError("histogram values must be finite and non-negative")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > HIST_TOL):
        raise DataError(f"each histogram channel must sum to 1, got {sums.tolist()}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Observation:
    """One object transit through one camera's field of view.

    ``global_index`` and ``truth`` are simulator/evaluator metadata; the
    inference code never reads them.
    """

    camera: int
    local_index: int
    histogram: np.ndarray
    st: SpatioTemporalObs
    global_index: int | None = None
    truth: Label | None = None

    def __post_init__(self):
        if self.local_index < 1:
            raise DataError(f"local_index must be >= 1, got {self.local_index}")
        object.__setattr__(self, "histogram", check_histogram(self.histogram))

    @property
    def label(self) -> Label:
        """The label this observation would carry if it started a new trajectory."""
        return Label(self.camera, self.local_index, self.st.t_en)

    @property
    def key(self) -> int:
        return (int(self.camera) << 32) | int(self.local_index)

    def event_key(self) -> tuple[float, int, int]:
        """Canonical global event order: entry time, then camera, then local index."""
        return (self.st.t_en, self.camera, self.local_index)

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return (
            self.camera == other.camera
            and self.local_index == other.local_index
            and self.st == other.st
            and self.global_index == other.global_index
            and _same_truth(self.truth, other.truth)
            and np.array_equal(self.histogram, other.histogram)
        )

    __hash__ = None  # type: ignore[assignment]

    def without_truth(self) -> "Observation":
        return replace(self, truth=None)


def _same_truth(a: Label | None, b: Label | None) -> bool:
    if a is None or b is None:
        return a is b
    return a == b and a.head_time == b.head_time


class Belief:
    """Normalized distribution over labels, positive-mass entries only.

    Entries are kept sorted by label order; ``keys`` mirrors the labels as
    packed integers for vectorized lookups.
    """

    __slots__ = ("labels", "probs", "keys", "_index")

    def __init__(self, labels: Sequence[Label], probs):
        probs = np.array(probs, dtype=float)
        labels = tuple(labels)
        if probs.shape != (len(labels),):
            raise ValueError("labels and probabilities differ in length")
        if not labels:
            raise ValueError("a belief needs at least one label")
        if np.any(probs <= 0) or not np.all(np.isfinite(probs)):
            raise ValueError("belief probabilities must be finite and > 0")
        if abs(probs.sum() - 1.0) > BELIEF_TOL:
            raise ValueError(f"belief probabilities sum to {probs.sum()!r}, not 1")
        order = sorted(range(len(labels)), key=lambda i: labels[i].sort_key())
        labels = tuple(labels[i] for i in order)
        probs = probs[order]
        keys = np.array([lab.key for lab in labels], dtype=np.int64)
        if len(set(keys.tolist())) != len(keys):
            raise ValueError("belief labels must be distinct")
        probs.setflags(write=False)
        keys.setflags(write=False)
        self.labels = labels
        self.probs = probs
        self.keys = keys
        self._index = {lab: i for i, lab in enumerate(labels)}

    @classmethod
    def certain(cls, label: Label) -> "Belief":
        return cls((label,), [1.0])

    @property
    def support(self) -> list[tuple[Label, float]]:
        return list(zip(self.labels, self.probs.tolist()))

    def prob(self, label: Label) -> float:
        i = self._index.get(label)
        return 0.0 if i is None else float(self.probs[i])

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: Label) -> bool:
        return label in self._index

    def __eq__(self, other):
        if not isinstance(other, Belief):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.probs, other.probs)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        inner = ", ".join(f"{lab}: {p:.4g}" for lab, p in self.support)
        return f"Belief({{{inner}}})"


def normalize(weights: Iterable[tuple[Label, float]]) -> Belief:
    """Belief proportional to non-negative scores; zero scores are dropped."""
    items = [(lab, float(w)) for lab, w in weights]
    for _, w in items:
        if w < 0 or not np.isfinite(w):
            raise ValueError(f"scores must be finite and non-negative, got {w}")
    kept = [(lab, w) for lab, w in items if w > 0]
    if not kept:
        raise DegeneratePosteriorError("degenerate posterior: every score is zero")
    total = sum(w for _, w in kept)
    return Belief([lab for lab, _ in kept], [w / total for _, w in kept])


def belief_argmax(b: Belief) -> Label:
    """Most probable label; ties go to the oldest label."""
    if len(b) == 0:
        raise ValueError("empty belief")
    best = int(np.argmax(b.probs))  # first maximum == oldest, entries are label-sorted
    return b.labels[best]


# ----------------------------------------------------------------------------
# canonical observation trace (JSON lines)


def label_to_json(label: Label | None):
    if label is None:
        return None
    return [int(label.camera), int(label.local_index), float(label.head_time)]


def label_from_json(raw) -> Label | None:
    if raw is None:
        return None
    try:
        cam, idx, head = raw
        return Label(int(cam), int(idx), float(head))
    except (TypeError, ValueError) as exc:
        raise DataError(f"malformed label {raw!r}") from exc


def observation_to_record(obs: Observation) -> dict:
    return {
        "global_index": obs.global_index,
        "camera": int(obs.camera),
        "local_index": int(obs.local_index),
        "t_en": float(obs.st.t_en),
        "e_en": int(obs.st.e_en),
        "t_le": float(obs.st.t_le),
        "e_le": int(obs.st.e_le),
        "histogram": obs.histogram.tolist(),
        "ground_truth_label": label_to_json(obs.truth),
    }


_REQUIRED = ("camera", "local_index", "t_en", "e_en", "t_le", "e_le", "histogram")


def observation_from_record(rec: dict) -> Observation:
    missing = [k for k in _REQUIRED if k not in rec]
    if missing:
        raise DataError(f"trace record missing field(s): {', '.join(missing)}")
    st = SpatioTemporalObs(float(rec["t_en"]), int(rec["e_en"]), float(rec["t_le"]), int(rec["e_le"]))
    gi = rec.get("global_index")
    return Observation(
        camera=int(rec["camera"]),
        local_index=int(rec["local_index"]),
        histogram=rec["histogram"],
        st=st,
        global_index=None if gi is None else int(gi),
        truth=label_from_json(rec.get("ground_truth_label")),
    )


def write_trace(observations: Iterable[Observation], dest: str | FsPath | IO[str]) -> None:
    lines = (json.dumps(observation_to_record(o)) + "\n" for o in observations)
    if hasattr(dest, "write"):
        dest.writelines(lines)  # type: ignore[union-attr]
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.writelines(lines)


def iter_trace(lines: Iterable[str]) -> Iterator[Observation]:
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            yield observation_from_record(rec)
        except (json.JSONDecodeError, DataError, TypeError, ValueError) as exc:
            raise DataError(f"trace line {lineno}: {exc}") from exc


def read_trace(src: str | FsPath | IO[str]) -> list[Observation]:
    if hasattr(src, "read"):
        return list(iter_trace(src))  # type: ignore[arg-type]
    with open(src, encoding="utf-8") as fh:
        return list(iter_trace(fh))


def sort_events(observations: Iterable[Observation]) -> list[Observation]:
    return sorted(observations, key=Observation.event_key)


def validate_event_log(observations: Sequence[Observation], n_cameras: int | None = None) -> None:
    """Check global ordering, id uniqueness and per-camera local index monotonicity."""
    seen: set[int] = set()
    last_local: dict[int, int] = {}
    prev = None
    for obs in observations:
        if n_cameras is not None and not 0 <= obs.camera < n_cameras:
            raise DataError(f"observation {obs.camera}:{obs.local_index} names unknown camera")
        if obs.key in seen:
            raise DataError(f"duplicate observation id {obs.camera}:{obs.local_index}")
        seen.add(obs.key)
        if prev is not None and obs.event_key() < prev:
            raise DataError(f"event log out of order at {obs.camera}:{obs.local_index}")
        prev = obs.event_key()
        if obs.local_index <= last_local.get(obs.camera, 0):
            raise DataError(
                f"local index {obs.local_index} on camera {obs.camera} is not increasing"
            )
        last_local[obs.camera] = obs.local_index
