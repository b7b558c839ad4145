"""Appearance likelihood from brightness-histogram similarity.

Illumination differences between two sites are compensated with a
cumulative brightness transfer function: a monotone bin-to-bin map learned by
matching the cumulative histograms of the same objects seen at both cameras.
The mapped histogram is then compared with an L1 kernel.
"""
from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, UntrainedPairError
from .observation import Observation

log = logging.getLogger(__name__)

CDF_TOL = 1e-12
MATCH_TOLERANCE = 5e-3  # default level slack when learning from noisy histograms


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Per-channel monotone map from source bin to target bin."""

    mapping: np.ndarray  # (channels, bins) of int

    def __post_init__(self):
        m = np.array(self.mapping, dtype=np.int64)
        if m.ndim != 2:
            raise ValueError("mapping must be channels x bins")
        bins = m.shape[1]
        if np.any(m < 0) or np.any(m >= bins):
            raise ValueError("mapping targets must be valid bin indices")
        if np.any(np.diff(m, axis=1) < 0):
            raise ValueError("transfer mapping must be monotone non-decreasing")
        m.setflags(write=False)
        object.__setattr__(self, "mapping", m)

    @classmethod
    def identity(cls, channels: int, bins: int) -> "TransferFunction":
        return cls(np.tile(np.arange(bins), (channels, 1)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mapping.shape

    def apply(self, hist: np.ndarray) -> np.ndarray:
        channels, bins = self.mapping.shape
        out = np.zeros((channels, bins))
        for c in range(channels):
            out[c] = np.bincount(self.mapping[c], weights=hist[c], minlength=bins)
        return out

    def __eq__(self, other):
        if not isinstance(other, TransferFunction):
            return NotImplemented
        return np.array_equal(self.mapping, other.mapping)

    __hash__ = None  # type: ignore[assignment]


def match_cumulative(src_cdf: np.ndarray, dst_cdf: np.ndarray, tolerance: float = CDF_TOL) -> np.ndarray:
    """Bin map ``f(b)``: the first target bin whose cumulative mass reaches ``src_cdf[b]``.

    A source bin that carries no mass has no preferred target; it is kept at
    ``b`` when ``b`` lies in the target's flat run at that level, so equal
    histograms always produce the identity map. Target levels within
    ``tolerance`` below the source level count as reaching it, which absorbs
    the small drift that observation noise adds to accumulated histograms.
    """
    tolerance = max(tolerance, CDF_TOL)
    bins = src_cdf.shape[0]
    out = np.empty(bins, dtype=np.int64)
    for b in range(bins):
        level = src_cdf[b]
        lo = min(int(np.searchsorted(dst_cdf, level - tolerance, side="left")), bins - 1)
        empty = level - (src_cdf[b - 1] if b > 0 else 0.0) <= tolerance
        if empty:
            hi = int(np.searchsorted(dst_cdf, level + tolerance, side="right")) - 1
            out[b] = min(max(b, lo), max(lo, hi))
        else:
            out[b] = lo
    # a wide tolerance can let an empty bin's clamp overtake its successor
    return np.maximum.accumulate(out)


def learn_transfer(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]], tolerance: float = MATCH_TOLERANCE
) -> tuple[TransferFunction, TransferFunction]:
    """Learn both directions from ``(hist_at_a, hist_at_b)`` pairs of the same objects.

    Returns ``(a_to_b, b_to_a)``.
    """
    if not pairs:
        raise UntrainedPairError("untrained pair: no training pairs")
    acc_a = np.sum([np.asarray(a, dtype=float) for a, _ in pairs], axis=0)
    acc_b = np.sum([np.asarray(b, dtype=float) for _, b in pairs], axis=0)
    cdf_a = np.cumsum(acc_a / acc_a.sum(axis=1, keepdims=True), axis=1)
    cdf_b = np.cumsum(acc_b / acc_b.sum(axis=1, keepdims=True), axis=1)
    a_to_b = np.stack([match_cumulative(cdf_a[c], cdf_b[c], tolerance) for c in range(acc_a.shape[0])])
    b_to_a = np.stack([match_cumulative(cdf_b[c], cdf_a[c], tolerance) for c in range(acc_a.shape[0])])
    return TransferFunction(a_to_b), TransferFunction(b_to_a)


@dataclass(eq=False)
class AppearanceModel:
    transfer: Mapping[tuple[int, int], TransferFunction]
    bandwidth: float = 10.0
    lambda0: float = 0.02
    _warned: set = field(default_factory=set, init=False, repr=False)

    def __post_init__(self):
        if not self.bandwidth >= 0 or not math.isfinite(self.bandwidth):
            raise ConfigError(f"appearance bandwidth must be >= 0, got {self.bandwidth}")
        if not self.lambda0 > 0:
            raise ConfigError(f"lambda0 must be > 0, got {self.lambda0}")
        self.transfer = dict(self.transfer)
        for (a, b) in self.transfer:
            if (b, a) not in self.transfer:
                raise ConfigError(f"transfer for ({a}, {b}) lacks the reverse direction")

    def transfer_for(self, src: int, dst: int, shape: tuple[int, int]) -> TransferFunction:
        tf = self.transfer.get((src, dst))
        if tf is None:
            if src != dst and (src, dst) not in self._warned:
                self._warned.add((src, dst))
                log.warning("no trained transfer for cameras %d->%d; using identity", src, dst)
            return TransferFunction.identity(*shape)
        return tf


def log_appearance_likelihood(
    model: AppearanceModel, o_cur: np.ndarray, cam_cur: int, o_prev: np.ndarray, cam_prev: int
) -> float:
    tf = model.transfer_for(cam_prev, cam_cur, o_prev.shape)
    mapped = tf.apply(o_prev)
    dist = np.abs(mapped - o_cur).sum(axis=1).mean()
    return -model.bandwidth * float(dist)


def appearance_likelihood(
    model: AppearanceModel, o_cur: np.ndarray, cam_cur: int, o_prev: np.ndarray, cam_prev: int
) -> float:
    """``exp(-beta * mean channel L1)`` after mapping ``o_prev`` into the current camera."""
    return math.exp(log_appearance_likelihood(model, o_cur, cam_cur, o_prev, cam_prev))


def new_object_likelihood(model: AppearanceModel) -> float:
    return model.lambda0


def training_pairs(trace: Iterable[Observation]) -> dict[tuple[int, int], list[tuple[np.ndarray, np.ndarray]]]:
    """Same-object histogram pairs for every camera pair ``a < b`` in a labeled trace."""
    by_object: dict = defaultdict(list)
    for obs in trace:
        if obs.truth is None:
            raise DataError(f"observation {obs.camera}:{obs.local_index} has no ground-truth label")
        by_object[obs.truth].append(obs)
    pairs: dict = defaultdict(list)
    for seq in by_object.values():
        for i, x in enumerate(seq):
            for y in seq[i + 1:]:
                if x.camera == y.camera:
                    continue
                if x.camera < y.camera:
                    pairs[(x.camera, y.camera)].append((x.histogram, y.histogram))
                else:
                    pairs[(y.camera, x.camera)].append((y.histogram, x.histogram))
    return dict(pairs)


def learn_appearance_model(
    trace: Iterable[Observation], bandwidth: float = 10.0, lambda0: float = 0.02, tolerance: float = MATCH_TOLERANCE
) -> AppearanceModel:
    transfer: dict[tuple[int, int], TransferFunction] = {}
    for (a, b), pairs in sorted(training_pairs(trace).items()):
        fwd, bwd = learn_transfer(pairs, tolerance)
        transfer[(a, b)] = fwd
        transfer[(b, a)] = bwd
    return AppearanceModel(transfer, bandwidth, lambda0)


def appearance_to_dict(model: AppearanceModel) -> dict:
    return {
        "bandwidth": model.bandwidth,
        "lambda0": model.lambda0,
        "transfer": [
            {"src": a, "dst": b, "mapping": tf.mapping.tolist()}
            for (a, b), tf in sorted(model.transfer.items())
        ],
    }


def appearance_from_dict(raw: dict) -> AppearanceModel:
    try:
        transfer = {
            (int(t["src"]), int(t["dst"])): TransferFunction(t["mapping"]) for t in raw.get("transfer", [])
        }
        return AppearanceModel(transfer, float(raw["bandwidth"]), float(raw["lambda0"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise DataError(f"malformed appearance model: {exc}") from exc


def save_appearance(model: AppearanceModel, path: str | FsPath) -> None:
    FsPath(path).write_text(json.dumps(appearance_to_dict(model), indent=1))
