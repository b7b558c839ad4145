"""Learned model bundle: appearance transfer functions plus per-edge travel-time fits."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable

from .appearance import MATCH_TOLERANCE, AppearanceModel, appearance_from_dict, appearance_to_dict, learn_appearance_model
from .errors import DataError
from .observation import Observation
from .spatiotemporal import TravelTimeModel, learn_travel_models
from .topology import Topology

log = logging.getLogger(__name__)

MODEL_FORMAT = 1


@dataclass(eq=False)
class ModelBundle:
    appearance: AppearanceModel
    travel: dict[tuple[int, int], TravelTimeModel] = field(default_factory=dict)
    insufficient: list[tuple[int, int]] = field(default_factory=list)

    def apply(self, topo: Topology) -> Topology:
        """``topo`` with every fitted edge's travel statistics replaced."""
        usable = {k: (m.min_travel, m.mean_travel, m.travel_var) for k, m in self.travel.items() if topo.has_edge(*k)}
        return topo.with_travel_models(usable)


def learn_models(
    trace: Iterable[Observation],
    topo: Topology,
    bandwidth: float = 10.0,
    lambda0: float = 0.02,
    tolerance: float = MATCH_TOLERANCE,
) -> ModelBundle:
    trace = list(trace)
    appearance = learn_appearance_model(trace, bandwidth, lambda0, tolerance)
    travel, short = learn_travel_models(trace, topo)
    for u, v in short:
        log.warning("edge %d->%d: insufficient data, keeping configured travel prior", u, v)
    return ModelBundle(appearance, travel, short)


def bundle_to_dict(bundle: ModelBundle) -> dict:
    return {
        "format": MODEL_FORMAT,
        "appearance": appearance_to_dict(bundle.appearance),
        "travel": [
            {"src": u, "dst": v, "min_travel": m.min_travel, "mean_travel": m.mean_travel, "travel_var": m.travel_var}
            for (u, v), m in sorted(bundle.travel.items())
        ],
        "insufficient": [[u, v] for u, v in bundle.insufficient],
    }


def bundle_from_dict(raw: dict) -> ModelBundle:
    if not isinstance(raw, dict) or raw.get("format") != MODEL_FORMAT:
        raise DataError(f"unsupported model file (expected format {MODEL_FORMAT})")
    try:
        travel = {
            (int(t["src"]), int(t["dst"])): TravelTimeModel(
                float(t["min_travel"]), float(t["mean_travel"]), float(t["travel_var"])
            )
            for t in raw.get("travel", [])
        }
        short = [(int(u), int(v)) for u, v in raw.get("insufficient", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed travel model entry: {exc}") from exc
    return ModelBundle(appearance_from_dict(raw["appearance"]), travel, short)


def save_bundle(bundle: ModelBundle, path: str | FsPath) -> None:
    # repr-exact floats so a reload reproduces the model bit for bit
    FsPath(path).write_text(json.dumps(bundle_to_dict(bundle), indent=1))


def load_bundle(path: str | FsPath) -> ModelBundle:
    try:
        raw = json.loads(FsPath(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: malformed model file: {exc.msg}") from None
    return bundle_from_dict(raw)
