"""Spatio-temporal likelihood of one observation following another.

Travel time is a Gaussian cut off below a minimum travel time; border
transitions are a discrete table. When the previous observation may be
several cameras back (missed detections in between), the likelihood is a
mixture over the inter-camera paths of bounded length.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, InsufficientDataError
from .observation import Observation, SpatioTemporalObs
from .topology import Path, Topology, chain_border_matrix, enumerate_paths, path_weights

VAR_FLOOR = 1e-6
MIN_TRAVEL_SIGMAS = 3.0


@dataclass(frozen=True)
class TravelTimeModel:
    min_travel: float
    mean_travel: float
    travel_var: float

    def __post_init__(self):
        if not self.travel_var > 0:
            raise ConfigError(f"travel variance must be > 0, got {self.travel_var}")


def edge_travel_model(topo: Topology, u: int, v: int) -> TravelTimeModel:
    e = topo.edge(u, v)
    return TravelTimeModel(e.min_travel, e.mean_travel, e.travel_var)


def path_travel_model(topo: Topology, path: Path) -> TravelTimeModel:
    """Path statistics are the sums of the per-edge statistics."""
    mn = mean = var = 0.0
    for a, b in path.edges:
        e = topo.edge(a, b)
        mn += e.min_travel
        mean += e.mean_travel
        var += e.travel_var
    return TravelTimeModel(mn, mean, var)


def travel_time_likelihood(
    m: TravelTimeModel, t_en: float, t_le: float, renormalize: bool = False
) -> float:
    """Density of arriving at ``t_en`` after leaving at ``t_le``.

    Zero unless ``t_en > t_le + min_travel``; above the cut the plain normal
    density is returned, optionally divided by the retained tail mass.
    """
    if not m.travel_var > 0:
        raise ConfigError(f"travel variance must be > 0, got {m.travel_var}")
    if t_en <= t_le + m.min_travel:
        return 0.0
    gap = t_en - t_le
    dens = math.exp(-0.5 * (gap - m.mean_travel) ** 2 / m.travel_var) / math.sqrt(
        2.0 * math.pi * m.travel_var
    )
    if renormalize:
        kept = 0.5 * math.erfc((m.min_travel - m.mean_travel) / math.sqrt(2.0 * m.travel_var))
        if kept <= 0.0:
            return 0.0
        dens /= kept
    return dens


def border_likelihood(matrix: np.ndarray, e_le: int, e_en: int) -> float:
    rows, cols = matrix.shape
    if not (0 <= e_le < rows and 0 <= e_en < cols):
        raise ConfigError(f"border pair ({e_le}, {e_en}) outside a {rows}x{cols} border matrix")
    return float(matrix[e_le, e_en])


def st_likelihood_order0(
    topo: Topology, d_cur: SpatioTemporalObs, u: int, d_prev: SpatioTemporalObs, u_prev: int,
    renormalize: bool = False,
) -> float:
    if not topo.has_edge(u_prev, u):
        return 0.0
    e = topo.edge(u_prev, u)
    tt = travel_time_likelihood(
        TravelTimeModel(e.min_travel, e.mean_travel, e.travel_var), d_cur.t_en, d_prev.t_le, renormalize
    )
    if tt == 0.0:
        return 0.0
    return tt * border_likelihood(e.border_matrix, d_prev.e_le, d_cur.e_en)


@dataclass(frozen=True, eq=False)
class PathComponent:
    path: Path
    weight: float
    travel: TravelTimeModel
    borders: np.ndarray


def mixture_components(topo: Topology, src: int, dst: int, q: int) -> list[PathComponent]:
    """Weighted path components for travel ``src -> dst`` with up to ``q`` skipped cameras."""
    if src == dst:
        return []
    paths = enumerate_paths(topo, src, dst, q)
    if not paths:
        return []
    weights = [1.0] if len(paths) == 1 else path_weights(topo, paths)
    return [
        PathComponent(p, w, path_travel_model(topo, p), chain_border_matrix(topo, p))
        for p, w in zip(paths, weights)
    ]


def mixture_likelihood(
    components: Sequence[PathComponent], d_cur: SpatioTemporalObs, d_prev: SpatioTemporalObs,
    renormalize: bool = False,
) -> float:
    total = 0.0
    for c in components:
        if c.weight == 0.0:
            continue
        tt = travel_time_likelihood(c.travel, d_cur.t_en, d_prev.t_le, renormalize)
        if tt == 0.0:
            continue
        total += c.weight * tt * border_likelihood(c.borders, d_prev.e_le, d_cur.e_en)
    return total


def st_likelihood_orderq(
    topo: Topology, d_cur: SpatioTemporalObs, u: int, d_prev: SpatioTemporalObs, u_prev: int, q: int,
    renormalize: bool = False,
) -> float:
    if q < 0:
        raise ConfigError(f"order must be >= 0, got {q}")
    return mixture_likelihood(mixture_components(topo, u_prev, u, q), d_cur, d_prev, renormalize)


def fit_travel_model(samples: Sequence[float], var_floor: float = VAR_FLOOR) -> TravelTimeModel:
    """Mean, unbiased variance (floored) and a 3-sigma minimum travel time."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise InsufficientDataError(f"insufficient training data: {x.size} transit(s), need >= 2")
    mean = float(x.mean())
    var = max(float(x.var(ddof=1)), var_floor)
    mn = max(0.0, float(x.min()) - MIN_TRAVEL_SIGMAS * math.sqrt(var))
    return TravelTimeModel(mn, mean, var)


def transit_samples(trace: Iterable[Observation]) -> dict[tuple[int, int], list[float]]:
    """Gaps ``t_en - t_le`` between consecutive observations of each labeled object."""
    last: dict = {}
    out: dict[tuple[int, int], list[float]] = defaultdict(list)
    for obs in sorted(trace, key=Observation.event_key):
        if obs.truth is None:
            raise DataError(f"observation {obs.camera}:{obs.local_index} has no ground-truth label")
        prev = last.get(obs.truth)
        if prev is not None and prev.camera != obs.camera:
            out[(prev.camera, obs.camera)].append(obs.st.t_en - prev.st.t_le)
        last[obs.truth] = obs
    return dict(out)


def learn_travel_models(
    trace: Iterable[Observation], topo: Topology | None = None
) -> tuple[dict[tuple[int, int], TravelTimeModel], list[tuple[int, int]]]:
    """Fit every directed edge seen in ``trace``.

    Returns the fitted models and the list of edges that had too few transits
    (those keep whatever prior the topology carries). Transits between
    cameras that are not adjacent in ``topo`` are ignored.
    """
    fitted: dict[tuple[int, int], TravelTimeModel] = {}
    short: list[tuple[int, int]] = []
    samples = transit_samples(trace)
    keys = set(samples)
    if topo is not None:
        keys = {k for k in keys if topo.has_edge(*k)} | set(topo.edges)
    for key in sorted(keys):
        try:
            fitted[key] = fit_travel_model(samples.get(key, []))
        except InsufficientDataError:
            short.append(key)
    return fitted, short
