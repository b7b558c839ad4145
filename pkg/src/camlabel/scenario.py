"""Synthetic ground truth: objects walking over the camera graph.

Each object performs a random walk over the topology. At every camera it
enters through a border, dwells, leaves through a border chosen from the
camera's traversal matrix, picks the next edge by its transition probability
and travels for a truncated-Gaussian time. Its observed histogram is its base
appearance pushed through the camera's brightness gains plus clipped noise.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .observation import Label, Observation, SpatioTemporalObs
from .topology import CameraParams, EdgeParams, Topology, build_topology

MAX_REJECTIONS = 10_000
MAX_VISITS = 100_000


@dataclass(frozen=True, eq=False)
class ObjectSpec:
    identity: int
    base_appearance: np.ndarray
    birth_time: float
    birth_camera: int
    lifetime: int | None = None  # number of camera visits; None: walk until it exits

    def __post_init__(self):
        base = np.array(self.base_appearance, dtype=float)
        if base.ndim != 2 or np.any(base < 0) or np.any(np.abs(base.sum(axis=1) - 1) > 1e-9):
            raise ConfigError(f"object {self.identity}: base appearance channels must sum to 1")
        base.setflags(write=False)
        object.__setattr__(self, "base_appearance", base)
        if self.lifetime is not None and self.lifetime < 1:
            raise ConfigError(f"object {self.identity}: lifetime must be >= 1")


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    topology: Topology
    objects: tuple[ObjectSpec, ...]
    seed: int = 0
    travel_noise: float = 1.0  # multiplies each edge's travel std; 0 gives exact mean travel
    missing_count: int | None = None
    missing_rate: float | None = None
    horizon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.missing_rate is not None and not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError(f"missing_rate must lie in [0, 1), got {self.missing_rate}")
        if self.missing_count is not None and self.missing_count < 0:
            raise ConfigError("missing_count must be >= 0")
        if self.travel_noise < 0:
            raise ConfigError("travel_noise must be >= 0")
        for obj in self.objects:
            if not 0 <= obj.birth_camera < self.topology.n_cameras:
                raise ConfigError(f"object {obj.identity} born at unknown camera {obj.birth_camera}")


def gain_map(bins: int, gain: float) -> np.ndarray:
    """Bin index each source bin lands in after scaling brightness by ``gain``."""
    centers = np.arange(bins) + 0.5
    return np.minimum(bins - 1, np.floor(gain * centers)).astype(np.int64)


def distort(hist: np.ndarray, gains: Sequence[float], noise_scale: float, rng: np.random.Generator) -> np.ndarray:
    channels, bins = hist.shape
    if len(gains) != channels:
        raise ConfigError(f"camera declares {len(gains)} gains for {channels}-channel histograms")
    out = np.zeros_like(hist)
    for c in range(channels):
        out[c] = np.bincount(gain_map(bins, gains[c]), weights=hist[c], minlength=bins)
    if noise_scale > 0:
        noisy = np.clip(out + rng.normal(0.0, noise_scale, size=out.shape), 0.0, None)
        sums = noisy.sum(axis=1, keepdims=True)
        out = np.where(sums > 0, noisy / np.where(sums > 0, sums, 1.0), out)
    return out / out.sum(axis=1, keepdims=True)


def sample_travel(edge: EdgeParams, scale: float, rng: np.random.Generator) -> float:
    """Gap from a Gaussian rejected below the edge's minimum travel time."""
    if scale == 0.0:
        if edge.mean_travel <= edge.min_travel:
            raise ConfigError("deterministic travel needs mean_travel > min_travel")
        return edge.mean_travel
    sd = scale * math.sqrt(edge.travel_var)
    for _ in range(MAX_REJECTIONS):
        gap = rng.normal(edge.mean_travel, sd)
        if gap > edge.min_travel and gap > 0:
            return float(gap)
    raise ConfigError("travel time rejection sampler failed; check min_travel against mean_travel")


@dataclass
class _Visit:
    obj: int
    camera: int
    t_en: float
    e_en: int
    t_le: float
    e_le: int
    hist: np.ndarray


def _walk(spec: ScenarioSpec, obj: ObjectSpec, rng: np.random.Generator) -> list[_Visit]:
    topo = spec.topology
    cam = obj.birth_camera
    t = float(obj.birth_time)
    entry = int(rng.integers(topo.cameras[cam].n_borders))
    visits: list[_Visit] = []
    while True:
        params = topo.cameras[cam]
        lo, hi = params.dwell
        t_le = t + float(rng.uniform(lo, hi))
        exit_border = int(rng.choice(params.n_borders, p=params.traversal_matrix[entry]))
        hist = distort(obj.base_appearance, params.gains, params.noise_scale, rng)
        visits.append(_Visit(obj.identity, cam, t, entry, t_le, exit_border, hist))
        if obj.lifetime is not None and len(visits) >= obj.lifetime:
            break
        if len(visits) >= MAX_VISITS:
            raise ConfigError(f"object {obj.identity} never leaves the region; set a lifetime")
        adj = topo.adjacent(cam)
        probs = [topo.edge(cam, v).transition_prob for v in adj]
        if obj.lifetime is not None:
            total = sum(probs)
            if total <= 0:
                raise ConfigError(
                    f"object {obj.identity} is stuck at camera {cam} with {obj.lifetime - len(visits)} "
                    "visits left (no outgoing transitions)"
                )
            choices = list(adj)
            weights = [p / total for p in probs]
        else:
            choices = list(adj) + [None]
            weights = probs + [topo.exit_prob(cam)]
            total = sum(weights)
            weights = [w / total for w in weights]
        nxt = choices[int(rng.choice(len(choices), p=weights))]
        if nxt is None:
            break
        edge = topo.edge(cam, nxt)
        t_next = t_le + sample_travel(edge, spec.travel_noise, rng)
        if spec.horizon is not None and t_next > spec.horizon:
            break
        entry = int(rng.choice(edge.border_matrix.shape[1], p=edge.border_matrix[exit_border]))
        cam, t = nxt, t_next
    return visits


def generate_trace(spec: ScenarioSpec) -> list[Observation]:
    """Ground-truth-labeled observations in global event order.

    If the spec sets ``missing_count`` or ``missing_rate`` the deletions are
    applied before returning (see :func:`inject_missing`).
    """
    rng = np.random.default_rng(spec.seed)
    visits: list[_Visit] = []
    for obj in sorted(spec.objects, key=lambda o: o.identity):
        visits.extend(_walk(spec, obj, rng))
    visits.sort(key=lambda v: (v.t_en, v.camera, v.obj))
    counters: dict[int, int] = defaultdict(int)
    heads: dict[int, Label] = {}
    trace = []
    for k, v in enumerate(visits, 1):
        counters[v.camera] += 1
        idx = counters[v.camera]
        head = heads.setdefault(v.obj, Label(v.camera, idx, v.t_en))
        trace.append(
            Observation(v.camera, idx, v.hist, SpatioTemporalObs(v.t_en, v.e_en, v.t_le, v.e_le), k, head)
        )
    if spec.missing_count or spec.missing_rate:
        trace, _ = inject_missing(trace, count=spec.missing_count, rate=spec.missing_rate, seed=spec.seed + 1)
    return trace


def relabel_heads(trace: Sequence[Observation]) -> list[Observation]:
    """Reassign ground truth so each trajectory is named by its first remaining observation."""
    heads: dict[Label, Label] = {}
    out = []
    for obs in trace:
        if obs.truth is None:
            out.append(obs)
            continue
        head = heads.setdefault(obs.truth, obs.label)
        out.append(obs if (head == obs.truth and head.head_time == obs.truth.head_time) else replace(obs, truth=head))
    return out


def inject_missing(
    trace: Sequence[Observation],
    count: int | None = None,
    rate: float | None = None,
    seed: int = 0,
) -> tuple[list[Observation], list[Observation]]:
    """Delete observations uniformly at random; returns (remaining trace, deleted)."""
    n = len(trace)
    if count is None:
        count = int(round((rate or 0.0) * n))
    if count < 0 or (n and count >= n) or (not n and count):
        raise ConfigError(f"cannot delete {count} of {n} observations")
    if count == 0:
        return list(trace), []
    rng = np.random.default_rng(seed)
    gone = set(rng.choice(n, size=count, replace=False).tolist())
    kept = [o for i, o in enumerate(trace) if i not in gone]
    deleted = [o for i, o in enumerate(trace) if i in gone]
    return relabel_heads(kept), deleted


def emit_training_split(
    trace: Sequence[Observation], fraction: float
) -> tuple[list[Observation], list[Observation]]:
    """Time-prefix split; only the training part keeps ground truth."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"training fraction must lie in (0, 1), got {fraction}")
    ordered = sorted(trace, key=Observation.event_key)
    cut = math.ceil(fraction * len(ordered))
    train = relabel_heads(ordered[:cut])
    evaluation = [o.without_truth() for o in ordered[cut:]]
    return train, evaluation


# ----------------------------------------------------------------------------
# synthetic builders


def random_appearance(
    rng: np.random.Generator, channels: int = 3, bins: int = 16, span: int | None = None
) -> np.ndarray:
    """A smooth, peaked per-channel brightness histogram.

    Mass is confined to the lowest ``span`` bins so that brightening gains
    never push it past the last bin.
    """
    span = bins if span is None else span
    x = np.arange(span)
    out = np.zeros((channels, bins))
    for c in range(channels):
        h = np.full(span, 1e-3)
        for _ in range(int(rng.integers(1, 3))):
            center = rng.uniform(0, span - 1)
            width = rng.uniform(0.8, 2.0)
            h += rng.uniform(0.5, 1.0) * np.exp(-0.5 * ((x - center) / width) ** 2)
        out[c, :span] = h / h.sum()
    return out


def headroom_span(bins: int, max_gain: float) -> int:
    """Number of low bins that stay inside the histogram under ``max_gain``."""
    return max(1, int(math.floor(bins / max_gain)))


def distinct_appearances(
    rng: np.random.Generator, n: int, channels: int = 3, bins: int = 16, min_distance: float = 0.8,
    span: int | None = None, max_tries: int = 10_000,
) -> list[np.ndarray]:
    """``n`` histograms whose pairwise channel-mean L1 distance is at least ``min_distance``."""
    out: list[np.ndarray] = []
    for _ in range(max_tries):
        if len(out) == n:
            break
        cand = random_appearance(rng, channels, bins, span)
        if all(np.abs(cand - o).sum(axis=1).mean() >= min_distance for o in out):
            out.append(cand)
    if len(out) < n:
        raise ConfigError(f"could not draw {n} appearances {min_distance} apart")
    return out


def _border_matrix(rng, rows: int, cols: int, peak: float) -> np.ndarray:
    m = np.full((rows, cols), (1.0 - peak) / max(cols - 1, 1) if cols > 1 else 0.0)
    target = int(rng.integers(cols))
    m[:, target] = peak if cols > 1 else 1.0
    return m / m.sum(axis=1, keepdims=True)


def _traversal_matrix(n: int, through: float) -> np.ndarray:
    """Objects mostly leave through a border other than the one they entered by."""
    if n == 1:
        return np.ones((1, 1))
    m = np.full((n, n), through / (n - 1))
    np.fill_diagonal(m, 1.0 - through)
    return m


OFFICE_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (2, 7), (5, 6), (6, 7), (7, 8), (8, 9), (4, 9))


def random_edges(n: int, rng: np.random.Generator, extra: int = 3) -> list[tuple[int, int]]:
    """Random spanning tree plus ``extra`` chords."""
    order = rng.permutation(n).tolist()
    edges = set()
    for i in range(1, n):
        a, b = order[i], order[int(rng.integers(i))]
        edges.add((min(a, b), max(a, b)))
    tries = 0
    target = len(edges) + extra
    while len(edges) < min(target, n * (n - 1) // 2) and tries < 1000:
        a, b = rng.choice(n, 2, replace=False).tolist()
        edges.add((min(a, b), max(a, b)))
        tries += 1
    return sorted(edges)


def synthetic_topology(
    rng: np.random.Generator,
    edges: Sequence[tuple[int, int]] | None = None,
    n_cameras: int = 10,
    borders: int = 2,
    travel_range: tuple[float, float] = (0.02, 0.04),
    sigma_frac: float = 0.05,
    min_frac: float = 0.5,
    exit_prob: float = 0.05,
    border_peak: float = 0.99,
    gain_range: tuple[float, float] = (1.0, 1.6),
    channels: int = 3,
    noise_scale: float = 0.001,
    dwell: tuple[float, float] = (0.0025, 0.005),
) -> Topology:
    """Random edge statistics and imaging conditions over a given (or random) graph.

    Travel standard deviation is ``sigma_frac`` times the mean; the minimum
    travel time is ``min_frac`` times the mean.
    """
    if edges is None:
        edges = random_edges(n_cameras, rng)
    n = 1 + max(max(e) for e in edges) if edges else n_cameras
    n = max(n, n_cameras)
    cameras = [
        CameraParams(
            _traversal_matrix(borders, 0.8),
            gains=tuple(rng.uniform(*gain_range, size=channels).tolist()),
            noise_scale=noise_scale,
            dwell=dwell,
        )
        for _ in range(n)
    ]
    adj: dict[int, list[int]] = defaultdict(list)
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    share: dict[tuple[int, int], float] = {}
    for u, vs in adj.items():
        w = rng.dirichlet(np.full(len(vs), 4.0)) * (1.0 - exit_prob)
        for v, p in zip(vs, w):
            share[(u, v)] = float(p)

    def params(u, v, mean):
        sd = sigma_frac * mean
        return EdgeParams(min_frac * mean, mean, sd * sd, share[(u, v)], _border_matrix(rng, borders, borders, border_peak))

    spec = []
    for a, b in edges:
        mean = float(rng.uniform(*travel_range))
        spec.append((a, b, params(a, b, mean), params(b, a, mean)))
    return build_topology(cameras, spec)


def synthetic_scenario(
    seed: int,
    n_objects: int = 10,
    n_observations: int = 300,
    topology: Topology | str = "office",
    birth_window: float | None = None,
    channels: int = 3,
    bins: int = 16,
    min_appearance_distance: float = 0.8,
    travel_noise: float = 1.0,
    **topo_kwargs,
) -> ScenarioSpec:
    """A seeded scenario with ``n_objects`` walkers producing ``n_observations`` visits in total."""
    rng = np.random.default_rng(seed)
    if isinstance(topology, str):
        if topology == "office":
            topology = synthetic_topology(rng, OFFICE_EDGES, channels=channels, **topo_kwargs)
        elif topology == "random":
            topology = synthetic_topology(rng, None, channels=channels, **topo_kwargs)
        else:
            raise ConfigError(f"unknown topology preset {topology!r}")
    span = headroom_span(bins, max(max(c.gains) for c in topology.cameras))
    looks = distinct_appearances(rng, n_objects, channels, bins, min_appearance_distance, span)
    base, extra = divmod(n_observations, n_objects)
    lifetimes = [base + (1 if i < extra else 0) for i in range(n_objects)]
    if birth_window is None:
        birth_window = 0.01 * n_objects
    objects = [
        ObjectSpec(
            identity=i,
            base_appearance=looks[i],
            birth_time=float(rng.uniform(0.0, birth_window)),
            birth_camera=int(rng.integers(topology.n_cameras)),
            lifetime=lifetimes[i],
        )
        for i in range(n_objects)
        if lifetimes[i] > 0
    ]
    return ScenarioSpec(topology, tuple(objects), seed=seed, travel_noise=travel_noise)


def training_spec(spec: ScenarioSpec, seed: int, n_objects: int = 40, visits: int = 100) -> ScenarioSpec:
    """Same network, fresh walkers: the labeled footage models are learned from."""
    rng = np.random.default_rng(seed)
    n = n_objects
    channels, bins = spec.objects[0].base_appearance.shape if spec.objects else (3, 16)
    span = headroom_span(bins, max(max(c.gains) for c in spec.topology.cameras))
    looks = [random_appearance(rng, channels, bins, span) for _ in range(n)]
    objects = [
        ObjectSpec(i, looks[i], float(rng.uniform(0.0, 0.2)), int(rng.integers(spec.topology.n_cameras)), visits)
        for i in range(n)
    ]
    return replace(spec, objects=tuple(objects), seed=seed, missing_count=None, missing_rate=None)
