"""Camera-network graph: neighborhoods, inter-camera paths and their weights.

Nodes are cameras with dense ids ``0..N-1``. Edges are undirected pairs but
carry one :class:`EdgeParams` per direction, since travel statistics and
transition probabilities need not be symmetric.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)

ROW_TOL = 1e-9


def _as_stochastic(matrix, what: str) -> np.ndarray:
    arr = np.array(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ConfigError(f"{what}: expected a non-empty 2-D matrix, got shape {arr.shape}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{what}: entries must be finite and non-negative")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > ROW_TOL):
        raise ConfigError(f"{what}: rows must sum to 1 (got {sums.tolist()})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EdgeParams:
    """Directed edge statistics for travel from one camera to the next."""

    min_travel: float
    mean_travel: float
    travel_var: float
    transition_prob: float
    border_matrix: np.ndarray  # rows: exit border at source, cols: entry border at target

    def __post_init__(self):
        if self.min_travel < 0:
            raise ConfigError(f"min_travel must be >= 0, got {self.min_travel}")
        if not self.travel_var > 0:
            raise ConfigError(f"travel_var must be > 0, got {self.travel_var}")
        if self.mean_travel < self.min_travel:
            raise ConfigError(
                f"mean_travel ({self.mean_travel}) must be >= min_travel ({self.min_travel})"
            )
        if not 0.0 <= self.transition_prob <= 1.0:
            raise ConfigError(f"transition_prob must lie in [0, 1], got {self.transition_prob}")
        object.__setattr__(self, "border_matrix", _as_stochastic(self.border_matrix, "border_matrix"))

    def with_travel(self, min_travel: float, mean_travel: float, travel_var: float) -> "EdgeParams":
        return EdgeParams(min_travel, mean_travel, travel_var, self.transition_prob, self.border_matrix)


@dataclass(frozen=True, eq=False)
class CameraParams:
    """Per-camera layout and imaging conditions.

    ``gains`` and ``noise_scale`` describe the site's appearance distortion and
    are only consumed by the scenario generator.
    """

    traversal_matrix: np.ndarray  # rows: entry border, cols: exit border
    gains: tuple[float, ...] = (1.0, 1.0, 1.0)
    noise_scale: float = 0.0
    dwell: tuple[float, float] = (1.0, 2.0)

    def __post_init__(self):
        object.__setattr__(
            self, "traversal_matrix", _as_stochastic(self.traversal_matrix, "traversal_matrix")
        )
        if self.traversal_matrix.shape[0] != self.traversal_matrix.shape[1]:
            raise ConfigError("traversal_matrix must be square (borders x borders)")
        object.__setattr__(self, "gains", tuple(float(g) for g in self.gains))
        if any(g <= 0 for g in self.gains):
            raise ConfigError("channel gains must be positive")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        lo, hi = self.dwell
        if lo < 0 or hi < lo:
            raise ConfigError(f"dwell range must satisfy 0 <= lo <= hi, got {self.dwell}")
        object.__setattr__(self, "dwell", (float(lo), float(hi)))

    @property
    def n_borders(self) -> int:
        return self.traversal_matrix.shape[0]


@dataclass(frozen=True)
class Path:
    """Camera sequence from the earlier observation's camera to the current one."""

    nodes: tuple[int, ...]

    @property
    def order(self) -> int:
        """Number of intermediate cameras."""
        return len(self.nodes) - 2

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.nodes[:-1], self.nodes[1:]))

    def __str__(self) -> str:
        return "-".join(str(n) for n in self.nodes)


@dataclass(frozen=True, eq=False)
class Topology:
    cameras: tuple[CameraParams, ...]
    edges: Mapping[tuple[int, int], EdgeParams]
    _adj: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.cameras)
        if n < 1:
            raise ConfigError("topology needs at least one camera")
        object.__setattr__(self, "cameras", tuple(self.cameras))
        adj: dict[int, set[int]] = {u: set() for u in range(n)}
        edges = dict(self.edges)
        for (a, b), params in edges.items():
            if a == b:
                raise ConfigError(f"self-edge on camera {a}")
            for c in (a, b):
                if not 0 <= c < n:
                    raise ConfigError(f"edge ({a}, {b}) references unknown camera {c}")
            if (b, a) not in edges:
                raise ConfigError(f"edge ({a}, {b}) lacks parameters for direction {b}->{a}")
            rows, cols = params.border_matrix.shape
            if rows != self.cameras[a].n_borders or cols != self.cameras[b].n_borders:
                raise ConfigError(
                    f"border_matrix for {a}->{b} has shape {(rows, cols)}, expected "
                    f"{(self.cameras[a].n_borders, self.cameras[b].n_borders)}"
                )
            adj[a].add(b)
        for u in range(n):
            out = sum(edges[(u, v)].transition_prob for v in adj[u])
            if out > 1.0 + ROW_TOL:
                raise ConfigError(f"outgoing transition probabilities of camera {u} sum to {out} > 1")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_adj", {u: tuple(sorted(vs)) for u, vs in adj.items()})
        if n > 1 and len(neighbors(self, 0, n)) != n - 1:
            log.warning("camera topology is not connected")

    @property
    def n_cameras(self) -> int:
        return len(self.cameras)

    def adjacent(self, u: int) -> tuple[int, ...]:
        _check_camera(self, u)
        return self._adj[u]

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self.edges

    def edge(self, u: int, v: int) -> EdgeParams:
        try:
            return self.edges[(u, v)]
        except KeyError:
            raise ConfigError(f"no edge {u}->{v}") from None

    def exit_prob(self, u: int) -> float:
        """Probability of leaving the monitored region after visiting ``u``."""
        return max(0.0, 1.0 - sum(self.edges[(u, v)].transition_prob for v in self.adjacent(u)))

    def with_travel_models(self, models: Mapping[tuple[int, int], Sequence[float]]) -> "Topology":
        """Copy with (min, mean, var) travel statistics replaced on the given directed edges."""
        edges = dict(self.edges)
        for key, (mn, mean, var) in models.items():
            if key not in edges:
                raise ConfigError(f"travel model for unknown edge {key}")
            edges[key] = edges[key].with_travel(mn, mean, var)
        return Topology(self.cameras, edges)


def _check_camera(topo: Topology, u: int) -> None:
    if not isinstance(u, (int, np.integer)) or not 0 <= u < topo.n_cameras:
        raise ConfigError(f"unknown camera id {u!r}")


def build_topology(
    cameras: Sequence[CameraParams],
    edges: Iterable[tuple[int, int, EdgeParams, EdgeParams]],
) -> Topology:
    """Assemble a topology from ``(a, b, params_a_to_b, params_b_to_a)`` tuples."""
    table: dict[tuple[int, int], EdgeParams] = {}
    for a, b, fwd, bwd in edges:
        if (a, b) in table:
            raise ConfigError(f"duplicate edge ({a}, {b})")
        table[(a, b)] = fwd
        table[(b, a)] = bwd
    return Topology(tuple(cameras), table)


def neighbors(topo: Topology, u: int, q: int = 0) -> set[int]:
    """Cameras reachable from ``u`` through at most ``q`` intermediate cameras."""
    _check_camera(topo, u)
    if q < 0:
        raise ConfigError(f"neighborhood order must be >= 0, got {q}")
    max_hops = q + 1
    dist = {u: 0}
    queue = deque([u])
    while queue:
        x = queue.popleft()
        if dist[x] == max_hops:
            continue
        for y in topo._adj[x]:
            if y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    dist.pop(u)
    return set(dist)


def enumerate_paths(topo: Topology, src: int, dst: int, q: int) -> list[Path]:
    """All simple paths ``src -> dst`` with at most ``q`` intermediate cameras.

    Ordered by length, then lexicographically by node ids.
    """
    _check_camera(topo, src)
    _check_camera(topo, dst)
    if src == dst:
        raise ConfigError("enumerate_paths requires src != dst")
    found: list[tuple[int, ...]] = []
    stack = [(src,)]
    while stack:
        prefix = stack.pop()
        for nxt in topo._adj[prefix[-1]]:
            if nxt in prefix:
                continue
            if nxt == dst:
                found.append(prefix + (dst,))
            elif len(prefix) - 1 < q:
                stack.append(prefix + (nxt,))
    found.sort(key=lambda p: (len(p), p))
    return [Path(p) for p in found]


def path_weights(topo: Topology, paths: Sequence[Path]) -> list[float]:
    """Products of directed transition probabilities, normalized over ``paths``."""
    if not paths:
        return []
    ends = {(p.nodes[0], p.nodes[-1]) for p in paths}
    if len(ends) != 1:
        raise ValueError("paths must share the same endpoints")
    products = []
    for p in paths:
        w = 1.0
        for a, b in p.edges:
            w *= topo.edge(a, b).transition_prob
        products.append(w)
    total = sum(products)
    if total <= 0:
        src, dst = ends.pop()
        raise ConfigError(
            f"every path {src}->{dst} has zero transition probability; inconsistent topology"
        )
    return [w / total for w in products]


def chain_border_matrix(topo: Topology, path: Path) -> np.ndarray:
    """Border-to-border transition matrix along ``path``.

    Alternates edge border matrices with the traversal matrices of the
    intermediate cameras; rows index the exit border at the first camera and
    columns the entry border at the last.
    """
    if len(path.nodes) < 2:
        raise ConfigError("path needs at least two cameras")
    edges = path.edges
    out = topo.edge(*edges[0]).border_matrix
    for a, b in edges[1:]:
        traversal = topo.cameras[a].traversal_matrix
        nxt = topo.edge(a, b).border_matrix
        if out.shape[1] != traversal.shape[0] or traversal.shape[1] != nxt.shape[0]:
            raise ConfigError(f"border dimension mismatch along path {path}")
        out = out @ traversal @ nxt
    return out
