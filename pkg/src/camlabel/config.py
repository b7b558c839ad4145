"""Versioned YAML configuration covering topology, scenario, training, inference and model defaults.

Every mapping read from the file remembers the line it started on and the
line of each key, so validation errors point at the offending spot::

    config.yaml:12: topology.edges[1].forward: missing required field 'travel_var'
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError
from .inference import InferenceConfig
from .scenario import OFFICE_EDGES, ScenarioSpec, synthetic_scenario, synthetic_topology, training_spec
from .topology import CameraParams, EdgeParams, Topology, build_topology

CONFIG_VERSION = 1
CONFIG_DIR_ENV = "CAMLABEL_CONFIG_DIR"
DEFAULT_CONFIG_NAME = "camlabel.yaml"


class _Node(dict):
    """A mapping that knows where it came from."""

    source: str = "<config>"
    line: int = 0
    key_lines: dict

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.key_lines = {}


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader: _LineLoader, node: yaml.MappingNode) -> _Node:
    loader.flatten_mapping(node)
    out = _Node()
    out.line = node.start_mark.line + 1
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        out[key] = loader.construct_object(value_node, deep=True)
        out.key_lines[key] = key_node.start_mark.line + 1
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


class _Section:
    """Typed accessors over one config mapping, producing located errors."""

    def __init__(self, node: Any, path: str, source: str, line: int = 0):
        if node is None:
            node = _Node()
            node.line = line
        if not isinstance(node, dict):
            raise ConfigError(f"{source}:{line}: {path or 'config'}: expected a mapping")
        self.node = node
        self.path = path
        self.source = source

    def _where(self, key: str | None = None) -> str:
        line = getattr(self.node, "line", 0)
        if key is not None:
            line = getattr(self.node, "key_lines", {}).get(key, line)
        name = f"{self.path}.{key}" if (self.path and key) else (key or self.path or "config")
        return f"{self.source}:{line}: {name}"

    def error(self, key: str | None, message: str) -> ConfigError:
        return ConfigError(f"{self._where(key)}: {message}")

    def has(self, key: str) -> bool:
        return key in self.node and self.node[key] is not None

    def raw(self, key: str, default: Any = None, required: bool = False) -> Any:
        if key not in self.node or self.node[key] is None:
            if required:
                where = f"{self.source}:{getattr(self.node, 'line', 0)}: {self.path or 'config'}"
                raise ConfigError(f"{where}: missing required field '{key}'")
            return default
        return self.node[key]

    def number(
        self, key: str, default: Any = None, required: bool = False, kind=float, unbounded: bool = False
    ) -> Any:
        """``unbounded`` lets the strings inf/unbounded stand for ``None``."""
        value = self.raw(key, default, required)
        if value is None:
            return None
        if unbounded and isinstance(value, str) and value.lower() in ("inf", "unbounded"):
            return None
        if isinstance(value, bool):
            raise self.error(key, f"expected {kind.__name__}, got {value!r}")
        try:
            if kind is int and isinstance(value, float) and not value.is_integer():
                raise ValueError
            return kind(value)
        except (TypeError, ValueError):
            raise self.error(key, f"expected {kind.__name__}, got {value!r}") from None

    def flag(self, key: str, default: bool = False) -> bool:
        value = self.raw(key, default)
        if not isinstance(value, bool):
            raise self.error(key, f"expected true/false, got {value!r}")
        return value

    def matrix(self, key: str, required: bool = True) -> np.ndarray | None:
        value = self.raw(key, None, required)
        if value is None:
            return None
        try:
            arr = np.array(value, dtype=float)
        except (TypeError, ValueError):
            raise self.error(key, "expected a numeric matrix") from None
        if arr.ndim != 2:
            raise self.error(key, "expected a list of rows")
        return arr

    def child(self, key: str, required: bool = False) -> "_Section":
        node = self.raw(key, None, required)
        line = getattr(self.node, "key_lines", {}).get(key, getattr(self.node, "line", 0))
        return _Section(node, f"{self.path}.{key}" if self.path else key, self.source, line)

    def items(self, key: str, required: bool = False) -> list["_Section"]:
        value = self.raw(key, [], required)
        if not isinstance(value, list):
            raise self.error(key, "expected a list")
        base = f"{self.path}.{key}" if self.path else key
        line = getattr(self.node, "key_lines", {}).get(key, 0)
        return [_Section(v, f"{base}[{i}]", self.source, line) for i, v in enumerate(value)]

    def unknown(self, allowed: set[str]) -> None:
        for key in self.node:
            if key not in allowed:
                raise self.error(key, f"unknown field (expected one of {sorted(allowed)})")


# ----------------------------------------------------------------------------
# parsed configuration


@dataclass(frozen=True)
class ScenarioSettings:
    seed: int = 0
    objects: int = 10
    observations: int = 300
    travel_noise: float = 1.0
    bins: int = 16
    min_appearance_distance: float = 0.8
    birth_window: float | None = None
    missing_count: int | None = None
    missing_rate: float | None = None


@dataclass(frozen=True)
class TrainingSettings:
    seed: int = 1000
    objects: int = 40
    visits: int = 100


@dataclass(frozen=True)
class AppearanceSettings:
    bandwidth: float = 10.0
    match_tolerance: float = 5e-3


@dataclass(frozen=True, eq=False)
class Config:
    topology: Topology
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    appearance: AppearanceSettings = field(default_factory=AppearanceSettings)
    source: str = "<config>"

    def scenario_spec(self, seed: int | None = None) -> ScenarioSpec:
        s = self.scenario
        spec = synthetic_scenario(
            s.seed if seed is None else seed,
            n_objects=s.objects,
            n_observations=s.observations,
            topology=self.topology,
            birth_window=s.birth_window,
            channels=_channels(self.topology),
            bins=s.bins,
            min_appearance_distance=s.min_appearance_distance,
            travel_noise=s.travel_noise,
        )
        return replace(spec, missing_count=s.missing_count, missing_rate=s.missing_rate)

    def training_spec(self, spec: ScenarioSpec | None = None) -> ScenarioSpec:
        spec = spec or self.scenario_spec()
        t = self.training
        return training_spec(spec, t.seed, n_objects=t.objects, visits=t.visits)


def _channels(topo: Topology) -> int:
    return len(topo.cameras[0].gains) if topo.cameras else 3


def _parse_edge(sec: _Section, borders_src: int, borders_dst: int) -> EdgeParams:
    sec.unknown({"min_travel", "mean_travel", "travel_var", "transition_prob", "border_matrix"})
    matrix = sec.matrix("border_matrix")
    if matrix.shape != (borders_src, borders_dst):
        raise sec.error("border_matrix", f"expected shape {(borders_src, borders_dst)}, got {matrix.shape}")
    try:
        return EdgeParams(
            sec.number("min_travel", required=True),
            sec.number("mean_travel", required=True),
            sec.number("travel_var", required=True),
            sec.number("transition_prob", required=True),
            matrix,
        )
    except ConfigError as exc:
        raise sec.error(None, str(exc)) from None


def _parse_topology(sec: _Section) -> Topology:
    sec.unknown({"preset", "seed", "cameras", "edges", "generator"})
    preset = sec.raw("preset", "explicit" if sec.has("cameras") else "office")
    if preset in ("office", "random"):
        gen = sec.child("generator")
        gen.unknown({
            "n_cameras", "borders", "travel_range", "sigma_frac", "min_frac", "exit_prob",
            "border_peak", "gain_range", "channels", "noise_scale", "dwell",
        })
        kwargs = {}
        for key in ("n_cameras", "borders", "channels"):
            if gen.has(key):
                kwargs[key] = gen.number(key, kind=int)
        for key in ("sigma_frac", "min_frac", "exit_prob", "border_peak", "noise_scale"):
            if gen.has(key):
                kwargs[key] = gen.number(key)
        for key in ("travel_range", "gain_range", "dwell"):
            if gen.has(key):
                pair = gen.raw(key)
                if not (isinstance(pair, list) and len(pair) == 2):
                    raise gen.error(key, "expected a [low, high] pair")
                kwargs[key] = (float(pair[0]), float(pair[1]))
        rng = np.random.default_rng(sec.number("seed", 0, kind=int))
        edges = OFFICE_EDGES if preset == "office" else None
        try:
            return synthetic_topology(rng, edges, **kwargs)
        except ConfigError as exc:
            raise sec.error("generator", str(exc)) from None
    if preset != "explicit":
        raise sec.error("preset", f"unknown preset {preset!r} (office, random or explicit)")

    cameras = []
    for cam in sec.items("cameras", required=True):
        cam.unknown({"id", "traversal", "gains", "noise", "dwell"})
        if cam.has("id") and cam.number("id", kind=int) != len(cameras):
            raise cam.error("id", f"camera ids must be dense and ordered; expected {len(cameras)}")
        gains = tuple(float(g) for g in cam.raw("gains", [1.0, 1.0, 1.0]))
        dwell = cam.raw("dwell", [0.0025, 0.005])
        try:
            cameras.append(
                CameraParams(cam.matrix("traversal"), gains, cam.number("noise", 0.0), (float(dwell[0]), float(dwell[1])))
            )
        except ConfigError as exc:
            raise cam.error(None, str(exc)) from None
    if not cameras:
        raise sec.error("cameras", "at least one camera is required")
    if len({len(c.gains) for c in cameras}) > 1:
        raise sec.error("cameras", "all cameras must declare the same number of channel gains")
    links = []
    for e in sec.items("edges"):
        e.unknown({"between", "forward", "backward"})
        pair = e.raw("between", required=True)
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, int) for x in pair)):
            raise e.error("between", "expected [camera, camera]")
        a, b = pair
        for x in (a, b):
            if not 0 <= x < len(cameras):
                raise e.error("between", f"unknown camera id {x}")
        fwd = _parse_edge(e.child("forward", required=True), cameras[a].n_borders, cameras[b].n_borders)
        bwd = _parse_edge(e.child("backward", required=True), cameras[b].n_borders, cameras[a].n_borders)
        links.append((a, b, fwd, bwd))
    try:
        return build_topology(cameras, links)
    except ConfigError as exc:
        raise sec.error("edges", str(exc)) from None


def _parse_inference(sec: _Section) -> InferenceConfig:
    sec.unknown({"memory_depth", "space_cap", "order", "lambda0", "renormalize_truncation", "false_alarm_threshold"})
    d = InferenceConfig()
    memory = sec.number("memory_depth", d.memory_depth, kind=int, unbounded=True)
    cap = sec.number("space_cap", d.space_cap, kind=int, unbounded=True)
    order = sec.number("order", d.order, kind=int)
    lambda0 = sec.number("lambda0", d.lambda0)
    threshold = sec.number("false_alarm_threshold", d.false_alarm_threshold)
    if memory is not None and memory < 1:
        raise sec.error("memory_depth", f"must be >= 1, got {memory}")
    if cap is not None and cap < 2:
        raise sec.error("space_cap", f"must be >= 2, got {cap}")
    if order < 0:
        raise sec.error("order", f"must be >= 0, got {order}")
    if not lambda0 > 0:
        raise sec.error("lambda0", f"must be > 0, got {lambda0}")
    if threshold is not None and threshold < 0:
        raise sec.error("false_alarm_threshold", "must be >= 0")
    return InferenceConfig(
        memory_depth=memory,
        space_cap=cap,
        order=order,
        lambda0=lambda0,
        renormalize_truncation=sec.flag("renormalize_truncation", d.renormalize_truncation),
        false_alarm_threshold=threshold,
    )


def _parse_scenario(sec: _Section) -> ScenarioSettings:
    sec.unknown({
        "seed", "objects", "observations", "travel_noise", "bins", "min_appearance_distance",
        "birth_window", "missing_count", "missing_rate",
    })
    d = ScenarioSettings()
    s = ScenarioSettings(
        seed=sec.number("seed", d.seed, kind=int),
        objects=sec.number("objects", d.objects, kind=int),
        observations=sec.number("observations", d.observations, kind=int),
        travel_noise=sec.number("travel_noise", d.travel_noise),
        bins=sec.number("bins", d.bins, kind=int),
        min_appearance_distance=sec.number("min_appearance_distance", d.min_appearance_distance),
        birth_window=sec.number("birth_window", d.birth_window),
        missing_count=sec.number("missing_count", d.missing_count, kind=int),
        missing_rate=sec.number("missing_rate", d.missing_rate),
    )
    if s.objects < 1:
        raise sec.error("objects", "must be >= 1")
    if s.observations < s.objects:
        raise sec.error("observations", "must be at least the number of objects")
    if s.bins < 2:
        raise sec.error("bins", "must be >= 2")
    if s.missing_rate is not None and not 0.0 <= s.missing_rate < 1.0:
        raise sec.error("missing_rate", "must lie in [0, 1)")
    if s.missing_count is not None and s.missing_count < 0:
        raise sec.error("missing_count", "must be >= 0")
    return s


def _parse_training(sec: _Section) -> TrainingSettings:
    sec.unknown({"seed", "objects", "visits"})
    d = TrainingSettings()
    t = TrainingSettings(
        seed=sec.number("seed", d.seed, kind=int),
        objects=sec.number("objects", d.objects, kind=int),
        visits=sec.number("visits", d.visits, kind=int),
    )
    if t.objects < 1 or t.visits < 1:
        raise sec.error(None, "objects and visits must be >= 1")
    return t


def _parse_appearance(sec: _Section) -> AppearanceSettings:
    sec.unknown({"bandwidth", "match_tolerance"})
    d = AppearanceSettings()
    a = AppearanceSettings(sec.number("bandwidth", d.bandwidth), sec.number("match_tolerance", d.match_tolerance))
    if not a.bandwidth >= 0:
        raise sec.error("bandwidth", "must be >= 0")
    if not a.match_tolerance >= 0:
        raise sec.error("match_tolerance", "must be >= 0")
    return a


def parse_config(text: str, source: str = "<config>") -> Config:
    try:
        raw = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ConfigError(f"{source}:{line}: malformed YAML: {getattr(exc, 'problem', exc)}") from None
    root = _Section(raw, "", source, 1)
    root.unknown({"version", "topology", "scenario", "training", "inference", "appearance"})
    version = root.number("version", required=True, kind=int)
    if version != CONFIG_VERSION:
        raise root.error("version", f"unsupported config version {version} (expected {CONFIG_VERSION})")
    return Config(
        topology=_parse_topology(root.child("topology", required=True)),
        scenario=_parse_scenario(root.child("scenario")),
        training=_parse_training(root.child("training")),
        inference=_parse_inference(root.child("inference")),
        appearance=_parse_appearance(root.child("appearance")),
        source=source,
    )


def load_config(path: str | FsPath) -> Config:
    path = FsPath(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def default_config_path() -> FsPath | None:
    """``$CAMLABEL_CONFIG_DIR/camlabel.yaml`` when the variable is set."""
    base = os.environ.get(CONFIG_DIR_ENV)
    return FsPath(base) / DEFAULT_CONFIG_NAME if base else None


DEFAULT_CONFIG_TEXT = f"""\
version: {CONFIG_VERSION}

topology:
  preset: office        # office, random or explicit (cameras + edges)
  seed: 0

scenario:
  seed: 0
  objects: 10
  observations: 300
  travel_noise: 1.0     # scales each edge's travel-time spread; 0 gives exact mean travel
  bins: 16
  missing_count: 0

training:
  seed: 1000
  objects: 40
  visits: 100

inference:
  memory_depth: 20
  space_cap: 15
  order: 0
  lambda0: 0.02
  renormalize_truncation: false
  false_alarm_threshold: null

appearance:
  bandwidth: 10.0
  match_tolerance: 0.005
"""
