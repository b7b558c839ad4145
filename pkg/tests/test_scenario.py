import io
import math

import numpy as np
import pytest

from camlabel.errors import ConfigError
from camlabel.observation import write_trace
from camlabel.scenario import (
    ObjectSpec,
    ScenarioSpec,
    distort,
    emit_training_split,
    generate_trace,
    inject_missing,
    synthetic_scenario,
)
from camlabel.spatiotemporal import learn_travel_models, travel_time_likelihood, TravelTimeModel
from camlabel.topology import CameraParams, build_topology, neighbors

from conftest import camera, edge

LOOK = np.array([[0.25, 0.25, 0.5, 0.0]])


def dyadic_line(n=3, mean=8.0, var=4.0):
    """Chain network whose times are all exactly representable."""
    cams = [CameraParams(np.eye(2), gains=(1.0,), noise_scale=0.0, dwell=(1.0, 1.0)) for _ in range(n)]
    edges = [(a, a + 1, edge(2.0, mean, var, 0.5), edge(2.0, mean, var, 0.5)) for a in range(n - 1)]
    return build_topology(cams, edges)


def test_single_visit_object():
    topo = dyadic_line()
    spec = ScenarioSpec(topo, (ObjectSpec(0, LOOK, 3.0, 1, lifetime=1),), seed=5)
    trace = generate_trace(spec)
    assert len(trace) == 1
    assert trace[0].truth == trace[0].label


def test_noiseless_travel_lands_on_the_mean():
    topo = dyadic_line()
    objects = tuple(ObjectSpec(i, LOOK, float(i), i % 3, lifetime=6) for i in range(3))
    trace = generate_trace(ScenarioSpec(topo, objects, seed=1, travel_noise=0.0))
    last = {}
    gaps = []
    for o in trace:
        prev = last.get(o.truth)
        if prev is not None:
            gaps.append(o.st.t_en - prev.st.t_le)
            m = TravelTimeModel(2.0, 8.0, 4.0)
            assert travel_time_likelihood(m, o.st.t_en, prev.st.t_le) == 1 / math.sqrt(2 * math.pi * 4.0)
        last[o.truth] = o
    assert gaps and all(g == 8.0 for g in gaps)
    # identity gains and zero noise leave appearance untouched
    assert all(np.array_equal(o.histogram, LOOK) for o in trace)


def test_fixed_seed_gives_byte_identical_traces():
    texts = []
    for _ in range(2):
        buf = io.StringIO()
        write_trace(generate_trace(synthetic_scenario(7, n_objects=5, n_observations=60)), buf)
        texts.append(buf.getvalue())
    assert texts[0] == texts[1]


def test_scenario_size_and_truth():
    trace = generate_trace(synthetic_scenario(3))
    assert len(trace) == 300
    assert len({o.truth for o in trace}) == 10
    for o in trace:
        assert o.truth.head_time <= o.st.t_en


def test_transits_respect_minimum_travel_and_adjacency():
    spec = synthetic_scenario(4)
    trace = generate_trace(spec)
    last = {}
    for o in trace:
        prev = last.get(o.truth)
        if prev is not None:
            assert o.camera in neighbors(spec.topology, prev.camera, 0)
            assert o.st.t_en - prev.st.t_le > spec.topology.edge(prev.camera, o.camera).min_travel
        last[o.truth] = o


def test_unreachable_walk_is_a_generation_error():
    topo = build_topology([camera(), camera(), camera()], [(0, 1, edge(), edge())])
    spec = ScenarioSpec(topo, (ObjectSpec(0, np.tile(LOOK, (3, 1)), 0.0, 2, lifetime=3),))
    with pytest.raises(ConfigError, match="stuck"):
        generate_trace(spec)


def test_distortion_applies_gain_then_renormalizes():
    out = distort(np.array([[0.5, 0.5, 0.0, 0.0]]), (2.0,), 0.0, np.random.default_rng(0))
    assert out.tolist() == [[0.0, 0.5, 0.0, 0.5]]


def test_no_deletion_keeps_the_trace():
    trace = generate_trace(synthetic_scenario(1, n_objects=4, n_observations=40))
    kept, gone = inject_missing(trace, count=0, seed=3)
    assert kept == trace and gone == []


def test_deleting_a_head_promotes_the_second_sighting():
    trace = generate_trace(synthetic_scenario(1, n_objects=4, n_observations=40))
    head = trace[0]
    second = next(o for o in trace[1:] if o.truth == head.truth)
    for seed in range(500):
        kept, gone = inject_missing(trace, count=1, seed=seed)
        if gone[0] is head:
            break
    else:
        pytest.fail("no seed deleted the first observation")
    survivors = [o for o in kept if o.global_index is not None and o.truth == second.label]
    assert survivors and survivors[0].global_index == second.global_index
    assert all(o.truth != head.label for o in kept)


def test_deletion_is_seeded_and_uniform_count():
    trace = generate_trace(synthetic_scenario(2))
    a, gone = inject_missing(trace, count=40, seed=9)
    b, _ = inject_missing(trace, count=40, seed=9)
    assert a == b
    assert len(a) == 260 and len(gone) == 40
    assert len(gone) / len(trace) == pytest.approx(0.133, abs=1e-3)
    with pytest.raises(ConfigError):
        inject_missing(trace, count=300)


def test_training_split_halves_ten_events():
    trace = generate_trace(synthetic_scenario(5, n_objects=2, n_observations=10))
    train, rest = emit_training_split(trace, 0.5)
    assert len(train) == 5 and len(rest) == 5
    assert all(o.truth is not None for o in train)
    assert all(o.truth is None for o in rest)
    assert max(o.event_key() for o in train) < min(o.event_key() for o in rest)
    train, rest = emit_training_split(trace, 0.31)
    assert len(train) == math.ceil(0.31 * 10)
    with pytest.raises(ConfigError):
        emit_training_split(trace, 1.0)


def test_training_split_recovers_noiseless_generator():
    spec = synthetic_scenario(8, n_objects=20, n_observations=600, travel_noise=0.0)
    train, _ = emit_training_split(generate_trace(spec), 0.6)
    fitted, _ = learn_travel_models(train, spec.topology)
    assert fitted
    for (u, v), m in fitted.items():
        assert abs(m.mean_travel - spec.topology.edge(u, v).mean_travel) <= 1e-9

