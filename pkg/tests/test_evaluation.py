import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camlabel.evaluation import (
    SweepCase,
    belief_matrix,
    estimated_count,
    export_belief_matrix,
    missing_sweep,
    precision_recall_f,
    read_belief_matrix,
    score,
    write_sweep_csv,
)
from camlabel.inference import InferenceConfig
from camlabel.observation import Belief, Label
from camlabel.runtime import LabeledObservation, LabelingResult, run_simulation

from conftest import learned_case, obs


def test_perfect_labeling():
    truth = {"A": {1, 2, 3}, "B": {4, 5}}
    assert precision_recall_f(truth, truth) == (1.0, 1.0, 1.0)


def test_singletons_have_full_precision():
    truth = {"A": {1, 2, 3}, "B": {4, 5}}
    p, _, _ = precision_recall_f({i: {i} for i in range(1, 6)}, truth)
    assert p == 1.0


def test_one_cluster_has_full_recall():
    truth = {"A": {1, 2, 3}, "B": {4, 5}}
    _, r, _ = precision_recall_f({"x": {1, 2, 3, 4, 5}}, truth)
    assert r == 1.0


def test_worked_partition_example():
    p, r, f = precision_recall_f({"a": {1, 2}, "b": {3, 4, 5}}, {"A": {1, 2, 3}, "B": {4, 5}})
    assert (p, r, f) == pytest.approx((5 / 6, 5 / 6, 5 / 6), abs=1e-15)


def test_empty_estimate_is_an_error():
    with pytest.raises(ValueError):
        precision_recall_f({}, {"A": {1}})
    with pytest.raises(ValueError, match="different"):
        precision_recall_f({"a": {1}}, {"A": {1, 2}})


def _brute_force(est, truth):
    est_sets = list(est.values())
    true_sets = list(truth.values())
    k = len(est_sets)
    p = r = 0.0
    for y in est_sets:
        best_p = best_r = 0.0
        for t in true_sets:
            common = len([x for x in y if x in t])
            best_p = max(best_p, common / len(y))
            best_r = max(best_r, common / len(t))
        p += best_p
        r += best_r
    p, r = p / k, r / k
    return p, r, (2 * p * r / (p + r) if p + r else 0.0)


def _random_partition(rng, items, max_groups):
    out = {}
    for x in items:
        out.setdefault(rng.randrange(max_groups), set()).add(x)
    return out


def test_metrics_match_brute_force_on_random_partitions():
    rng = random.Random(2024)
    for _ in range(100):
        items = list(range(rng.randint(1, 30)))
        est = _random_partition(rng, items, rng.randint(1, 10))
        truth = _random_partition(rng, items, rng.randint(1, 10))
        got = precision_recall_f(est, truth)
        assert got == pytest.approx(_brute_force(est, truth), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=30), st.lists(st.integers(0, 6), min_size=30, max_size=30), st.randoms())
def test_metric_identities_and_label_renaming(est_ids, true_ids, rnd):
    est, truth = {}, {}
    for i, (e, t) in enumerate(zip(est_ids, true_ids)):
        est.setdefault(e, set()).add(i)
        truth.setdefault(t, set()).add(i)
    p, r, f = precision_recall_f(est, truth)
    assert 0.0 <= p <= 1.0 and 0.0 <= r <= 1.0 and 0.0 <= f <= 1.0
    assert abs(f * (p + r) - 2 * p * r) <= 1e-12
    names = list(est)
    renamed = dict(zip(rnd.sample(range(100, 200), len(names)), est.values()))
    assert precision_recall_f(renamed, truth) == (p, r, f)


def _result(labels, truths, beliefs=None):
    records = []
    for i, (lab, tru) in enumerate(zip(labels, truths)):
        o = obs(0, i + 1, float(i), gi=i, truth=tru)
        b = beliefs[i] if beliefs else Belief.certain(lab)
        records.append(LabeledObservation(o, b, lab, len(b), 0, 0.0))
    return LabelingResult(records)


def test_estimated_count():
    a, b = Label(0, 1, 0.0), Label(0, 2, 1.0)
    assert estimated_count(_result([a, a, a], [a, a, a])) == 1
    assert estimated_count(_result([a, b], [a, a])) == 2


def test_single_observation_matrix():
    a = Label(0, 1, 0.0)
    labels, mat = belief_matrix(_result([a], [a]))
    assert labels == [a] and mat.tolist() == [[1.0]]


def test_belief_matrix_round_trip(tmp_path):
    topo, trace, app = learned_case(3, n_objects=5, n_observations=60, train_objects=10, train_visits=40)
    result = run_simulation(topo, trace, InferenceConfig(), app)
    labels, mat = belief_matrix(result)
    assert np.all(np.abs(mat.sum(axis=1) - 1.0) <= 1e-9)
    path = tmp_path / "beliefs.csv"
    export_belief_matrix(result, path)
    names, ids, values, truth = read_belief_matrix(path)
    assert names == [str(lab) for lab in labels]
    assert ids == [(o.camera, o.local_index) for o in (r.observation for r in result.records)]
    assert np.array_equal(values, np.array([[float(f"{p:.12g}") for p in row] for row in mat]))
    assert truth == [str(r.observation.truth) for r in result.records]


def test_score_ignores_gated_observations():
    a = Label(0, 1, 0.0)
    result = _result([a, a], [a, a])
    result.dropped.append(obs(1, 1, 5.0))
    m = score(result)
    assert (m.K, m.f_measure, m.dropped) == (1, 1.0, 1)


def test_sweep_shape_and_clean_point(tmp_path):
    topo, trace, app = learned_case(0, n_objects=5, n_observations=60, train_objects=10, train_visits=40)
    rows = missing_sweep([SweepCase(topo, trace, app)], [0, 5], InferenceConfig(), trials=2)
    assert [(r.missing, r.order) for r in rows] == [(0, 0), (0, 1), (5, 0), (5, 1)]
    assert all(r.trials == 2 for r in rows)
    assert abs(rows[0].mean_f - rows[1].mean_f) <= 0.05
    path = tmp_path / "sweep.csv"
    write_sweep_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "missing,order,mean_f,std_f,trials"
    assert len(lines) == 5
    assert all(float(x) >= 0 for line in lines[1:] for x in line.split(","))
