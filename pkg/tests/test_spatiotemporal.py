import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camlabel.errors import ConfigError, InsufficientDataError
from camlabel.observation import SpatioTemporalObs
from camlabel.scenario import synthetic_topology
from camlabel.spatiotemporal import (
    TravelTimeModel,
    border_likelihood,
    fit_travel_model,
    learn_travel_models,
    path_travel_model,
    st_likelihood_order0,
    st_likelihood_orderq,
    travel_time_likelihood,
)
from camlabel.topology import build_topology, chain_border_matrix, enumerate_paths, path_weights

from conftest import camera, edge, graph, label, obs


def leave(t, border=0):
    return SpatioTemporalObs(t, border, t, border)


def enter(t, border=0):
    return SpatioTemporalObs(t, border, t, border)


def test_arrival_at_the_minimum_travel_time_is_impossible():
    m = TravelTimeModel(3.0, 10.0, 4.0)
    assert travel_time_likelihood(m, t_en=8.0, t_le=5.0) == 0.0


def test_density_at_the_mean():
    m = TravelTimeModel(0.0, 10.0, 4.0)
    assert travel_time_likelihood(m, 10.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi * 4), abs=1e-12)
    assert travel_time_likelihood(m, 10.0, 0.0) == pytest.approx(0.19947, abs=1e-5)


def test_far_tail_underflows():
    m = TravelTimeModel(0.0, 10.0, 4.0)
    assert travel_time_likelihood(m, 10.0 + 100 * 2.0, 0.0) < 1e-300


def test_renormalized_density_divides_by_kept_mass():
    m = TravelTimeModel(10.0, 10.0, 4.0)  # truncation at the mean keeps half the mass
    plain = travel_time_likelihood(m, 11.0, 0.0)
    assert travel_time_likelihood(m, 11.0, 0.0, renormalize=True) == pytest.approx(2 * plain, rel=1e-12)


def test_nonpositive_variance_is_rejected():
    with pytest.raises(ConfigError):
        TravelTimeModel(0.0, 1.0, 0.0)


def test_border_lookup():
    assert border_likelihood(np.eye(2), 0, 0) == 1.0
    assert border_likelihood(np.eye(2), 0, 1) == 0.0
    assert border_likelihood(np.array([[0.7, 0.3], [0.4, 0.6]]), 1, 0) == 0.4
    with pytest.raises(ConfigError):
        border_likelihood(np.eye(2), 2, 0)


def test_order0_without_an_edge_is_zero():
    topo = graph(3, [(0, 1)])
    assert st_likelihood_order0(topo, enter(10.0), 2, leave(0.0), 0) == 0.0


def test_order0_before_minimum_travel_is_zero_for_any_borders():
    topo = graph(2, [(0, 1)], min_travel=5.0, border=np.full((2, 2), 0.5))
    for a, b in itertools.product(range(2), repeat=2):
        assert st_likelihood_order0(topo, enter(4.0, b), 1, leave(0.0, a), 0) == 0.0


def test_order0_is_the_product_of_its_factors():
    topo = graph(2, [(0, 1)], min_travel=0.0, mean=10.0, var=4.0, border=np.full((2, 2), 0.5))
    value = st_likelihood_order0(topo, enter(10.0), 1, leave(0.0), 0)
    assert value == pytest.approx(0.19947 * 0.5, abs=1e-5)
    assert value == pytest.approx(0.5 / math.sqrt(8 * math.pi), abs=1e-12)


def test_mixture_without_a_path_is_zero():
    topo = graph(4, [(0, 1), (2, 3)])
    assert st_likelihood_orderq(topo, enter(10.0), 3, leave(0.0), 0, 2) == 0.0


def test_triangle_mixture_matches_hand_sum():
    border = np.array([[0.7, 0.3], [0.4, 0.6]])
    swap = np.array([[0.2, 0.8], [0.9, 0.1]])
    cams = [camera(), camera(traversal=swap), camera()]
    topo = build_topology(
        cams,
        [
            (0, 2, edge(1.0, 10.0, 4.0, 0.3, border), edge(prob=0.2)),
            (0, 1, edge(0.5, 6.0, 1.0, 0.5, border), edge(prob=0.2)),
            (1, 2, edge(0.5, 7.0, 2.0, 0.2, np.eye(2)), edge(prob=0.2)),
        ],
    )
    gap, e_le, e_en = 12.0, 1, 0

    def normal(x, mean, var):
        return math.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)

    direct = 0.75 * normal(gap, 10.0, 4.0) * border[e_le, e_en]
    chained = border @ swap @ np.eye(2)
    via = 0.25 * normal(gap, 13.0, 3.0) * chained[e_le, e_en]
    got = st_likelihood_orderq(topo, enter(gap, e_en), 2, leave(0.0, e_le), 0, 1)
    assert got == pytest.approx(direct + via, rel=1e-12)


def test_path_statistics_are_sums():
    topo = build_topology(
        [camera() for _ in range(3)],
        [(0, 1, edge(1.0, 5.0, 1.0), edge()), (1, 2, edge(2.0, 7.0, 3.0), edge())],
    )
    m = path_travel_model(topo, enumerate_paths(topo, 0, 2, 1)[0])
    assert (m.min_travel, m.mean_travel, m.travel_var) == (3.0, 12.0, 4.0)


def test_fit_two_samples():
    m = fit_travel_model([8.0, 12.0])
    assert (m.mean_travel, m.travel_var, m.min_travel) == (10.0, 8.0, 0.0)


def test_fit_constant_samples_floors_the_variance():
    m = fit_travel_model([10.0] * 5)
    assert m.mean_travel == 10.0
    assert m.travel_var == 1e-6
    assert m.min_travel == pytest.approx(10.0 - 3e-3, abs=1e-12)


def test_fit_needs_two_samples():
    with pytest.raises(InsufficientDataError, match="insufficient training data"):
        fit_travel_model([4.0])


def test_fit_recovers_mean_and_variance_within_three_standard_errors():
    rng = np.random.default_rng(11)
    mean, sd, n = 20.0, 3.0, 1000
    m = fit_travel_model(rng.normal(mean, sd, size=n))
    assert abs(m.mean_travel - mean) <= 3 * sd / math.sqrt(n)
    # standard error of the sample variance of a normal: sigma^2 * sqrt(2 / (n - 1))
    assert abs(m.travel_var - sd**2) <= 3 * sd**2 * math.sqrt(2 / (n - 1))


def test_learn_flags_edges_without_enough_transits():
    topo = graph(3, [(0, 1), (1, 2)])
    a, b = label(0, 1, 0.0), label(0, 2, 10.0)
    trace = [
        obs(0, 1, 0.0, 1.0, truth=a),
        obs(0, 2, 10.0, 11.0, truth=b),
        obs(1, 1, 9.0, 9.5, truth=a),
        obs(1, 2, 21.0, 21.5, truth=b),
        obs(2, 1, 30.0, 30.0, truth=b),
    ]
    fitted, short = learn_travel_models(trace, topo)
    assert fitted[(0, 1)].mean_travel == pytest.approx(9.0)
    assert (1, 2) in short and (1, 0) in short
    assert (0, 1) not in short


# ----------------------------------------------------------------------------
# properties


@st.composite
def mixture_cases(draw):
    n = draw(st.integers(2, 6))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = sorted(draw(st.lists(st.sampled_from(pairs), min_size=1, unique=True)))
    topo = synthetic_topology(
        np.random.default_rng(draw(st.integers(0, 2**16))), chosen, n_cameras=n,
        travel_range=(5.0, 15.0), sigma_frac=0.3,
    )
    src, dst = draw(st.permutations(range(n)))[:2]
    gap = draw(st.floats(0.0, 60.0))
    return topo, src, dst, gap, draw(st.integers(0, 1)), draw(st.integers(0, 1)), draw(st.integers(0, 3))


@settings(max_examples=120, deadline=None)
@given(mixture_cases())
def test_mixture_is_a_convex_combination_of_path_densities(case):
    topo, src, dst, gap, e_le, e_en, q = case
    paths = enumerate_paths(topo, src, dst, q)
    got = st_likelihood_orderq(topo, enter(gap, e_en), dst, leave(0.0, e_le), src, q)
    if not paths:
        assert got == 0.0
        return
    weights = path_weights(topo, paths)
    per_path = [
        travel_time_likelihood(path_travel_model(topo, p), gap, 0.0) * chain_border_matrix(topo, p)[e_le, e_en]
        for p in paths
    ]
    assert got == pytest.approx(sum(w * d for w, d in zip(weights, per_path)), rel=1e-12, abs=1e-300)
    assert min(per_path) - 1e-15 <= got <= max(per_path) + 1e-15
    if q == 0:
        assert got == st_likelihood_order0(topo, enter(gap, e_en), dst, leave(0.0, e_le), src)


@settings(max_examples=120, deadline=None)
@given(mixture_cases())
def test_mixture_is_zero_below_every_path_minimum(case):
    topo, src, dst, _, e_le, e_en, q = case
    paths = enumerate_paths(topo, src, dst, q)
    if not paths:
        return
    fastest = min(path_travel_model(topo, p).min_travel for p in paths)
    for frac in (0.0, 0.5, 1.0):
        assert st_likelihood_orderq(topo, enter(frac * fastest, e_en), dst, leave(0.0, e_le), src, q) == 0.0
