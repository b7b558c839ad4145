"""Shared builders for small hand-made networks and observations."""
import logging

import numpy as np
import pytest

from camlabel.appearance import AppearanceModel
from camlabel.models import learn_models
from camlabel.observation import Label, Observation, SpatioTemporalObs
from camlabel.scenario import generate_trace, synthetic_scenario, training_spec
from camlabel.topology import CameraParams, EdgeParams, build_topology


@pytest.fixture(autouse=True)
def _quiet_untrained_pair_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="camlabel")


def camera(borders=2, traversal=None):
    return CameraParams(np.eye(borders) if traversal is None else traversal)


def edge(min_travel=0.0, mean=10.0, var=4.0, prob=0.5, border=None, borders=2):
    return EdgeParams(min_travel, mean, var, prob, np.eye(borders) if border is None else border)


def graph(n, pairs, borders=2, **edge_kw):
    """Topology on ``n`` cameras with the same parameters on every directed edge."""
    return build_topology(
        [camera(borders) for _ in range(n)],
        [(a, b, edge(borders=borders, **edge_kw), edge(borders=borders, **edge_kw)) for a, b in pairs],
    )


def onehot(bin_index, bins=4, channels=1):
    h = np.zeros((channels, bins))
    h[:, bin_index] = 1.0
    return h


def uniform_hist(bins=4, channels=1):
    return np.full((channels, bins), 1.0 / bins)


def obs(cam, idx, t_en, t_le=None, hist=None, e_en=0, e_le=0, truth=None, gi=None):
    st = SpatioTemporalObs(t_en, e_en, t_en if t_le is None else t_le, e_le)
    return Observation(cam, idx, uniform_hist() if hist is None else hist, st, gi, truth)


def label(cam, idx, t=0.0):
    return Label(cam, idx, t)


def plain_appearance(bandwidth=1.0, lambda0=0.02):
    """No trained transfers: every pair compares histograms directly."""
    return AppearanceModel({}, bandwidth, lambda0)


def learned_case(seed, train_objects=40, train_visits=100, **scenario_kw):
    """(topology with fitted travel models, trace, appearance model) for one seeded scenario."""
    spec = synthetic_scenario(seed, **scenario_kw)
    trace = generate_trace(spec)
    train = generate_trace(training_spec(spec, seed + 1000, train_objects, train_visits))
    bundle = learn_models(train, spec.topology)
    return bundle.apply(spec.topology), trace, bundle.appearance
