"""Distributed Bayesian consistent labeling for non-overlapping camera networks."""

from .observation import Belief, Label, Observation, SpatioTemporalObs
from .inference import InferenceConfig

__version__ = "0.1.0"

__all__ = ["Belief", "Label", "Observation", "SpatioTemporalObs", "InferenceConfig", "__version__"]
