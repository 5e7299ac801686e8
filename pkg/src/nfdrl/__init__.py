"""Flow-based distributional reinforcement learning on tabular MDPs.

Return distributions are modeled as Gaussian-mixture-CDF normalizing flows
with a learned symmetric support half-width, trained against bootstrap
target flows using the exact Cramer distance or its PDF-based surrogate.
"""

from .agent import ReplayBuffer, TrainConfig, TrainResult, train
from .envs import (
    TabularMdp,
    Transition,
    make_bernoulli_mdp,
    make_frozen_lake,
    make_mdp1,
    make_mdp2,
    make_mdp3,
)
from .flows import MixtureFlowParams, ReturnSample, density_at, forward_sample, invert_flow
from .losses import LossValue, exact_cramer, surrogate_cramer
from .targets import AlignedPair, TargetSampleSet, align, build_target

__version__ = "0.1.0"

__all__ = [
    "AlignedPair",
    "LossValue",
    "MixtureFlowParams",
    "ReplayBuffer",
    "ReturnSample",
    "TabularMdp",
    "TargetSampleSet",
    "TrainConfig",
    "TrainResult",
    "Transition",
    "align",
    "build_target",
    "density_at",
    "exact_cramer",
    "forward_sample",
    "invert_flow",
    "make_bernoulli_mdp",
    "make_frozen_lake",
    "make_mdp1",
    "make_mdp2",
    "make_mdp3",
    "surrogate_cramer",
    "train",
]
