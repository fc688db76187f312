"""Policy extraction: AWR, DDPG+BC and SfBC on top of frozen value functions."""

from orlab.policy.extract import (
    ExtractionConfig,
    ExtractionMethod,
    PolicyArtifact,
    PolicyLearner,
    build_policy,
    default_grid,
    extract,
)
from orlab.policy.head import EVAL_STD, GaussianPolicy, StdMode, gaussian_kl
from orlab.policy.losses import (
    SfbcChoice,
    awr_loss,
    awr_weights,
    bc_loss,
    ddpg_bc_loss,
    sfbc_select,
    weighted_nll,
)

__all__ = [
    "EVAL_STD",
    "ExtractionConfig",
    "ExtractionMethod",
    "GaussianPolicy",
    "PolicyArtifact",
    "PolicyLearner",
    "SfbcChoice",
    "StdMode",
    "awr_loss",
    "awr_weights",
    "bc_loss",
    "build_policy",
    "ddpg_bc_loss",
    "default_grid",
    "extract",
    "gaussian_kl",
    "sfbc_select",
    "weighted_nll",
]
