"""Decoupled value learning: SARSA, IQL and contrastive critics."""

from orlab.value.critics import (
    ActionValueCritic,
    CrlNetwork,
    QNetwork,
    StateValue,
    TabularCrl,
    TabularQ,
    TabularV,
    VNetwork,
)
from orlab.value.losses import (
    crl_loss,
    expectile_loss,
    iql_q_loss,
    iql_value_loss,
    sarsa_loss,
    sarsa_targets,
)
from orlab.value.trainer import (
    FrozenValue,
    ValueConfig,
    ValueLearner,
    ValueObjective,
    build_critic,
    q_of,
    train_value,
)

__all__ = [
    "ActionValueCritic",
    "CrlNetwork",
    "FrozenValue",
    "QNetwork",
    "StateValue",
    "TabularCrl",
    "TabularQ",
    "TabularV",
    "VNetwork",
    "ValueConfig",
    "ValueLearner",
    "ValueObjective",
    "build_critic",
    "crl_loss",
    "expectile_loss",
    "iql_q_loss",
    "iql_value_loss",
    "q_of",
    "sarsa_loss",
    "sarsa_targets",
    "train_value",
]
