"""Built-in toy environments, scripted experts and DP oracles."""

from orlab.envs.dynamics import goal_reached, reset, step
from orlab.envs.expert import expert_action
from orlab.envs.oracle import (
    OracleModel,
    TabularMdp,
    ValueSolution,
    discounted_occupancy,
    policy_evaluation,
    solve_oracle,
    value_iteration,
)
from orlab.envs.spec import (
    BUNDLED_LAYOUTS,
    EnvId,
    EnvSpec,
    EnvState,
    MazeLayout,
    RewardKind,
    get_layout,
    load_layout,
    make_env,
    parse_layout,
)

__all__ = [
    "BUNDLED_LAYOUTS",
    "EnvId",
    "EnvSpec",
    "EnvState",
    "MazeLayout",
    "OracleModel",
    "RewardKind",
    "TabularMdp",
    "ValueSolution",
    "discounted_occupancy",
    "expert_action",
    "get_layout",
    "goal_reached",
    "load_layout",
    "make_env",
    "parse_layout",
    "policy_evaluation",
    "reset",
    "solve_oracle",
    "step",
    "value_iteration",
]
