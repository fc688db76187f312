"""
Value-learning objectives.

Every loss returns a scalar Tensor connected to the online parameters it
is meant to update. Regression targets are computed from detached arrays
(target network, frozen V), so gradients never flow into them.
"""

import numpy as np

from orlab.data.sampling import Batch
from orlab.grad import ParamSet, Tensor, as_tensor
from orlab.value.critics import ActionValueCritic, Inputs, StateValue


def _detached_q(
    critic: ActionValueCritic,
    params: ParamSet,
    obs: np.ndarray,
    actions: np.ndarray,
    goals: np.ndarray | None,
) -> np.ndarray:
    """Critic estimate as a plain array; min over heads for clipped double-Q."""
    return critic.apply(params, obs, actions, goals).data


def sarsa_targets(
    critic: ActionValueCritic,
    target_params: ParamSet,
    batch: Batch,
    gamma: float,
) -> np.ndarray:
    """r + gamma * (1 - terminal) * Qbar(s', a'), using only dataset next actions."""
    bootstrap = _detached_q(critic, target_params, batch.next_obs, batch.next_actions, batch.goals)
    return batch.rewards + gamma * batch.not_done * bootstrap


def _mean_squared(targets: np.ndarray, estimates: list[Tensor]) -> Tensor:
    total: Tensor | None = None
    for q in estimates:
        err = ((as_tensor(targets) - q) ** 2).mean()
        total = err if total is None else total + err
    assert total is not None
    return total


def sarsa_loss(
    critic: ActionValueCritic,
    params: ParamSet,
    target_params: ParamSet,
    batch: Batch,
    gamma: float,
) -> Tensor:
    """
    Behavioral Bellman regression.

    mean_i (r_i + gamma (1 - d_i) Qbar(s'_i, a'_i) - Q(s_i, a_i))^2, summed
    over critic heads when clipped double-Q is on.
    """
    targets = sarsa_targets(critic, target_params, batch, gamma)
    return _mean_squared(targets, critic.heads(params, batch.obs, batch.actions, batch.goals))


def expectile_loss(diff: Inputs, tau: float) -> Tensor:
    """
    Asymmetric squared loss |tau - 1(x < 0)| * x^2, mean-reduced.

    Example:
        >>> expectile_loss(np.array([1.0]), 0.7).item()
        0.7
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    x = as_tensor(diff)
    weight = np.where(x.data < 0, 1.0 - tau, tau)
    return (x.square() * weight).mean()


def iql_value_loss(
    v_net: StateValue,
    v_params: ParamSet,
    critic: ActionValueCritic,
    target_params: ParamSet,
    batch: Batch,
    tau: float,
) -> Tensor:
    """Expectile regression of V(s) toward Qbar(s, a) on dataset actions."""
    q_bar = _detached_q(critic, target_params, batch.obs, batch.actions, batch.goals)
    return expectile_loss(as_tensor(q_bar) - v_net.apply(v_params, batch.obs, batch.goals), tau)


def iql_q_loss(
    critic: ActionValueCritic,
    params: ParamSet,
    v_net: StateValue,
    v_params: ParamSet,
    batch: Batch,
    gamma: float,
) -> Tensor:
    """Regression of Q(s, a) toward r + gamma (1 - d) V(s')."""
    v_next = v_net.apply(v_params, batch.next_obs, batch.goals).data
    targets = batch.rewards + gamma * batch.not_done * v_next
    return _mean_squared(targets, critic.heads(params, batch.obs, batch.actions, batch.goals))


def crl_loss(
    critic: ActionValueCritic,
    params: ParamSet,
    obs: np.ndarray,
    actions: np.ndarray,
    pos_goals: np.ndarray,
    neg_goals: np.ndarray,
    pos_weights: np.ndarray | None = None,
    neg_weights: np.ndarray | None = None,
) -> Tensor:
    """
    Binary contrastive objective with one negative per anchor.

    Minimizes -mean[log sigmoid(f(s, a, g+)) + log(1 - sigmoid(f(s, a, g-)))].
    Optional per-row weights scale each term before the mean, which lets
    callers express an exact expectation over an enumerated distribution.
    """
    pos = critic.apply(params, obs, actions, pos_goals).log_sigmoid()
    neg = (-critic.apply(params, obs, actions, neg_goals)).log_sigmoid()
    if pos_weights is not None:
        pos = pos * pos_weights
    if neg_weights is not None:
        neg = neg * neg_weights
    return -(pos.mean() + neg.mean())


def crl_batch_loss(critic: ActionValueCritic, params: ParamSet, batch: Batch) -> Tensor:
    if batch.goals is None or batch.neg_goals is None:
        raise ValueError("contrastive batches need positive and negative goals")
    return crl_loss(critic, params, batch.obs, batch.actions, batch.goals, batch.neg_goals)
