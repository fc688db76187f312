"""
Policy-extraction objectives.

All losses read a frozen value function and return a scalar Tensor
connected only to the policy parameters they are given.
"""

from dataclasses import dataclass

import numpy as np

from orlab.data.sampling import Batch
from orlab.grad import ParamSet, Tensor
from orlab.policy.head import GaussianPolicy
from orlab.types import ErrorCode, OrlabError
from orlab.value.trainer import FrozenValue

AWR_WEIGHT_CLIP = 100.0
_EXP_FLOOR = -700.0


def bc_loss(policy: GaussianPolicy, params: ParamSet, batch: Batch) -> Tensor:
    """Negative mean log-likelihood of dataset actions."""
    return -policy.log_prob(params, batch.obs, batch.actions, batch.goals).mean()


def weighted_nll(policy: GaussianPolicy, params: ParamSet, batch: Batch, weights: np.ndarray) -> Tensor:
    return -(policy.log_prob(params, batch.obs, batch.actions, batch.goals) * weights).mean()


def advantages(value: FrozenValue, batch: Batch, baseline: np.ndarray | None = None) -> np.ndarray:
    """
    Q(s, a) - V(s) on dataset actions.

    `baseline` replaces V when the value function has no state-value head.
    """
    q = value.q(batch.obs, batch.actions, batch.goals)
    v = value.v(batch.obs, batch.goals) if baseline is None else baseline
    if v is None:
        raise ValueError("advantages need V(s): pass a baseline for critics without one")
    return q - v


def awr_weights(adv: np.ndarray, alpha: float, clip: float = AWR_WEIGHT_CLIP) -> np.ndarray:
    """exp(alpha * A) clamped at `clip`; strictly positive."""
    # floor keeps exp() from underflowing to exactly zero
    return np.exp(np.clip(alpha * adv, _EXP_FLOOR, np.log(clip)))


def awr_loss(
    policy: GaussianPolicy,
    params: ParamSet,
    value: FrozenValue,
    batch: Batch,
    alpha: float,
    baseline: np.ndarray | None = None,
) -> tuple[Tensor, np.ndarray]:
    """
    Advantage-weighted regression.

    Returns the loss and the (detached) weights. alpha=0 reduces to bc_loss
    exactly.
    """
    if alpha == 0.0:
        return bc_loss(policy, params, batch), np.ones(len(batch))
    weights = awr_weights(advantages(value, batch, baseline), alpha)
    if not np.all(weights > 0):
        raise OrlabError(
            "AWR weights must be finite and strictly positive",
            ErrorCode.POLICY_INVALID_WEIGHTS,
            details={"alpha": alpha, "n_invalid": int(np.sum(~(weights > 0)))},
        )
    return weighted_nll(policy, params, batch, weights), weights


def ddpg_bc_loss(
    policy: GaussianPolicy,
    params: ParamSet,
    value: FrozenValue,
    batch: Batch,
    alpha: float,
    q_weight: float = 1.0,
) -> Tensor:
    """
    -mean[q_weight * Q(s, clip(mu(s))) + alpha * log pi(a|s)].

    q_weight=0 (or alpha=inf) is pure behavioral cloning and returns
    bc_loss itself. Q is frozen: gradients reach the policy through the
    action input only.
    """
    if q_weight == 0.0 or np.isinf(alpha):
        return bc_loss(policy, params, batch)
    mu = policy.mean(params, batch.obs, batch.goals).clip(-1.0, 1.0)
    q = value.q_tensor(batch.obs, mu, batch.goals)
    log_prob = policy.log_prob(params, batch.obs, batch.actions, batch.goals)
    return -((q * q_weight).mean() + (log_prob * alpha).mean())


@dataclass(frozen=True, eq=False)
class SfbcChoice:
    """Result of one SfBC selection: the action and the set it came from."""

    action: np.ndarray
    candidates: np.ndarray
    q_values: np.ndarray
    index: int


def sfbc_select(
    bc_policy: GaussianPolicy,
    bc_params: ParamSet,
    value: FrozenValue,
    s: np.ndarray,
    g: np.ndarray | None,
    n: int,
    rng: np.random.Generator,
) -> SfbcChoice:
    """
    Sample n clipped actions from the behavior policy and keep the best.

    Ties go to the lowest candidate index.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    candidates = bc_policy.sample(bc_params, s, n, rng, g)
    obs = np.repeat(np.asarray(s, dtype=np.float64).reshape(1, -1), n, axis=0)
    goals = None if g is None else np.repeat(np.asarray(g, dtype=np.float64).reshape(1, -1), n, axis=0)
    q = value.q(obs, candidates, goals)
    best = int(np.argmax(q))
    return SfbcChoice(action=candidates[best].copy(), candidates=candidates, q_values=q, index=best)
