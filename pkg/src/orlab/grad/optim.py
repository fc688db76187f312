"""
Adam and Polyak averaging as pure functions over ParamSets.

Both return new ParamSets; callers rebind their references. This keeps
frozen copies (target networks, value functions shared across extraction
runs) immune to later updates.
"""

from dataclasses import dataclass, replace

import numpy as np

from orlab.grad.params import ParamSet
from orlab.types import ErrorCode, OrlabError

DEFAULT_LR = 3e-4
BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8
POLYAK_TAU = 0.005


@dataclass(frozen=True)
class AdamState:
    """
    Optimizer state congruent with one ParamSet.

    Attributes:
        step: Number of updates applied so far.
        m: First-moment estimates, keyed by parameter name.
        v: Second-moment estimates, keyed by parameter name.
        lr: Learning rate.
        beta1, beta2, eps: Adam constants.
    """

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    lr: float = DEFAULT_LR
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPSILON

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValueError(f"step must be >= 0, got {self.step}")
        if set(self.m) != set(self.v):
            raise ValueError("first and second moments must cover the same parameters")

    @classmethod
    def fresh(cls, params: ParamSet, lr: float = DEFAULT_LR) -> "AdamState":
        zeros = {name: np.zeros_like(t.data) for name, t in params.items()}
        return cls(step=0, m=zeros, v={k: z.copy() for k, z in zeros.items()}, lr=lr)

    def with_lr(self, lr: float) -> "AdamState":
        return replace(self, lr=lr)


def adam_step(
    params: ParamSet,
    grads: ParamSet,
    state: AdamState,
) -> tuple[ParamSet, AdamState]:
    """
    One bias-corrected Adam update.

    Returns:
        (new params, new state) with state.step incremented by one.

    Raises:
        OrlabError: GRAD_SHAPE_MISMATCH if grads or moments are not congruent
            with params, GRAD_NON_FINITE if a gradient has NaN/Inf.
    """
    params.check_congruent(grads)
    params.check_congruent(state.m)
    if not grads.is_finite():
        raise OrlabError("gradient is not finite", ErrorCode.GRAD_NON_FINITE)

    t = state.step + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    new_values: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads[name].data
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        new_values[name] = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v

    return params.replace(new_values), replace(state, step=t, m=new_m, v=new_v)


def polyak_update(target: ParamSet, online: ParamSet, tau: float = POLYAK_TAU) -> ParamSet:
    """target <- tau * online + (1 - tau) * target, elementwise."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    target.check_congruent(online)
    return target.replace(
        {name: tau * online[name].data + (1.0 - tau) * t.data for name, t in target.items()}
    )
