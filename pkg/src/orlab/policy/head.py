"""
Gaussian policy heads without squashing.

The mean is an MLP over the (optionally featurized) state and goal. The
standard deviation is either a fixed constant or a learnable state-
independent log-std vector clamped to [LOG_STD_MIN, LOG_STD_MAX]. Emitted
actions are clipped to the action bounds; log-probabilities are those of
the unclipped Gaussian.
"""

from enum import Enum
from typing import Any

import numpy as np

from orlab.featurize import TanhFeaturizer
from orlab.grad import Activation, MlpSpec, ParamSet, Tensor, as_tensor, forward, init_params
from orlab.seeding import SeedLike, as_generator

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
FIXED_STD = 1.0
EVAL_STD = 0.4

_LOG_2PI = float(np.log(2.0 * np.pi))


class StdMode(str, Enum):
    FIXED = "fixed"
    LEARNED = "learned"


class GaussianPolicy:
    """
    Architecture of a diagonal Gaussian policy.

    Like the critics this object holds no parameters: init() creates a
    ParamSet and every method takes one. Parameter names are "mean.<layer>"
    plus "log_std" when the std is learned.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        goal_dim: int = 0,
        hidden_dims: tuple[int, ...] = (256, 256),
        activation: Activation | str = Activation.GELU,
        layer_norm: bool = True,
        std_mode: StdMode | str = StdMode.FIXED,
        fixed_std: float = FIXED_STD,
        featurizer: TanhFeaturizer | None = None,
    ) -> None:
        if fixed_std <= 0:
            raise ValueError(f"fixed_std must be > 0, got {fixed_std}")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.goal_dim = goal_dim
        self.std_mode = StdMode(std_mode)
        self.fixed_std = fixed_std
        self.featurizer = featurizer
        width = featurizer.output_dim(state_dim) if featurizer else state_dim
        goal_width = (featurizer.output_dim(goal_dim) if featurizer else goal_dim) if goal_dim else 0
        self.spec = MlpSpec(width + goal_width, tuple(hidden_dims), action_dim, Activation(activation), layer_norm)

    # =========================================================================
    # PARAMETERS
    # =========================================================================

    def init(self, seed: SeedLike) -> ParamSet:
        items = list(ParamSet.join({"mean": init_params(self.spec, as_generator(seed))}).items())
        if self.std_mode is StdMode.LEARNED:
            items.append(("log_std", Tensor(np.zeros(self.action_dim), name="log_std")))
        return ParamSet(items)

    # =========================================================================
    # DISTRIBUTION
    # =========================================================================

    def inputs(self, obs: np.ndarray, goals: np.ndarray | None = None) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        parts = [self.featurizer(obs) if self.featurizer else obs]
        if self.goal_dim:
            if goals is None:
                raise ValueError("goal-conditioned policy needs goals")
            goals = np.atleast_2d(np.asarray(goals, dtype=np.float64))
            parts.append(self.featurizer(goals) if self.featurizer else goals)
        return np.concatenate(parts, axis=1)

    def mean(self, params: ParamSet, obs: np.ndarray, goals: np.ndarray | None = None) -> Tensor:
        return forward(self.spec, params.scoped("mean"), self.inputs(obs, goals))

    def log_std(self, params: ParamSet) -> Tensor:
        if self.std_mode is StdMode.LEARNED:
            return params["log_std"].clip(LOG_STD_MIN, LOG_STD_MAX)
        return as_tensor(np.full(self.action_dim, np.log(self.fixed_std)))

    def std(self, params: ParamSet) -> np.ndarray:
        return np.exp(self.log_std(params).data)

    def log_prob(
        self,
        params: ParamSet,
        obs: np.ndarray,
        actions: np.ndarray,
        goals: np.ndarray | None = None,
    ) -> Tensor:
        """Per-row log density of `actions`, shape (batch,)."""
        mu = self.mean(params, obs, goals)
        log_std = self.log_std(params)
        z = (as_tensor(np.atleast_2d(actions)) - mu) * (-log_std).exp()
        return (z.square() * -0.5 - log_std - 0.5 * _LOG_2PI).sum(axis=-1)

    # =========================================================================
    # ACTING
    # =========================================================================

    def act(
        self,
        params: ParamSet,
        obs: np.ndarray,
        goals: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
        std: float | None = None,
    ) -> np.ndarray:
        """
        Clipped action(s).

        Without rng the mean is returned (deterministic evaluation). With
        rng Gaussian noise is added using `std` if given, else the policy's
        own standard deviation.
        """
        single = np.asarray(obs).ndim == 1
        mu = self.mean(params, obs, goals).data
        if rng is not None:
            scale = self.std(params) if std is None else np.full(self.action_dim, std)
            mu = mu + scale * rng.standard_normal(mu.shape)
        out = np.clip(mu, -1.0, 1.0)
        return out[0] if single else out

    def sample(
        self,
        params: ParamSet,
        obs: np.ndarray,
        n: int,
        rng: np.random.Generator,
        goals: np.ndarray | None = None,
    ) -> np.ndarray:
        """n clipped samples for one state, shape (n, action_dim)."""
        mu = self.mean(params, np.asarray(obs).reshape(1, -1), None if goals is None else np.asarray(goals).reshape(1, -1)).data[0]
        draws = mu + self.std(params) * rng.standard_normal((n, self.action_dim))
        return np.clip(draws, -1.0, 1.0)

    # =========================================================================
    # SERIALIZATION
    # =========================================================================

    def to_dict(self) -> dict[str, Any]:
        return {
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "goal_dim": self.goal_dim,
            "hidden_dims": list(self.spec.hidden_dims),
            "activation": self.spec.activation.value,
            "layer_norm": self.spec.layer_norm,
            "std_mode": self.std_mode.value,
            "fixed_std": self.fixed_std,
            "featurizer": self.featurizer.to_dict() if self.featurizer else None,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GaussianPolicy":
        data = dict(data)
        feat = data.pop("featurizer", None)
        data["hidden_dims"] = tuple(data["hidden_dims"])
        return cls(**data, featurizer=TanhFeaturizer.from_dict(feat) if feat else None)


def gaussian_kl(mu_p: Tensor | np.ndarray, log_std_p: Tensor | np.ndarray, mu_q: Tensor, log_std_q: Tensor) -> Tensor:
    """
    KL(p || q) between diagonal Gaussians, summed over action dims.

    KL = sum[log s_q - log s_p + (s_p^2 + (m_p - m_q)^2) / (2 s_q^2) - 1/2]
    """
    lp, lq = as_tensor(log_std_p), as_tensor(log_std_q)
    var_ratio = (lp * 2.0 - lq * 2.0).exp()
    mean_term = (as_tensor(mu_p) - mu_q).square() * (lq * -2.0).exp()
    return (lq - lp + (var_ratio + mean_term) * 0.5 - 0.5).sum(axis=-1)
