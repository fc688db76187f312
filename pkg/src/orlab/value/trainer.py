"""
Value pretraining: SARSA, IQL and CRL learners and the frozen result.

A ValueLearner owns its online parameters, target copy and Adam state and
advances them one minibatch at a time. train_value() runs a learner for a
step budget and returns a FrozenValue, the immutable artifact every
extraction method consumes.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from orlab.data.dataset import SubsetView
from orlab.data.sampling import Batch, BatchSampler, GoalMix
from orlab.envs.spec import EnvSpec
from orlab.grad import (
    Activation,
    AdamState,
    ParamSet,
    Tensor,
    adam_step,
    backward,
    load_params,
    polyak_update,
    save_params,
)
from orlab.grad.optim import DEFAULT_LR, POLYAK_TAU
from orlab.seeding import SeedLike, as_generator, derive_seed
from orlab.types import ErrorCode, OrlabError
from orlab.value.critics import (
    ActionValueCritic,
    CrlNetwork,
    Inputs,
    QNetwork,
    StateValue,
    VNetwork,
    critic_from_dict,
    state_value_from_dict,
)
from orlab.value.losses import crl_batch_loss, iql_q_loss, iql_value_loss, sarsa_loss

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.99
EXPECTILE_GOAL_REACHING = 0.9
EXPECTILE_LOCOMOTION = 0.7


class ValueObjective(str, Enum):
    SARSA = "sarsa"
    IQL = "iql"
    CRL = "crl"


@dataclass(frozen=True)
class ValueConfig:
    """
    Hyperparameters for one value-learning run.

    Attributes:
        objective: Which learner to run.
        gamma: Discount.
        expectile: IQL tau (ignored by SARSA/CRL).
        steps: Gradient steps.
        batch_size: Minibatch size.
        lr: Adam learning rate for every network.
        polyak_tau: Target-network averaging coefficient.
        hidden_dims: MLP widths.
        activation: Hidden activation.
        layer_norm: LayerNorm after every hidden layer.
        double_q: Clipped double-Q (two heads, minimum in targets).
        embed_dim: Contrastive embedding width.
        goal_mix: Relabeling mixture for SARSA/IQL on goal-reaching data.
        log_every: Steps between recorded metric rows.
    """

    objective: ValueObjective = ValueObjective.IQL
    gamma: float = DEFAULT_GAMMA
    expectile: float = EXPECTILE_GOAL_REACHING
    steps: int = 20_000
    batch_size: int = 256
    lr: float = DEFAULT_LR
    polyak_tau: float = POLYAK_TAU
    hidden_dims: tuple[int, ...] = (256, 256)
    activation: Activation = Activation.GELU
    layer_norm: bool = True
    double_q: bool = False
    embed_dim: int = 64
    goal_mix: GoalMix = field(default_factory=GoalMix)
    log_every: int = 1000

    def __post_init__(self) -> None:
        object.__setattr__(self, "objective", ValueObjective(self.objective))
        object.__setattr__(self, "activation", Activation(self.activation))
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 < self.expectile < 1.0:
            raise ValueError(f"expectile must be in (0, 1), got {self.expectile}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")

    def with_steps(self, steps: int) -> "ValueConfig":
        return replace(self, steps=steps)

    def to_dict(self) -> dict[str, Any]:
        return {
            "objective": self.objective.value,
            "gamma": self.gamma,
            "expectile": self.expectile,
            "steps": self.steps,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "polyak_tau": self.polyak_tau,
            "hidden_dims": list(self.hidden_dims),
            "activation": self.activation.value,
            "layer_norm": self.layer_norm,
            "double_q": self.double_q,
            "embed_dim": self.embed_dim,
            "goal_mix": {"current": self.goal_mix.current, "future": self.goal_mix.future, "random": self.goal_mix.random},
            "log_every": self.log_every,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ValueConfig":
        data = dict(data)
        if "goal_mix" in data and isinstance(data["goal_mix"], dict):
            data["goal_mix"] = GoalMix.from_dict(data["goal_mix"])
        if "hidden_dims" in data:
            data["hidden_dims"] = tuple(data["hidden_dims"])
        return cls(**data)


# =============================================================================
# FROZEN VALUE FUNCTION
# =============================================================================


@dataclass(frozen=True, eq=False)
class FrozenValue:
    """
    A trained value function that no longer changes.

    Shared read-only across extraction runs; `digest` identifies it in
    policy sidecars and cell records.
    """

    objective: ValueObjective
    critic: ActionValueCritic
    params: ParamSet
    v_net: StateValue | None = None
    v_params: ParamSet | None = None
    config: ValueConfig | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def goal_conditioned(self) -> bool:
        return self.critic.goal_dim > 0

    @property
    def has_v(self) -> bool:
        return self.v_net is not None and self.v_params is not None

    def all_params(self) -> ParamSet:
        parts = {"q": self.params}
        if self.v_params is not None:
            parts["v"] = self.v_params
        return ParamSet.join(parts)

    @property
    def digest(self) -> str:
        return self.all_params().digest()

    def q_tensor(self, obs: Inputs, actions: Inputs, goals: Inputs | None = None) -> Tensor:
        """Q (or the contrastive score) as a graph node, for gradients w.r.t. actions."""
        return self.critic.apply(self.params, obs, actions, goals)

    def q(self, obs: np.ndarray, actions: np.ndarray, goals: np.ndarray | None = None) -> np.ndarray:
        return self.q_tensor(obs, actions, goals).data.copy()

    def v(self, obs: np.ndarray, goals: np.ndarray | None = None) -> np.ndarray | None:
        if not self.has_v:
            return None
        assert self.v_net is not None and self.v_params is not None
        return self.v_net.apply(self.v_params, obs, goals).data.copy()

    def save(self, path: str | Path) -> Path:
        """Write an ORLP checkpoint plus a JSON sidecar next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_params(path, self.all_params())
        sidecar = {
            "objective": self.objective.value,
            "critic": self.critic.to_dict(),
            "v_net": self.v_net.to_dict() if self.v_net else None,
            "config": self.config.to_dict() if self.config else None,
            "metadata": self.metadata,
            "digest": self.digest,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "FrozenValue":
        path = Path(path)
        params = load_params(path)
        sidecar_path = path.with_suffix(".json")
        if not sidecar_path.exists():
            raise OrlabError(f"value sidecar not found: {sidecar_path}", ErrorCode.PERSIST_FILE_NOT_FOUND)
        sidecar = json.loads(sidecar_path.read_text())
        v_net = state_value_from_dict(sidecar["v_net"]) if sidecar.get("v_net") else None
        return cls(
            objective=ValueObjective(sidecar["objective"]),
            critic=critic_from_dict(sidecar["critic"]),
            params=params.scoped("q"),
            v_net=v_net,
            v_params=params.scoped("v") if v_net else None,
            config=ValueConfig.from_dict(sidecar["config"]) if sidecar.get("config") else None,
            metadata=dict(sidecar.get("metadata", {})),
        )


def q_of(
    value: FrozenValue,
    s: np.ndarray,
    a: np.ndarray,
    g: np.ndarray | None = None,
) -> np.ndarray | float:
    """
    Value used by extraction: Q(s, a) for SARSA/IQL, f(s, a, g) for CRL.

    A single (1-D) state returns a float; a batch returns an array.

    Raises:
        OrlabError: VALUE_MISSING_GOAL if the critic is goal-conditioned and
            g is None.
    """
    s = np.asarray(s, dtype=np.float64)
    single = s.ndim == 1
    out = value.q(np.atleast_2d(s), np.atleast_2d(a), None if g is None else np.atleast_2d(g))
    return float(out[0]) if single else out


# =============================================================================
# LEARNER
# =============================================================================


def build_critic(config: ValueConfig, env: EnvSpec) -> tuple[ActionValueCritic, StateValue | None]:
    """Network architectures for `config.objective` on `env`."""
    if config.objective is ValueObjective.CRL:
        if not env.goal_conditioned:
            raise OrlabError(
                f"contrastive value learning needs a goal-reaching task, got {env.env_id.value}",
                ErrorCode.VALUE_UNSUPPORTED,
            )
        critic: ActionValueCritic = CrlNetwork(
            env.state_dim, env.action_dim, env.goal_dim, config.hidden_dims, config.embed_dim,
            config.activation, config.layer_norm,
        )
        return critic, None
    critic = QNetwork(
        env.state_dim, env.action_dim, env.goal_dim, config.hidden_dims,
        config.activation, config.layer_norm, config.double_q,
    )
    v_net = None
    if config.objective is ValueObjective.IQL:
        v_net = VNetwork(env.state_dim, env.goal_dim, config.hidden_dims, config.activation, config.layer_norm)
    return critic, v_net


class ValueLearner:
    """
    One value-learning run.

    Example:
        learner = ValueLearner(config, critic, v_net, seed=0)
        for _ in range(100):
            learner.update(sampler.next())
        frozen = learner.freeze()
    """

    def __init__(
        self,
        config: ValueConfig,
        critic: ActionValueCritic,
        v_net: StateValue | None = None,
        seed: SeedLike = 0,
    ) -> None:
        if config.objective is ValueObjective.IQL and v_net is None:
            raise OrlabError("IQL needs a state-value network", ErrorCode.VALUE_UNSUPPORTED)
        rng = as_generator(seed)
        self.config = config
        self.critic = critic
        self.v_net = v_net if config.objective is ValueObjective.IQL else None
        self.params = critic.init(rng)
        self.target_params = self.params.copy()
        self.adam = AdamState.fresh(self.params, config.lr)
        self.v_params: ParamSet | None = None
        self.v_adam: AdamState | None = None
        if self.v_net is not None:
            self.v_params = self.v_net.init(rng)
            self.v_adam = AdamState.fresh(self.v_params, config.lr)
        self.step = 0
        self.history: list[dict[str, float]] = []

    def sampler(self, view: SubsetView, seed: int) -> BatchSampler:
        goal_reaching = view.meta.env.goal_conditioned
        if self.config.objective is ValueObjective.CRL:
            return BatchSampler(
                view, self.config.batch_size, seed, gamma=self.config.gamma,
                mix=GoalMix(current=0.0, future=1.0, random=0.0), negatives=True,
            )
        return BatchSampler(
            view, self.config.batch_size, seed,
            gamma=self.config.gamma if goal_reaching else None,
            mix=self.config.goal_mix,
        )

    def update(self, batch: Batch) -> dict[str, float]:
        """One gradient step on every network of the objective."""
        cfg = self.config
        metrics: dict[str, float] = {}
        if cfg.objective is ValueObjective.IQL:
            assert self.v_net is not None and self.v_params is not None and self.v_adam is not None
            v_loss = iql_value_loss(self.v_net, self.v_params, self.critic, self.target_params, batch, cfg.expectile)
            self.v_params, self.v_adam = adam_step(self.v_params, backward(v_loss, self.v_params), self.v_adam)
            q_loss = iql_q_loss(self.critic, self.params, self.v_net, self.v_params, batch, cfg.gamma)
            metrics["v_loss"] = v_loss.item()
        elif cfg.objective is ValueObjective.SARSA:
            q_loss = sarsa_loss(self.critic, self.params, self.target_params, batch, cfg.gamma)
        else:
            q_loss = crl_batch_loss(self.critic, self.params, batch)
        self.params, self.adam = adam_step(self.params, backward(q_loss, self.params), self.adam)
        if cfg.objective is not ValueObjective.CRL:
            self.target_params = polyak_update(self.target_params, self.params, cfg.polyak_tau)
        self.step += 1
        metrics["loss"] = q_loss.item()
        return metrics

    def train(self, view: SubsetView, seed: int, steps: int | None = None) -> "FrozenValue":
        budget = self.config.steps if steps is None else steps
        sampler = self.sampler(view, seed)
        for _ in range(budget):
            metrics = self.update(sampler.next())
            if self.step % self.config.log_every == 0 or self.step == budget:
                row = {"step": float(self.step), **metrics}
                self.history.append(row)
                logger.info(
                    "%s step %d loss %.5f%s",
                    self.config.objective.value, self.step, metrics["loss"],
                    f" v_loss {metrics['v_loss']:.5f}" if "v_loss" in metrics else "",
                )
        return self.freeze({"data_k": view.k, "data_transitions": view.n_transitions("train"), "seed": seed})

    def freeze(self, metadata: dict[str, Any] | None = None) -> FrozenValue:
        meta = {"steps": self.step, "history": list(self.history), **(metadata or {})}
        return FrozenValue(
            objective=self.config.objective,
            critic=self.critic,
            params=self.params.copy(),
            v_net=self.v_net,
            v_params=self.v_params.copy() if self.v_params is not None else None,
            config=self.config,
            metadata=meta,
        )


def train_value(view: SubsetView, config: ValueConfig, seed: int) -> FrozenValue:
    """
    Train the configured objective on `view` and freeze the result.

    Network initialization and batch streams come from independent seeds
    derived from `seed`.
    """
    critic, v_net = build_critic(config, view.meta.env)
    learner = ValueLearner(config, critic, v_net, seed=derive_seed(seed, "value-init"))
    logger.info(
        "training %s value on K=%d (%d train transitions) for %d steps",
        config.objective.value, view.k, view.n_transitions("train"), config.steps,
    )
    return learner.train(view, seed=derive_seed(seed, "value-batches"))
