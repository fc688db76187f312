"""
Policy extraction from a frozen value function.

extract() trains a Gaussian policy with one of three objectives against a
FrozenValue and returns a PolicyArtifact. Training and validation losses
are recorded on fixed held-out batches so the generalization gap can be
read back later.
"""

import json
import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from orlab.data.dataset import SubsetView
from orlab.data.sampling import Batch, BatchSampler, GoalMix, sample_batch
from orlab.diagnostics import ess
from orlab.featurize import TanhFeaturizer
from orlab.grad import Activation, AdamState, ParamSet, Tensor, adam_step, backward, load_params, save_params
from orlab.grad.optim import DEFAULT_LR
from orlab.policy.head import EVAL_STD, GaussianPolicy, StdMode
from orlab.policy.losses import awr_loss, bc_loss, ddpg_bc_loss, sfbc_select
from orlab.seeding import SeedLike, as_generator, derive_seed
from orlab.types import ErrorCode, OrlabError
from orlab.value.trainer import DEFAULT_GAMMA, FrozenValue, ValueObjective

logger = logging.getLogger(__name__)


class ExtractionMethod(str, Enum):
    AWR = "awr"
    DDPG_BC = "ddpg+bc"
    SFBC = "sfbc"


AWR_ALPHAS_IQL = (0.0, 1.0, 3.0, 10.0)
AWR_ALPHAS_BEHAVIORAL = (0.0, 10.0, 30.0, 100.0)
DDPG_BC_ALPHAS = (0.1, 0.3, 1.0, 3.0)
SFBC_SAMPLES = (1, 16, 64)


def default_grid(method: ExtractionMethod | str, objective: ValueObjective | str) -> tuple[float, ...]:
    """Hyperparameter list searched per cell for `method` on top of `objective`."""
    method = ExtractionMethod(method)
    if method is ExtractionMethod.AWR:
        return AWR_ALPHAS_IQL if ValueObjective(objective) is ValueObjective.IQL else AWR_ALPHAS_BEHAVIORAL
    if method is ExtractionMethod.DDPG_BC:
        return DDPG_BC_ALPHAS
    return tuple(float(n) for n in SFBC_SAMPLES)


@dataclass(frozen=True)
class ExtractionConfig:
    """
    Hyperparameters for one extraction run.

    Attributes:
        method: AWR, DDPG+BC or SfBC.
        alpha: AWR temperature or DDPG+BC behavioral-cloning weight
            (inf means pure BC).
        n_samples: SfBC candidate count N.
        steps: Gradient steps.
        batch_size: Minibatch size.
        lr: Adam learning rate.
        std_mode: Policy std; None picks fixed for AWR/DDPG+BC and learned
            for SfBC.
        gamma: Discount of the geometric goal sampler (goal-reaching data).
        goal_mix: Goal relabeling mixture for policy batches.
        eval_every: Steps between train/val loss measurements.
        eval_batch_size: Size of the fixed loss-measurement batches.
    """

    method: ExtractionMethod = ExtractionMethod.DDPG_BC
    alpha: float = 1.0
    n_samples: int = 16
    steps: int = 20_000
    batch_size: int = 256
    lr: float = DEFAULT_LR
    hidden_dims: tuple[int, ...] = (256, 256)
    activation: Activation = Activation.GELU
    layer_norm: bool = True
    std_mode: StdMode | None = None
    gamma: float = DEFAULT_GAMMA
    goal_mix: GoalMix = field(default_factory=lambda: GoalMix(current=0.0, future=1.0, random=0.0))
    eval_every: int = 1000
    eval_batch_size: int = 1024

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", ExtractionMethod(self.method))
        object.__setattr__(self, "activation", Activation(self.activation))
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.std_mode is not None:
            object.__setattr__(self, "std_mode", StdMode(self.std_mode))
        if not self.alpha >= 0:
            raise OrlabError(f"alpha must be >= 0, got {self.alpha}", ErrorCode.POLICY_INVALID_CONFIG)
        if self.n_samples < 1:
            raise OrlabError(f"N must be >= 1, got {self.n_samples}", ErrorCode.POLICY_INVALID_CONFIG)
        if self.steps < 0 or self.batch_size < 1 or self.eval_every < 1 or self.eval_batch_size < 1:
            raise OrlabError("steps, batch sizes and eval_every must be positive", ErrorCode.POLICY_INVALID_CONFIG)

    @property
    def resolved_std_mode(self) -> StdMode:
        if self.std_mode is not None:
            return self.std_mode
        return StdMode.LEARNED if self.method is ExtractionMethod.SFBC else StdMode.FIXED

    @property
    def hyperparameter(self) -> float:
        return float(self.n_samples) if self.method is ExtractionMethod.SFBC else self.alpha

    @property
    def is_behavior_cloning(self) -> bool:
        """True when the objective reduces exactly to plain BC and ignores the value function."""
        if self.method is ExtractionMethod.AWR:
            return self.alpha == 0.0
        return self.method is ExtractionMethod.DDPG_BC and np.isinf(self.alpha)

    def with_hyperparameter(self, value: float) -> "ExtractionConfig":
        if self.method is ExtractionMethod.SFBC:
            return replace(self, n_samples=int(value))
        return replace(self, alpha=float(value))

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method.value,
            "alpha": self.alpha,
            "n_samples": self.n_samples,
            "steps": self.steps,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "hidden_dims": list(self.hidden_dims),
            "activation": self.activation.value,
            "layer_norm": self.layer_norm,
            "std_mode": self.std_mode.value if self.std_mode else None,
            "gamma": self.gamma,
            "goal_mix": {"current": self.goal_mix.current, "future": self.goal_mix.future, "random": self.goal_mix.random},
            "eval_every": self.eval_every,
            "eval_batch_size": self.eval_batch_size,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExtractionConfig":
        data = dict(data)
        if isinstance(data.get("goal_mix"), dict):
            data["goal_mix"] = GoalMix.from_dict(data["goal_mix"])
        if "hidden_dims" in data:
            data["hidden_dims"] = tuple(data["hidden_dims"])
        return cls(**data)


# =============================================================================
# ARTIFACT
# =============================================================================


@dataclass(frozen=True, eq=False)
class PolicyArtifact:
    """
    A frozen extracted policy.

    For SfBC `params` are the behavior-cloning policy and acting selects
    among N samples with the value function, so `value` must be attached.
    """

    method: ExtractionMethod
    policy: GaussianPolicy
    params: ParamSet
    config: ExtractionConfig
    value_digest: str
    value: FrozenValue | None = None
    curves: tuple[dict[str, float], ...] = ()
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return self.params.digest()

    def with_value(self, value: FrozenValue) -> "PolicyArtifact":
        return replace(self, value=value)

    def with_params(self, params: ParamSet) -> "PolicyArtifact":
        return replace(self, params=params)

    def act(
        self,
        obs: np.ndarray,
        goal: np.ndarray | None,
        rng: np.random.Generator | None = None,
        stochastic: bool = False,
        eval_std: float = EVAL_STD,
    ) -> np.ndarray:
        """
        One action for one state, inside [-1, 1].

        Deterministic evaluation returns the mean; stochastic evaluation
        adds N(0, eval_std^2) noise. SfBC always samples its candidates and
        therefore needs `rng`.
        """
        if self.method is ExtractionMethod.SFBC:
            if self.value is None or rng is None:
                raise OrlabError("SfBC acting needs the value function and an rng", ErrorCode.POLICY_INVALID_CONFIG)
            return sfbc_select(self.policy, self.params, self.value, obs, goal, self.config.n_samples, rng).action
        noise_rng = rng if stochastic else None
        return self.policy.act(self.params, obs, goal, noise_rng, std=eval_std if stochastic else None)

    def mean_action(self, obs: np.ndarray, goals: np.ndarray | None = None) -> np.ndarray:
        """Clipped policy mean for a batch; the quantity compared with oracle actions."""
        return np.clip(self.policy.mean(self.params, obs, goals).data, -1.0, 1.0)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_params(path, self.params)
        sidecar = {
            "method": self.method.value,
            "policy": self.policy.to_dict(),
            "config": self.config.to_dict(),
            "value_digest": self.value_digest,
            "digest": self.digest,
            "curves": list(self.curves),
            "metadata": self.metadata,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path: str | Path, value: FrozenValue | None = None) -> "PolicyArtifact":
        path = Path(path)
        params = load_params(path)
        sidecar_path = path.with_suffix(".json")
        if not sidecar_path.exists():
            raise OrlabError(f"policy sidecar not found: {sidecar_path}", ErrorCode.PERSIST_FILE_NOT_FOUND)
        sidecar = json.loads(sidecar_path.read_text())
        return cls(
            method=ExtractionMethod(sidecar["method"]),
            policy=GaussianPolicy.from_dict(sidecar["policy"]),
            params=params,
            config=ExtractionConfig.from_dict(sidecar["config"]),
            value_digest=sidecar["value_digest"],
            value=value,
            curves=tuple(sidecar.get("curves", [])),
            metadata=dict(sidecar.get("metadata", {})),
        )


# =============================================================================
# LEARNER
# =============================================================================


def build_policy(
    config: ExtractionConfig,
    state_dim: int,
    action_dim: int,
    goal_dim: int,
    featurizer: TanhFeaturizer | None = None,
) -> GaussianPolicy:
    return GaussianPolicy(
        state_dim, action_dim, goal_dim, config.hidden_dims, config.activation,
        config.layer_norm, config.resolved_std_mode, featurizer=featurizer,
    )


class PolicyLearner:
    """
    Stepwise extraction.

    AWR on a value function without a state-value head trains a second,
    plain behavior-cloning policy on the same batches and uses
    Q(s, clip(mu_bc(s))) as its baseline.
    """

    def __init__(
        self,
        config: ExtractionConfig,
        policy: GaussianPolicy,
        seed: SeedLike,
        params: ParamSet | None = None,
    ) -> None:
        rng = as_generator(seed)
        self.config = config
        self.policy = policy
        self.params = params.copy() if params is not None else policy.init(rng)
        self.adam = AdamState.fresh(self.params, config.lr)
        self.baseline_policy = GaussianPolicy(
            policy.state_dim, policy.action_dim, policy.goal_dim, config.hidden_dims,
            config.activation, config.layer_norm, StdMode.FIXED, featurizer=policy.featurizer,
        )
        self.baseline_params = self.baseline_policy.init(rng)
        self.baseline_adam = AdamState.fresh(self.baseline_params, config.lr)
        self.step = 0

    def _needs_baseline(self, value: FrozenValue | None) -> bool:
        return value is not None and self.config.method is ExtractionMethod.AWR and self.config.alpha != 0.0 and not value.has_v

    def baseline(self, value: FrozenValue | None, batch: Batch) -> np.ndarray | None:
        if not self._needs_baseline(value):
            return None
        assert value is not None
        mu = np.clip(self.baseline_policy.mean(self.baseline_params, batch.obs, batch.goals).data, -1.0, 1.0)
        return value.q(batch.obs, mu, batch.goals)

    def loss(self, params: ParamSet, value: FrozenValue | None, batch: Batch) -> tuple[Tensor, dict[str, float]]:
        cfg = self.config
        if value is None:
            return bc_loss(self.policy, params, batch), {}
        if cfg.method is ExtractionMethod.AWR:
            loss, weights = awr_loss(self.policy, params, value, batch, cfg.alpha, self.baseline(value, batch))
            return loss, {"ess": ess(weights)}
        if cfg.method is ExtractionMethod.DDPG_BC:
            return ddpg_bc_loss(self.policy, params, value, batch, cfg.alpha), {}
        return bc_loss(self.policy, params, batch), {}

    def update(self, batch: Batch, value: FrozenValue | None) -> dict[str, float]:
        loss, metrics = self.loss(self.params, value, batch)
        self.params, self.adam = adam_step(self.params, backward(loss, self.params), self.adam)
        if self._needs_baseline(value):
            bl = bc_loss(self.baseline_policy, self.baseline_params, batch)
            self.baseline_params, self.baseline_adam = adam_step(
                self.baseline_params, backward(bl, self.baseline_params), self.baseline_adam
            )
        self.step += 1
        return {"loss": loss.item(), **metrics}

    def measure(self, batch: Batch, value: FrozenValue | None) -> tuple[float, dict[str, float]]:
        """Loss on a fixed batch plus objective metrics (AWR: ess of its weights)."""
        loss, metrics = self.loss(self.params, value, batch)
        return loss.item(), metrics

    def artifact(self, value: FrozenValue | None, curves: list[dict[str, float]], metadata: dict[str, Any]) -> PolicyArtifact:
        return PolicyArtifact(
            method=self.config.method,
            policy=self.policy,
            params=self.params.copy(),
            config=self.config,
            value_digest=value.digest if value is not None else "",
            value=value,
            curves=tuple(curves),
            metadata={"steps": self.step, **metadata},
        )


def _fixed_batch(view: SubsetView, config: ExtractionConfig, seed: int, split: str) -> Batch | None:
    if view.n_transitions(split) == 0:
        return None
    gamma = config.gamma if view.meta.env.goal_conditioned else None
    return sample_batch(view, config.eval_batch_size, seed, split=split, gamma=gamma, mix=config.goal_mix)


def extract(
    config: ExtractionConfig,
    value: FrozenValue | None,
    view: SubsetView,
    seed: int,
    featurizer: TanhFeaturizer | None = None,
    monitor: Callable[[int, PolicyArtifact], None] | None = None,
    monitor_every: int | None = None,
) -> PolicyArtifact:
    """
    Run the configured extraction objective and freeze the policy.

    Args:
        config: Objective and budget.
        value: Frozen value function; never modified. May be None only
            for objectives that reduce to plain BC.
        view: Dataset view; train rows are used for updates, val rows only
            for the validation curve.
        seed: Seeds initialization, batches and loss-measurement batches.
        featurizer: Optional state representation for the policy input.
        monitor: Called with (step, snapshot artifact) every
            `monitor_every` steps and after the final step (once at step 0
            for a zero-step budget).

    Returns:
        The artifact, with curves holding one row per measurement:
        step, train_loss, val_loss (when the view has validation data) and,
        for AWR, the effective sample size `ess` of the train-batch weights.
    """
    if value is None and not config.is_behavior_cloning:
        raise OrlabError(f"{config.method.value} extraction needs a value function", ErrorCode.POLICY_INVALID_CONFIG)
    env = view.meta.env
    policy = build_policy(config, env.state_dim, env.action_dim, env.goal_dim, featurizer)
    learner = PolicyLearner(config, policy, seed=derive_seed(seed, "policy-init"))
    sampler = BatchSampler(
        view, config.batch_size, derive_seed(seed, "policy-batches"),
        gamma=config.gamma if env.goal_conditioned else None, mix=config.goal_mix,
    )
    train_batch = _fixed_batch(view, config, derive_seed(seed, "curve-train"), "train")
    val_batch = _fixed_batch(view, config, derive_seed(seed, "curve-val"), "val")
    if train_batch is None:
        raise OrlabError("view has no train transitions", ErrorCode.DATA_EMPTY_VIEW)

    curves: list[dict[str, float]] = []

    def record() -> None:
        train_loss, metrics = learner.measure(train_batch, value)
        row = {"step": float(learner.step), "train_loss": train_loss, **metrics}
        if val_batch is not None:
            row["val_loss"] = learner.measure(val_batch, value)[0]
        curves.append(row)

    record()
    for _ in range(config.steps):
        update_metrics = learner.update(sampler.next(), value)
        if learner.step % config.eval_every == 0 or learner.step == config.steps:
            record()
            logger.debug("%s step %d %s (last batch %s)", config.method.value, learner.step, curves[-1], update_metrics)
        if monitor is not None and monitor_every and learner.step % monitor_every == 0:
            monitor(learner.step, learner.artifact(value, curves, {}))
    if monitor is not None and not (monitor_every and config.steps and config.steps % monitor_every == 0):
        monitor(learner.step, learner.artifact(value, curves, {}))
    logger.info(
        "extracted %s (h=%s) on K=%d: final train loss %.4f",
        config.method.value, config.hyperparameter, view.k, curves[-1]["train_loss"],
    )
    return learner.artifact(value, curves, {"data_k": view.k, "seed": seed})
