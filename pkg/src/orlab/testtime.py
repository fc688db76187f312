"""
Test-time policy improvement and evaluation.

OPEX nudges every emitted action along the gradient of the frozen Q:

    a' = clip(a + beta * grad_a Q(s, a))

TTT keeps training a copy of the offline policy while the agent acts,
maximizing Q(s, clip(mu(s))) - beta * KL(pi_off || pi) on states drawn half
from the dataset and half from a ring buffer of recently visited states.
Neither method touches the value function or the offline policy.

evaluate_with_method() runs a batch of episodes for one method and reports
both deterministic and stochastic evaluation, keeping the better score.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from orlab.data.dataset import SubsetView, rollout
from orlab.data.sampling import GoalMix, relabel_goals
from orlab.envs.dynamics import reset
from orlab.envs.spec import EnvId, EnvSpec, EnvState
from orlab.grad import AdamState, ParamSet, Tensor, adam_step, backward, gradients
from orlab.policy.extract import PolicyArtifact
from orlab.policy.head import EVAL_STD, GaussianPolicy, gaussian_kl
from orlab.policy.losses import sfbc_select
from orlab.seeding import derive_seed
from orlab.types import ErrorCode, OrlabError
from orlab.value.trainer import FrozenValue

logger = logging.getLogger(__name__)

OPEX_BETA = 0.3
TTT_BETA = 0.3
TTT_LR = 3e-5
TTT_BUFFER_SIZE = 10_000
TTT_DATA_FRACTION = 0.5


class EvalMethod(str, Enum):
    VANILLA = "vanilla"
    SFBC = "sfbc"
    OPEX = "opex"
    TTT = "ttt"


# =============================================================================
# OPEX
# =============================================================================


@dataclass(frozen=True)
class OpexConfig:
    """beta is the test-time step size; steps > 1 repeats the ascent."""

    beta: float = OPEX_BETA
    steps: int = 1

    def __post_init__(self) -> None:
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    def to_dict(self) -> dict[str, Any]:
        return {"beta": self.beta, "steps": self.steps}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "OpexConfig":
        return cls(**data)


def action_gradient(value: FrozenValue, s: np.ndarray, a: np.ndarray, g: np.ndarray | None = None) -> np.ndarray:
    """grad_a Q(s, a) row by row; raises EVAL_NON_FINITE_GRADIENT on NaN/Inf."""
    obs = np.atleast_2d(np.asarray(s, dtype=np.float64))
    act = Tensor(np.atleast_2d(np.asarray(a, dtype=np.float64)))
    goals = None if g is None else np.atleast_2d(np.asarray(g, dtype=np.float64))
    total = value.q_tensor(obs, act, goals).sum()
    grad = gradients(total, [act])[0]
    if not np.all(np.isfinite(grad)):
        raise OrlabError("Q gradient w.r.t. the action is not finite", ErrorCode.EVAL_NON_FINITE_GRADIENT)
    return grad


def opex_adjust(
    value: FrozenValue,
    s: np.ndarray,
    a: np.ndarray,
    beta: float,
    g: np.ndarray | None = None,
    steps: int = 1,
) -> np.ndarray:
    """
    Gradient-ascent adjustment of an action; parameters are not changed.

    Accepts one state/action or a batch; the output has the shape of `a`.

    Example:
        Q(s, a) = -|a|^2, a = (0.4, 0), beta = 0.1 gives (0.32, 0).
    """
    a = np.asarray(a, dtype=np.float64)
    if beta == 0.0:
        return a.copy()
    out = np.atleast_2d(a)
    for _ in range(steps):
        out = np.clip(out + beta * action_gradient(value, s, out, g), -1.0, 1.0)
    return out.reshape(a.shape)


# =============================================================================
# TTT
# =============================================================================


@dataclass(frozen=True)
class TttConfig:
    """
    Attributes:
        beta: KL weight toward the offline policy.
        lr: Adam learning rate for the adapted policy.
        max_steps: Total gradient steps allowed (None: one per env step
            without limit).
        batch_size: States per gradient step.
        buffer_size: Capacity of the visited-state ring buffer.
        data_fraction: Share of each batch drawn from the dataset.
        q_weight: Weight of the Q term (0 leaves only the KL anchor).
    """

    beta: float = TTT_BETA
    lr: float = TTT_LR
    max_steps: int | None = None
    batch_size: int = 256
    buffer_size: int = TTT_BUFFER_SIZE
    data_fraction: float = TTT_DATA_FRACTION
    q_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if not 0.0 <= self.data_fraction <= 1.0:
            raise ValueError("data_fraction must be in [0, 1]")
        if self.batch_size < 1 or self.buffer_size < 1:
            raise ValueError("batch_size and buffer_size must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TttConfig":
        return cls(**data)


class StateBuffer:
    """Ring buffer of visited (state, goal) pairs."""

    def __init__(self, capacity: int, state_dim: int, goal_dim: int) -> None:
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.goals = np.zeros((capacity, goal_dim))
        self.size = 0
        self._pos = 0

    def add(self, state: np.ndarray, goal: np.ndarray | None = None) -> None:
        self.states[self._pos] = state
        if goal is not None and self.goals.shape[1]:
            self.goals[self._pos] = goal
        self._pos = (self._pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        idx = rng.integers(self.size, size=n)
        return self.states[idx], self.goals[idx]


def ttt_loss(
    policy: GaussianPolicy,
    params: ParamSet,
    off_params: ParamSet,
    value: FrozenValue,
    obs: np.ndarray,
    goals: np.ndarray | None,
    beta: float,
    q_weight: float = 1.0,
) -> Tensor:
    """-mean[q_weight * Q(s, clip(mu(s)))] + beta * mean KL(pi_off || pi)."""
    mu = policy.mean(params, obs, goals)
    off_mu = policy.mean(off_params, obs, goals).data
    off_log_std = policy.log_std(off_params).data
    kl = gaussian_kl(off_mu, off_log_std, mu, policy.log_std(params)).mean()
    loss = kl * beta
    if q_weight != 0.0:
        loss = loss - value.q_tensor(obs, mu.clip(-1.0, 1.0), goals).mean() * q_weight
    return loss


class TttAdapter:
    """
    Policy adapted online from a frozen offline artifact.

    The offline artifact's parameters are copied on construction and never
    written; `params` holds the adapted copy.
    """

    def __init__(
        self,
        artifact: PolicyArtifact,
        value: FrozenValue,
        config: TttConfig,
        view: SubsetView | None,
        seed: int,
    ) -> None:
        self.artifact = artifact
        self.policy = artifact.policy
        self.off_params = artifact.params.copy()
        self.params = artifact.params.copy()
        self.adam = AdamState.fresh(self.params, config.lr)
        self.value = value
        self.config = config
        self.rng = np.random.default_rng(derive_seed(seed, "ttt-batches"))
        self.buffer = StateBuffer(config.buffer_size, self.policy.state_dim, self.policy.goal_dim)
        self.flat = view.flat("train") if view is not None else None
        self.gamma = artifact.config.gamma
        self.mix: GoalMix = artifact.config.goal_mix
        self.steps = 0

    @property
    def exhausted(self) -> bool:
        return self.config.max_steps is not None and self.steps >= self.config.max_steps

    def observe(self, state: EnvState) -> None:
        self.buffer.add(state.obs, state.goal)

    def _batch(self) -> tuple[np.ndarray, np.ndarray | None]:
        n = self.config.batch_size
        use_data = self.flat is not None and len(self.flat) > 0
        n_data = int(round(n * self.config.data_fraction)) if (use_data and self.buffer.size) else (n if use_data else 0)
        obs_parts, goal_parts = [], []
        if n_data:
            assert self.flat is not None
            rows = self.rng.integers(len(self.flat), size=n_data)
            obs_parts.append(self.flat.obs[rows])
            if self.policy.goal_dim:
                goal_parts.append(relabel_goals(self.flat, rows, self.gamma, self.mix, self.rng).goals)
        if n - n_data and self.buffer.size:
            s, g = self.buffer.sample(n - n_data, self.rng)
            obs_parts.append(s)
            goal_parts.append(g)
        obs = np.concatenate(obs_parts)
        goals = np.concatenate(goal_parts) if self.policy.goal_dim else None
        return obs, goals

    def update(self) -> dict[str, float] | None:
        """One TTT gradient step; None once the step budget is used up."""
        if self.exhausted or (self.buffer.size == 0 and self.flat is None):
            return None
        obs, goals = self._batch()
        metrics = ttt_update(self, obs, goals)
        return metrics

    def act(self, obs: np.ndarray, goal: np.ndarray | None, rng: np.random.Generator | None, stochastic: bool) -> np.ndarray:
        return self.policy.act(self.params, obs, goal, rng if stochastic else None, std=EVAL_STD if stochastic else None)


def ttt_update(adapter: TttAdapter, obs: np.ndarray, goals: np.ndarray | None) -> dict[str, float]:
    """One Adam step on the adapted policy only."""
    cfg = adapter.config
    loss = ttt_loss(adapter.policy, adapter.params, adapter.off_params, adapter.value, obs, goals, cfg.beta, cfg.q_weight)
    adapter.params, adapter.adam = adam_step(adapter.params, backward(loss, adapter.params), adapter.adam)
    adapter.steps += 1
    return {"loss": loss.item(), "step": float(adapter.steps)}


# =============================================================================
# EVALUATION
# =============================================================================


@dataclass(frozen=True)
class EpisodeLog:
    seed: int
    episode: int
    method: str
    mode: str
    beta: float
    ret: float
    success: bool
    length: int
    mean_q_gain: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ModeScore:
    mode: str
    score: float
    mean_return: float
    success_rate: float
    episodes: int


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Scores for one method; `score` is the better of the evaluated modes."""

    method: EvalMethod
    score: float
    best_mode: str
    modes: dict[str, ModeScore]
    episodes: list[EpisodeLog] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method.value,
            "score": self.score,
            "best_mode": self.best_mode,
            "modes": {k: asdict(v) for k, v in self.modes.items()},
        }


def score_of(env: EnvSpec, returns: list[float], successes: list[bool]) -> float:
    """Success rate on goal-reaching tasks, mean return on locomotion."""
    if env.env_id is EnvId.CHAINRUN:
        return float(np.mean(returns))
    return float(np.mean(successes))


def _check_dims(env: EnvSpec, artifact: PolicyArtifact) -> None:
    policy = artifact.policy
    if (policy.state_dim, policy.action_dim, policy.goal_dim) != (env.state_dim, env.action_dim, env.goal_dim):
        raise OrlabError(
            "policy dimensions do not match the environment",
            ErrorCode.EVAL_DIMENSION_MISMATCH,
            details={
                "policy": [policy.state_dim, policy.action_dim, policy.goal_dim],
                "env": [env.state_dim, env.action_dim, env.goal_dim],
            },
        )


def _run_mode(
    env: EnvSpec,
    artifact: PolicyArtifact,
    method: EvalMethod,
    episodes: int,
    seed: int,
    stochastic: bool,
    value: FrozenValue | None,
    opex: OpexConfig,
    ttt: TttConfig,
    view: SubsetView | None,
    sfbc_n: int,
) -> list[EpisodeLog]:
    mode = "stochastic" if stochastic else "deterministic"
    adapter = TttAdapter(artifact, value, ttt, view, seed) if method is EvalMethod.TTT and value else None
    beta = opex.beta if method is EvalMethod.OPEX else (ttt.beta if method is EvalMethod.TTT else 0.0)
    logs = []
    for i in range(episodes):
        gains: list[float] = []

        def act(spec: EnvSpec, state: EnvState, rng: np.random.Generator) -> np.ndarray:
            goal = state.goal if spec.goal_conditioned else None
            if adapter is not None:
                adapter.observe(state)
                action = adapter.act(state.obs, goal, rng, stochastic)
                adapter.update()
                return action
            if method is EvalMethod.SFBC:
                assert value is not None
                return sfbc_select(artifact.policy, artifact.params, value, state.obs, goal, sfbc_n, rng).action
            action = artifact.act(state.obs, goal, rng, stochastic)
            if method is EvalMethod.OPEX and opex.beta > 0:
                assert value is not None
                adjusted = opex_adjust(value, state.obs, action, opex.beta, goal, opex.steps)
                g2 = None if goal is None else goal[None]
                gains.append(float(value.q(state.obs[None], adjusted[None], g2)[0] - value.q(state.obs[None], action[None], g2)[0]))
                return adjusted
            return action

        initial = reset(env, derive_seed(seed, "episode", i))
        rng = np.random.default_rng(derive_seed(seed, "actions", i))
        traj = rollout(env, act, rng, traj_id=i, initial=initial)
        logs.append(
            EpisodeLog(
                seed=seed,
                episode=i,
                method=method.value,
                mode=mode,
                beta=beta,
                ret=float(traj.rewards.sum()),
                success=bool(traj.terminals[-1]),
                length=len(traj),
                mean_q_gain=float(np.mean(gains)) if gains else None,
            )
        )
    return logs


def evaluate_with_method(
    env: EnvSpec,
    artifact: PolicyArtifact,
    method: EvalMethod | str,
    episodes: int,
    seed: int,
    value: FrozenValue | None = None,
    opex: OpexConfig | None = None,
    ttt: TttConfig | None = None,
    view: SubsetView | None = None,
    modes: tuple[str, ...] = ("deterministic", "stochastic"),
    sfbc_n: int | None = None,
    episode_log: str | Path | None = None,
) -> EvalReport:
    """
    Evaluate an extracted policy with a test-time method.

    Episode i of every method and mode starts from the same reset seed, so
    methods are compared on identical start states and goals.

    Args:
        env: Environment to evaluate in.
        artifact: Extracted policy (never modified).
        method: vanilla, sfbc, opex or ttt.
        episodes: Episodes per mode.
        seed: Evaluation seed.
        value: Frozen value function (required by sfbc, opex and ttt).
        opex: OPEX settings.
        ttt: TTT settings.
        view: Dataset whose train states feed TTT batches.
        modes: Which of deterministic / stochastic to run.
        sfbc_n: Candidate count for sfbc (defaults to the artifact's N).
        episode_log: Append one JSON line per episode to this file.

    Raises:
        OrlabError: EVAL_DIMENSION_MISMATCH if the artifact does not fit env.
    """
    method = EvalMethod(method)
    _check_dims(env, artifact)
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    if method is not EvalMethod.VANILLA and value is None:
        value = artifact.value
    if method is not EvalMethod.VANILLA and value is None:
        raise OrlabError(f"{method.value} evaluation needs a value function", ErrorCode.POLICY_INVALID_CONFIG)
    opex = opex or OpexConfig()
    ttt = ttt or TttConfig()
    n = sfbc_n or artifact.config.n_samples

    scores: dict[str, ModeScore] = {}
    all_logs: list[EpisodeLog] = []
    for mode in modes:
        if mode not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown evaluation mode: {mode}")
        logs = _run_mode(env, artifact, method, episodes, seed, mode == "stochastic", value, opex, ttt, view, n)
        returns = [e.ret for e in logs]
        successes = [e.success for e in logs]
        scores[mode] = ModeScore(
            mode=mode,
            score=score_of(env, returns, successes),
            mean_return=float(np.mean(returns)),
            success_rate=float(np.mean(successes)),
            episodes=len(logs),
        )
        all_logs.extend(logs)

    best_mode = max(scores, key=lambda m: (scores[m].score, m == "deterministic"))
    report = EvalReport(method=method, score=scores[best_mode].score, best_mode=best_mode, modes=scores, episodes=all_logs)
    if episode_log is not None:
        write_episode_log(episode_log, all_logs)
    logger.info("%s evaluation: score %.4f (%s)", method.value, report.score, best_mode)
    return report


def write_episode_log(path: str | Path, logs: list[EpisodeLog]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        for entry in logs:
            fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
