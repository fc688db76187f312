"""
Trajectory datasets with a deterministic split and nested views.

A Dataset stores whole trajectories in a fixed shuffled order. One
trajectory in every 20 (positions 1, 21, 41, ...) is validation, the rest
train, so the split never cuts a trajectory, every leading prefix of two or
more trajectories holds validation data, and larger prefixes keep roughly
the same 5% share. A SubsetView is the first K
trajectories; views of increasing K are nested by construction.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from orlab.envs.dynamics import reset, step
from orlab.envs.expert import expert_action
from orlab.envs.spec import EnvSpec, EnvState
from orlab.seeding import as_generator
from orlab.types import ErrorCode, OrlabError

logger = logging.getLogger(__name__)

VAL_EVERY = 20
VAL_OFFSET = 1

Split = str  # "train" | "val" | "all"
PolicyFn = Callable[[EnvSpec, EnvState, np.random.Generator], np.ndarray]


# =============================================================================
# TRANSITIONS AND TRAJECTORIES
# =============================================================================


@dataclass(frozen=True, eq=False)
class Transition:
    """One environment step; the atom every loss consumes."""

    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    a_next: np.ndarray
    terminal: bool
    traj_id: int
    t: int
    goal: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Columnar storage of one episode.

    Attributes:
        obs, actions, rewards, next_obs, next_actions, terminals: Per-step
            columns of equal length T.
        traj_id: Generation index, unique within a dataset.
        goal: Commanded goal (goal-reaching datasets), else None.
    """

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    next_actions: np.ndarray
    terminals: np.ndarray
    traj_id: int
    goal: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = len(self.obs)
        if n < 1:
            raise ValueError("trajectory must have at least one transition")
        for name in ("actions", "rewards", "next_obs", "next_actions", "terminals"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        if np.any(self.terminals[:-1]):
            raise ValueError("only the final transition of a trajectory may be terminal")

    def __len__(self) -> int:
        return len(self.obs)

    def transition(self, t: int) -> Transition:
        return Transition(
            s=self.obs[t],
            a=self.actions[t],
            r=float(self.rewards[t]),
            s_next=self.next_obs[t],
            a_next=self.next_actions[t],
            terminal=bool(self.terminals[t]),
            traj_id=self.traj_id,
            t=t,
            goal=self.goal,
        )

    def transitions(self) -> list[Transition]:
        return [self.transition(t) for t in range(len(self))]


@dataclass(frozen=True)
class DatasetMeta:
    """Provenance recorded with every dataset."""

    env: EnvSpec
    sigma_data: float
    shuffle_seed: int
    generator_seed: int

    @property
    def state_dim(self) -> int:
        return self.env.state_dim

    @property
    def action_dim(self) -> int:
        return self.env.action_dim

    @property
    def goal_dim(self) -> int:
        return self.env.goal_dim

    def to_dict(self) -> dict[str, Any]:
        return {
            "env": self.env.to_dict(),
            "sigma_data": self.sigma_data,
            "shuffle_seed": self.shuffle_seed,
            "generator_seed": self.generator_seed,
        }


# =============================================================================
# FLAT VIEWS
# =============================================================================


@dataclass(frozen=True, eq=False)
class FlatData:
    """
    Concatenated columns of a set of trajectories.

    traj_start / traj_end hold, per row, the flat index of the first / last
    row of that row's trajectory, so future offsets never cross a boundary.
    """

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    next_actions: np.ndarray
    terminals: np.ndarray
    traj_ids: np.ndarray
    timesteps: np.ndarray
    goals: np.ndarray | None
    traj_start: np.ndarray
    traj_end: np.ndarray

    def __len__(self) -> int:
        return len(self.obs)

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], state_dim: int, action_dim: int) -> "FlatData":
        if not trajectories:
            empty2 = np.zeros((0, state_dim))
            return cls(
                obs=empty2, actions=np.zeros((0, action_dim)), rewards=np.zeros(0),
                next_obs=empty2.copy(), next_actions=np.zeros((0, action_dim)),
                terminals=np.zeros(0, dtype=bool), traj_ids=np.zeros(0, dtype=np.int64),
                timesteps=np.zeros(0, dtype=np.int64), goals=None,
                traj_start=np.zeros(0, dtype=np.int64), traj_end=np.zeros(0, dtype=np.int64),
            )
        lengths = np.array([len(t) for t in trajectories])
        ends = np.cumsum(lengths) - 1
        starts = ends - lengths + 1
        has_goal = trajectories[0].goal is not None
        return cls(
            obs=np.concatenate([t.obs for t in trajectories]),
            actions=np.concatenate([t.actions for t in trajectories]),
            rewards=np.concatenate([t.rewards for t in trajectories]),
            next_obs=np.concatenate([t.next_obs for t in trajectories]),
            next_actions=np.concatenate([t.next_actions for t in trajectories]),
            terminals=np.concatenate([t.terminals for t in trajectories]).astype(bool),
            traj_ids=np.repeat([t.traj_id for t in trajectories], lengths),
            timesteps=np.concatenate([np.arange(n) for n in lengths]),
            goals=np.repeat(np.stack([t.goal for t in trajectories]), lengths, axis=0) if has_goal else None,
            traj_start=np.repeat(starts, lengths),
            traj_end=np.repeat(ends, lengths),
        )


# =============================================================================
# DATASET AND VIEWS
# =============================================================================


class Dataset:
    """
    Immutable ordered trajectories plus split assignment.

    Use Dataset.build() to shuffle freshly generated trajectories with a
    recorded seed; the constructor takes an already ordered list (as read
    back from disk).
    """

    def __init__(
        self,
        trajectories: Sequence[Trajectory],
        meta: DatasetMeta,
        is_val: Sequence[bool] | None = None,
    ) -> None:
        self._trajectories = tuple(trajectories)
        self._meta = meta
        if is_val is None:
            is_val = [i % VAL_EVERY == VAL_OFFSET for i in range(len(self._trajectories))]
        if len(is_val) != len(self._trajectories):
            raise ValueError("split assignment must cover every trajectory")
        self._is_val = np.asarray(is_val, dtype=bool)

    @classmethod
    def build(cls, trajectories: Sequence[Trajectory], meta: DatasetMeta) -> "Dataset":
        order = np.random.default_rng(meta.shuffle_seed).permutation(len(trajectories))
        return cls([trajectories[i] for i in order], meta)

    @property
    def meta(self) -> DatasetMeta:
        return self._meta

    @property
    def trajectories(self) -> tuple[Trajectory, ...]:
        return self._trajectories

    @property
    def is_val(self) -> np.ndarray:
        return self._is_val.copy()

    @property
    def n_trajectories(self) -> int:
        return len(self._trajectories)

    @property
    def n_transitions(self) -> int:
        return sum(len(t) for t in self._trajectories)

    def extended(self, trajectories: Sequence[Trajectory]) -> "Dataset":
        """A new dataset with extra train trajectories appended (online collection)."""
        return Dataset(
            list(self._trajectories) + list(trajectories),
            self._meta,
            list(self._is_val) + [False] * len(trajectories),
        )

    def view(self) -> "SubsetView":
        return SubsetView(self, self.n_trajectories)

    def __repr__(self) -> str:
        return (
            f"Dataset(env={self._meta.env.env_id.value}, trajectories={self.n_trajectories}, "
            f"transitions={self.n_transitions}, val={int(self._is_val.sum())})"
        )


@dataclass(frozen=True, eq=False)
class SubsetView:
    """The first k trajectories of a dataset."""

    dataset: Dataset
    k: int
    _cache: dict[str, FlatData] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not 1 <= self.k <= self.dataset.n_trajectories:
            raise OrlabError(
                f"K={self.k} out of range [1, {self.dataset.n_trajectories}]",
                ErrorCode.DATA_K_OUT_OF_RANGE,
            )

    @property
    def meta(self) -> DatasetMeta:
        return self.dataset.meta

    @cached_property
    def trajectories(self) -> tuple[Trajectory, ...]:
        return self.dataset.trajectories[: self.k]

    def split_trajectories(self, split: Split) -> list[Trajectory]:
        flags = self.dataset.is_val[: self.k]
        if split == "all":
            return list(self.trajectories)
        want_val = split == "val"
        if split not in ("train", "val"):
            raise ValueError(f"unknown split: {split}")
        return [t for t, v in zip(self.trajectories, flags, strict=True) if bool(v) == want_val]

    def flat(self, split: Split = "train") -> FlatData:
        if split not in self._cache:
            self._cache[split] = FlatData.from_trajectories(
                self.split_trajectories(split), self.meta.state_dim, self.meta.action_dim
            )
        return self._cache[split]

    def n_transitions(self, split: Split = "all") -> int:
        return sum(len(t) for t in self.split_trajectories(split))

    def transitions(self, split: Split = "all") -> list[Transition]:
        return [tr for traj in self.split_trajectories(split) for tr in traj.transitions()]


def subset(dataset: Dataset, k: int) -> SubsetView:
    """
    View over the first k trajectories in shuffled order.

    Raises:
        OrlabError: DATA_K_OUT_OF_RANGE unless 1 <= k <= trajectory count.
    """
    return SubsetView(dataset, int(k))


def subset_by_transitions(dataset: Dataset, n_transitions: int) -> SubsetView:
    """Smallest leading prefix holding at least n_transitions (the whole dataset if fewer)."""
    if n_transitions < 1:
        raise OrlabError("n_transitions must be >= 1", ErrorCode.DATA_K_OUT_OF_RANGE)
    lengths = np.cumsum([len(t) for t in dataset.trajectories])
    k = int(np.searchsorted(lengths, n_transitions) + 1)
    return SubsetView(dataset, min(k, dataset.n_trajectories))


# =============================================================================
# GENERATION
# =============================================================================


def noisy_expert(sigma_data: float) -> PolicyFn:
    """Policy callable wrapping expert_action with a fixed noise level."""

    def policy(spec: EnvSpec, state: EnvState, rng: np.random.Generator) -> np.ndarray:
        return expert_action(spec, state, state.goal, sigma_data, rng)

    return policy


def rollout(
    spec: EnvSpec,
    policy: PolicyFn,
    rng: np.random.Generator,
    traj_id: int,
    initial: EnvState | None = None,
) -> Trajectory:
    """
    One complete episode as a Trajectory.

    a_next is the action actually taken at the next step; the final
    transition repeats its own action. terminal is set only when the goal
    was reached, never on timeout.
    """
    state = initial if initial is not None else reset(spec, rng)
    goal = state.goal.copy() if (spec.goal_conditioned and state.goal is not None) else None
    obs, actions, rewards, next_obs, terminals = [], [], [], [], []
    action = np.asarray(policy(spec, state, rng), dtype=np.float64)
    while True:
        if not np.all(np.isfinite(action)):
            raise OrlabError(
                "policy produced a non-finite action",
                ErrorCode.DATA_NON_FINITE_ACTION,
                details={"traj_id": traj_id, "t": state.t},
            )
        action = np.clip(action, -1.0, 1.0)
        nxt, reward, done = step(spec, state, action)
        obs.append(state.obs)
        actions.append(action)
        rewards.append(reward)
        next_obs.append(nxt.obs)
        terminals.append(nxt.reached)
        state = nxt
        if done:
            break
        action = np.asarray(policy(spec, state, rng), dtype=np.float64)
    acts = np.array(actions)
    next_acts = np.vstack([acts[1:], acts[-1:]])
    return Trajectory(
        obs=np.array(obs),
        actions=acts,
        rewards=np.array(rewards, dtype=np.float64),
        next_obs=np.array(next_obs),
        next_actions=next_acts,
        terminals=np.array(terminals, dtype=bool),
        traj_id=traj_id,
        goal=goal,
    )


def generate_dataset(
    spec: EnvSpec,
    policy: PolicyFn | None,
    n_transitions: int,
    sigma_data: float,
    seed: int,
    shuffle_seed: int | None = None,
) -> Dataset:
    """
    Collect complete episodes until at least n_transitions are stored.

    Args:
        spec: Environment to roll out.
        policy: Behavior policy; None uses the noisy scripted expert.
        n_transitions: Minimum number of transitions.
        sigma_data: Noise level (recorded in metadata; also used by the
            default expert).
        seed: Generator seed for resets and action noise.
        shuffle_seed: Seed for trajectory order; defaults to `seed`.

    Raises:
        OrlabError: DATA_NON_FINITE_ACTION if the policy emits NaN/Inf.
    """
    if n_transitions < 1:
        raise ValueError(f"n_transitions must be >= 1, got {n_transitions}")
    behavior = policy or noisy_expert(sigma_data)
    rng = as_generator(seed)
    trajectories: list[Trajectory] = []
    collected = 0
    while collected < n_transitions:
        traj = rollout(spec, behavior, rng, traj_id=len(trajectories))
        trajectories.append(traj)
        collected += len(traj)
    meta = DatasetMeta(
        env=spec,
        sigma_data=float(sigma_data),
        shuffle_seed=int(seed if shuffle_seed is None else shuffle_seed),
        generator_seed=int(seed),
    )
    logger.info(
        "generated %d trajectories (%d transitions) on %s, sigma=%.3f",
        len(trajectories), collected, spec.env_id.value, sigma_data,
    )
    return Dataset.build(trajectories, meta)


def visitation_entropy(view: SubsetView, bins: int = 20) -> float:
    """Shannon entropy (nats) of the 2-D histogram of visited positions."""
    flat = view.flat("all")
    low = flat.obs[:, :2].min(axis=0)
    high = flat.obs[:, :2].max(axis=0)
    if view.meta.env.layout is not None:
        low, high = view.meta.env.layout.bounds
    hist, _, _ = np.histogram2d(flat.obs[:, 0], flat.obs[:, 1], bins=bins, range=[[low[0], high[0]], [low[1], high[1]]])
    p = hist.ravel() / hist.sum()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))
