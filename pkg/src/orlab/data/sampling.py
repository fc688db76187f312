"""
Minibatch sampling and hindsight goal relabeling.

Batches are drawn uniformly with replacement from the train (or val) rows
of a view. The stream is a pure function of (seed, call index), so two
learners built from the same configuration see identical batches.

Goal-reaching batches relabel every row with a goal drawn from a
three-way mixture:

    current  the row's own state
    future   next_obs of the row Delta - 1 steps later in the same
             trajectory, Delta ~ Geometric(1 - gamma), truncated at the
             trajectory end
    random   the state of a uniformly chosen row of the view

A relabeled row succeeds (reward 0, terminal) when either s or s_next lies
within GOAL_RADIUS of the goal, and otherwise gets reward -1.
"""

from dataclasses import dataclass

import numpy as np

from orlab.data.dataset import FlatData, Split, SubsetView
from orlab.envs.spec import GOAL_RADIUS
from orlab.seeding import SeedLike, as_generator
from orlab.types import ErrorCode, OrlabError

MODE_CURRENT = 0
MODE_FUTURE = 1
MODE_RANDOM = 2


@dataclass(frozen=True)
class GoalMix:
    """Mixture weights over current / future / random goals."""

    current: float = 0.2
    future: float = 0.5
    random: float = 0.3

    def __post_init__(self) -> None:
        weights = (self.current, self.future, self.random)
        if any(w < 0 or not np.isfinite(w) for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise OrlabError(
                f"goal mix {weights} must be non-negative and sum to 1",
                ErrorCode.DATA_INVALID_MIX,
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.current, self.future, self.random])

    @classmethod
    def from_dict(cls, data: dict[str, float]) -> "GoalMix":
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True, eq=False)
class Batch:
    """
    A minibatch of transitions.

    goals is None for single-task environments. neg_goals is filled only
    when the sampler was asked for contrastive negatives.
    """

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    next_actions: np.ndarray
    terminals: np.ndarray
    rows: np.ndarray
    goals: np.ndarray | None = None
    neg_goals: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.obs)

    @property
    def not_done(self) -> np.ndarray:
        return 1.0 - self.terminals.astype(np.float64)


@dataclass(frozen=True, eq=False)
class GoalSample:
    goals: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    modes: np.ndarray
    offsets: np.ndarray


def _require_rows(flat: FlatData, split: Split) -> None:
    if len(flat) == 0:
        raise OrlabError(f"view has no {split} transitions", ErrorCode.DATA_EMPTY_VIEW)


def relabel_success(obs: np.ndarray, next_obs: np.ndarray, goals: np.ndarray) -> np.ndarray:
    near_s = np.linalg.norm(obs[:, :2] - goals[:, :2], axis=-1) < GOAL_RADIUS
    near_next = np.linalg.norm(next_obs[:, :2] - goals[:, :2], axis=-1) < GOAL_RADIUS
    return near_s | near_next


def relabel_goals(
    flat: FlatData,
    rows: np.ndarray,
    gamma: float,
    mix: GoalMix,
    rng: np.random.Generator,
) -> GoalSample:
    """
    Draw one relabeled goal per row.

    Offsets are 0 for current and random goals and Delta >= 1 for future
    goals (before truncation at the trajectory end).
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    n = len(rows)
    modes = rng.choice(3, size=n, p=mix.as_array())
    deltas = rng.geometric(1.0 - gamma, size=n)
    random_rows = rng.integers(len(flat), size=n)

    future_rows = np.minimum(rows + deltas - 1, flat.traj_end[rows])
    goals = np.where(
        (modes == MODE_CURRENT)[:, None],
        flat.obs[rows],
        np.where((modes == MODE_FUTURE)[:, None], flat.next_obs[future_rows], flat.obs[random_rows]),
    )
    success = relabel_success(flat.obs[rows], flat.next_obs[rows], goals)
    return GoalSample(
        goals=goals,
        rewards=np.where(success, 0.0, -1.0),
        terminals=success,
        modes=modes,
        offsets=np.where(modes == MODE_FUTURE, deltas, 0),
    )


def sample_geometric_goal(
    view: SubsetView,
    row: int | np.ndarray,
    gamma: float,
    mix: GoalMix,
    seed: SeedLike,
    split: Split = "train",
) -> GoalSample:
    """
    Relabel one transition (or an array of rows) of view.flat(split).

    Example:
        >>> sample = sample_geometric_goal(view, 10, 0.99, GoalMix(0, 1, 0), seed=0)
        >>> sample.offsets[0] >= 1
        True
    """
    flat = view.flat(split)
    _require_rows(flat, split)
    rows = np.atleast_1d(np.asarray(row, dtype=np.int64))
    if np.any(rows < 0) or np.any(rows >= len(flat)):
        raise IndexError(f"row index out of range for {len(flat)} {split} rows")
    return relabel_goals(flat, rows, gamma, mix, as_generator(seed))


def _batch_rng(seed: int, call_index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(call_index)])


def sample_batch(
    view: SubsetView,
    batch_size: int,
    seed: int,
    call_index: int = 0,
    split: Split = "train",
    gamma: float | None = None,
    mix: GoalMix | None = None,
    negatives: bool = False,
) -> Batch:
    """
    Uniform minibatch with replacement.

    Goal-reaching views are relabeled when gamma is given; negatives adds
    a second, independent set of random-state goals for contrastive losses.

    Raises:
        OrlabError: DATA_EMPTY_VIEW if the split has no rows.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    flat = view.flat(split)
    _require_rows(flat, split)
    rng = _batch_rng(seed, call_index)
    rows = rng.integers(len(flat), size=batch_size)
    rewards = flat.rewards[rows]
    terminals = flat.terminals[rows]
    goals = neg_goals = None
    if view.meta.env.goal_conditioned and gamma is not None:
        sample = relabel_goals(flat, rows, gamma, mix or GoalMix(), rng)
        goals, rewards, terminals = sample.goals, sample.rewards, sample.terminals
        if negatives:
            neg_goals = flat.obs[rng.integers(len(flat), size=batch_size)]
    return Batch(
        obs=flat.obs[rows],
        actions=flat.actions[rows],
        rewards=rewards,
        next_obs=flat.next_obs[rows],
        next_actions=flat.next_actions[rows],
        terminals=terminals,
        rows=rows,
        goals=goals,
        neg_goals=neg_goals,
    )


class BatchSampler:
    """Stateful wrapper that advances the call index on every draw."""

    def __init__(
        self,
        view: SubsetView,
        batch_size: int,
        seed: int,
        split: Split = "train",
        gamma: float | None = None,
        mix: GoalMix | None = None,
        negatives: bool = False,
    ) -> None:
        self.view = view
        self.batch_size = batch_size
        self.seed = seed
        self.split = split
        self.gamma = gamma
        self.mix = mix
        self.negatives = negatives
        self.calls = 0

    def next(self) -> Batch:
        batch = sample_batch(
            self.view,
            self.batch_size,
            self.seed,
            call_index=self.calls,
            split=self.split,
            gamma=self.gamma,
            mix=self.mix,
            negatives=self.negatives,
        )
        self.calls += 1
        return batch
