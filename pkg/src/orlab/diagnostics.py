"""
Measurement instruments for extracted policies.

policy_mse compares a policy's mean action with the exact oracle action
on three state sources: train-split states, validation-split states and
states the policy visits itself. ess, overfit_gap and action_spread
quantify how AWR-style weighting concentrates on few samples and how far
actions spread beyond the data.

Oracle tie states (several optimal atoms) are excluded from MSE and
counted separately.
"""

import csv
import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from orlab.data.dataset import SubsetView, rollout
from orlab.envs.dynamics import reset
from orlab.envs.oracle import OracleModel
from orlab.envs.spec import EnvSpec, EnvState
from orlab.seeding import derive_seed
from orlab.types import ErrorCode, OrlabError

if TYPE_CHECKING:
    from orlab.policy.extract import PolicyArtifact

logger = logging.getLogger(__name__)

ActionFn = Callable[[np.ndarray, np.ndarray | None], np.ndarray]

EVAL_EPISODES = 50
MIN_EVAL_STATES = 50
MIN_SPREAD_STATES = 100
HULL_NEIGHBORS = 16

DIAGNOSTIC_COLUMNS = (
    "run_id",
    "step",
    "train_mse",
    "val_mse",
    "eval_mse",
    "ties",
    "ess",
    "train_loss",
    "val_loss",
    "overfit_gap",
    "spread_std",
    "outside_hull",
    "score",
)


def as_action_fn(policy: "PolicyArtifact | ActionFn") -> ActionFn:
    """An artifact acts through its clipped mean; plain callables pass through."""
    mean_action = getattr(policy, "mean_action", None)
    return mean_action if callable(mean_action) else policy


# =============================================================================
# POLICY MSE
# =============================================================================


@dataclass(frozen=True)
class MseEstimate:
    mse: float
    n_states: int
    n_ties: int


@dataclass(frozen=True)
class MseReport:
    """Train / validation / evaluation MSE of one policy at one step."""

    train_mse: float
    val_mse: float
    eval_mse: float
    step: int = 0
    run_id: str = ""
    ties: int = 0

    def __post_init__(self) -> None:
        for name in ("train_mse", "val_mse", "eval_mse"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def mse_on_states(
    action_fn: ActionFn,
    oracle: OracleModel,
    obs: np.ndarray,
    goals: np.ndarray | None = None,
) -> MseEstimate:
    """Mean over non-tie states of |mu(s) - pi*(s)|^2."""
    if len(obs) == 0:
        raise OrlabError("no states to measure", ErrorCode.DIAG_EMPTY_BATCH)
    optimal, ties = oracle.optimal_actions(obs, goals)
    keep = ~ties
    if not np.any(keep):
        raise OrlabError("every measured state is an oracle tie", ErrorCode.DIAG_EMPTY_BATCH)
    actions = np.atleast_2d(action_fn(obs, goals))
    errors = np.sum((actions - optimal) ** 2, axis=1)
    return MseEstimate(mse=float(np.mean(errors[keep])), n_states=int(keep.sum()), n_ties=int(ties.sum()))


def rollout_states(
    env: EnvSpec,
    action_fn: ActionFn,
    episodes: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray | None]:
    """States (and active goals) visited by the deterministic policy."""

    def act(spec: EnvSpec, state: EnvState, rng: np.random.Generator) -> np.ndarray:
        goal = state.goal[None] if spec.goal_conditioned else None
        return np.atleast_2d(action_fn(state.obs[None], goal))[0]

    obs, goals = [], []
    for i in range(episodes):
        initial = reset(env, derive_seed(seed, "episode", i))
        traj = rollout(env, act, np.random.default_rng(derive_seed(seed, "actions", i)), traj_id=i, initial=initial)
        obs.append(traj.obs)
        if env.goal_conditioned:
            goals.append(np.repeat(initial.goal[None], len(traj), axis=0))
    return np.concatenate(obs), (np.concatenate(goals) if goals else None)


def policy_mse_estimate(
    policy: "PolicyArtifact | ActionFn",
    oracle: OracleModel,
    source: str,
    view: SubsetView | None = None,
    env: EnvSpec | None = None,
    episodes: int = EVAL_EPISODES,
    seed: int = 0,
    min_states: int = MIN_EVAL_STATES,
) -> MseEstimate:
    """
    policy_mse with state and tie counts.

    Raises:
        OrlabError: DIAG_MISSING_VALIDATION when the val source is empty,
            DIAG_TOO_FEW_STATES when rollouts visit fewer than min_states.
    """
    action_fn = as_action_fn(policy)
    if source in ("train", "val"):
        if view is None:
            raise ValueError(f"source '{source}' needs a dataset view")
        flat = view.flat(source)
        if len(flat) == 0:
            code = ErrorCode.DIAG_MISSING_VALIDATION if source == "val" else ErrorCode.DIAG_EMPTY_BATCH
            raise OrlabError(f"view has no {source} states", code)
        return mse_on_states(action_fn, oracle, flat.obs, flat.goals)
    if source == "rollout":
        env = env or oracle.spec
        obs, goals = rollout_states(env, action_fn, episodes, seed)
        if len(obs) < min_states:
            raise OrlabError(
                f"rollouts visited {len(obs)} states, fewer than {min_states}",
                ErrorCode.DIAG_TOO_FEW_STATES,
            )
        return mse_on_states(action_fn, oracle, obs, goals)
    raise ValueError(f"unknown state source: {source}")


def policy_mse(
    policy: "PolicyArtifact | ActionFn",
    oracle: OracleModel,
    source: str,
    view: SubsetView | None = None,
    env: EnvSpec | None = None,
    episodes: int = EVAL_EPISODES,
    seed: int = 0,
) -> float:
    """
    Mean squared distance between the policy mean and the oracle action.

    Args:
        policy: Extracted artifact, or any (obs, goals) -> actions function.
        oracle: Exact solution of the environment.
        source: "train", "val" (dataset split states) or "rollout" (fresh
            episodes under the policy).
        view: Dataset view for the split sources.
        env: Environment for rollouts (defaults to the oracle's).
        episodes: Rollout episodes.
        seed: Rollout seed.
    """
    return policy_mse_estimate(policy, oracle, source, view, env, episodes, seed).mse


def mse_report(
    policy: "PolicyArtifact | ActionFn",
    oracle: OracleModel,
    view: SubsetView,
    env: EnvSpec | None = None,
    episodes: int = EVAL_EPISODES,
    seed: int = 0,
    step: int = 0,
    run_id: str = "",
) -> MseReport:
    train = policy_mse_estimate(policy, oracle, "train", view)
    val = policy_mse_estimate(policy, oracle, "val", view)
    evaluation = policy_mse_estimate(policy, oracle, "rollout", env=env, episodes=episodes, seed=seed)
    return MseReport(
        train_mse=train.mse,
        val_mse=val.mse,
        eval_mse=evaluation.mse,
        step=step,
        run_id=run_id,
        ties=train.n_ties + val.n_ties + evaluation.n_ties,
    )


# =============================================================================
# WEIGHTING AND OVERFITTING
# =============================================================================


def ess(weights: Sequence[float] | np.ndarray) -> float:
    """
    Effective sample size (sum w)^2 / sum w^2.

    Example:
        >>> ess(np.ones(256))
        256.0
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise OrlabError("ess of an empty batch", ErrorCode.DIAG_EMPTY_BATCH)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return float(np.sum(w) ** 2 / np.sum(w**2))


def overfit_gap(curves: Iterable[Mapping[str, float]]) -> np.ndarray:
    """
    (val_loss - train_loss) per logged step, shape (n, 2) of (step, gap).

    Raises:
        OrlabError: DIAG_MISSING_VALIDATION if any row lacks val_loss.
    """
    rows = list(curves)
    if not rows:
        raise OrlabError("no loss curve logged", ErrorCode.DIAG_MISSING_VALIDATION)
    if any("val_loss" not in row for row in rows):
        raise OrlabError("loss curve has no validation measurements", ErrorCode.DIAG_MISSING_VALIDATION)
    return np.array([[row["step"], row["val_loss"] - row["train_loss"]] for row in rows], dtype=np.float64)


# =============================================================================
# ACTION SPREAD
# =============================================================================


@dataclass(frozen=True)
class ActionSpread:
    """Per-dimension std of emitted actions and the out-of-hull share."""

    std: np.ndarray
    outside_hull: float | None
    n_states: int

    @property
    def mean_std(self) -> float:
        return float(np.mean(self.std))


def _inside_hull(points: np.ndarray, query: np.ndarray, tol: float = 1e-9) -> bool:
    if points.shape[1] == 1:
        return bool(points.min() - tol <= query[0] <= points.max() + tol)
    try:
        return bool(Delaunay(points).find_simplex(query, tol=tol) >= 0)
    except QhullError:
        return False


def action_spread(
    policy: "PolicyArtifact | ActionFn",
    states: np.ndarray,
    goals: np.ndarray | None = None,
    view: SubsetView | None = None,
    neighbors: int = HULL_NEIGHBORS,
) -> ActionSpread:
    """
    Spread of the policy's actions over evaluation states.

    With a view, each action is also tested against the convex hull of the
    dataset actions taken at the `neighbors` nearest dataset states.

    Raises:
        OrlabError: DIAG_TOO_FEW_STATES with fewer than 100 states.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if len(states) < MIN_SPREAD_STATES:
        raise OrlabError(
            f"action spread needs at least {MIN_SPREAD_STATES} states, got {len(states)}",
            ErrorCode.DIAG_TOO_FEW_STATES,
        )
    actions = np.atleast_2d(as_action_fn(policy)(states, goals))
    outside = None
    if view is not None:
        flat = view.flat("train")
        k = min(neighbors, len(flat))
        tree = cKDTree(flat.obs)
        _, idx = tree.query(states, k=k)
        idx = np.asarray(idx).reshape(len(states), k)
        misses = sum(not _inside_hull(flat.actions[idx[i]], actions[i]) for i in range(len(states)))
        outside = misses / len(states)
    return ActionSpread(std=actions.std(axis=0), outside_hull=outside, n_states=len(states))


# =============================================================================
# CSV
# =============================================================================


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float | np.floating):
        return repr(float(value))
    return str(value)


def write_diagnostics_csv(path: str | Path, rows: Iterable[Mapping[str, Any]]) -> Path:
    """One row per (run, step); columns in DIAGNOSTIC_COLUMNS order, blanks for absent values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in DIAGNOSTIC_COLUMNS])
    return path
