"""
reset() and step() for the built-in environments.

pointmaze / gc-pointmaze: a first-order point mass. The action is a
velocity command clipped to [-1, 1]^2; the position advances by DT * action
one axis at a time, and an axis move that would land inside a wall (or
outside the grid) is dropped. Reward is 0 on the step that brings the
position within GOAL_RADIUS of the goal and -1 otherwise; that step ends
the episode.

chainrun: state (position, velocity). v' = (1 - lambda) v + lambda * vmax * a,
x' = clip(x + DT * v', 0, CHAIN_LENGTH), reward = v'. Episodes end on timeout.
"""

import numpy as np

from orlab.envs.spec import (
    CHAIN_LAMBDA,
    CHAIN_LENGTH,
    CHAIN_VMAX,
    DT,
    GOAL_RADIUS,
    EnvId,
    EnvSpec,
    EnvState,
    MazeLayout,
)
from orlab.seeding import SeedLike, as_generator
from orlab.types import ErrorCode, OrlabError

# Start positions are jittered inside their cell by at most this much.
START_JITTER = 0.25


def reset(spec: EnvSpec, seed: SeedLike) -> EnvState:
    """
    Draw an initial state (and, for gc-pointmaze, a goal).

    Maze starts are the center of a uniformly chosen start-region cell plus
    a uniform jitter of +-START_JITTER per axis. gc goals are the center of
    a uniformly chosen goal-region cell.
    """
    rng = as_generator(seed)
    if spec.env_id is EnvId.CHAINRUN:
        obs = np.array([rng.uniform(0.0, 1.0), 0.0])
        return EnvState(obs=obs)

    layout = spec.layout
    assert layout is not None
    starts = layout.region(spec.start_region)
    cell = starts[int(rng.integers(len(starts)))]
    obs = MazeLayout.center(cell) + rng.uniform(-START_JITTER, START_JITTER, size=2)

    goal: np.ndarray | None
    if spec.goal_conditioned:
        goals = layout.region(spec.goal_region)
        goal = MazeLayout.center(goals[int(rng.integers(len(goals)))])
    else:
        goal = spec.fixed_goal()
    return EnvState(obs=obs, goal=goal)


def move_point(layout: MazeLayout, xy: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Axis-separable move with wall projection; `action` must already be clipped."""
    x, y = float(xy[0]), float(xy[1])
    new_x = x + DT * float(action[0])
    if layout.is_wall(int(np.floor(y)), int(np.floor(new_x))):
        new_x = x
    new_y = y + DT * float(action[1])
    if layout.is_wall(int(np.floor(new_y)), int(np.floor(new_x))):
        new_y = y
    return np.array([new_x, new_y])


def goal_reached(xy: np.ndarray, goal: np.ndarray) -> bool:
    return bool(np.linalg.norm(np.asarray(xy)[:2] - np.asarray(goal)[:2]) < GOAL_RADIUS)


def chain_velocity(v: float, a: float) -> float:
    return (1.0 - CHAIN_LAMBDA) * v + CHAIN_LAMBDA * CHAIN_VMAX * a


def step(spec: EnvSpec, state: EnvState, action: np.ndarray) -> tuple[EnvState, float, bool]:
    """
    Advance one step.

    Returns:
        (next state, reward, done). `next_state.reached` tells a goal-reach
        apart from a timeout when done is True.

    Raises:
        OrlabError: ENV_NON_FINITE_ACTION if the action has NaN/Inf.
    """
    action = np.asarray(action, dtype=np.float64).reshape(-1)
    if action.shape != (spec.action_dim,):
        raise OrlabError(
            f"action shape {action.shape} != ({spec.action_dim},)",
            ErrorCode.EVAL_DIMENSION_MISMATCH,
        )
    if not np.all(np.isfinite(action)):
        raise OrlabError("action is not finite", ErrorCode.ENV_NON_FINITE_ACTION)
    action = np.clip(action, -1.0, 1.0)
    t = state.t + 1

    if spec.env_id is EnvId.CHAINRUN:
        v = chain_velocity(float(state.obs[1]), float(action[0]))
        x = float(np.clip(state.obs[0] + DT * v, 0.0, CHAIN_LENGTH))
        done = t >= spec.max_episode_steps
        return EnvState(obs=np.array([x, v]), t=t), v, done

    assert spec.layout is not None and state.goal is not None
    obs = move_point(spec.layout, state.obs, action)
    reached = goal_reached(obs, state.goal)
    reward = 0.0 if reached else -1.0
    done = reached or t >= spec.max_episode_steps
    return EnvState(obs=obs, t=t, goal=state.goal, reached=reached), reward, done
