"""
Scripted experts used to collect datasets.

The maze expert follows BFS shortest paths over cells: from its current
cell it heads at unit speed for the center of the neighbouring cell that is
one step closer to the goal cell, and for the goal itself once inside the
goal cell. Two adjacent cells form a convex rectangle, so the straight
segment never touches a wall. The chainrun expert always pushes forward at
full throttle. Gaussian noise with standard deviation sigma_data is added
before clipping.
"""

from functools import lru_cache

import numpy as np

from orlab.envs.spec import Cell, EnvId, EnvSpec, EnvState, MazeLayout
from orlab.seeding import SeedLike, as_generator
from orlab.types import ErrorCode, OrlabError


@lru_cache(maxsize=512)
def _distance_table(layout: MazeLayout, goal_cell: Cell) -> dict[Cell, int]:
    return layout.distances_from(goal_cell)


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        return np.zeros_like(vec)
    return vec / norm


def shortest_path_direction(layout: MazeLayout, xy: np.ndarray, goal: np.ndarray) -> np.ndarray:
    """Unit vector the noiseless maze expert moves along."""
    goal_cell = layout.cell_of(goal)
    dist = _distance_table(layout, goal_cell)
    here = layout.cell_of(xy)
    if here not in dist:
        raise OrlabError(
            f"goal cell {goal_cell} unreachable from {here}",
            ErrorCode.ENV_UNREACHABLE_GOAL,
        )
    if here == goal_cell:
        return _unit(np.asarray(goal, dtype=np.float64)[:2] - xy)
    nxt = min(layout.neighbors(here), key=lambda cell: (dist.get(cell, np.inf), cell))
    return _unit(MazeLayout.center(nxt) - xy)


def cell_distance(layout: MazeLayout, xy: np.ndarray, goal: np.ndarray) -> int:
    """BFS cell distance from the cell containing xy to the goal's cell."""
    dist = _distance_table(layout, layout.cell_of(goal))
    here = layout.cell_of(xy)
    if here not in dist:
        raise OrlabError("goal unreachable", ErrorCode.ENV_UNREACHABLE_GOAL)
    return dist[here]


def expert_action(
    spec: EnvSpec,
    state: EnvState | np.ndarray,
    goal: np.ndarray | None,
    sigma_data: float,
    seed: SeedLike,
    clip: bool = True,
) -> np.ndarray:
    """
    Noisy scripted action.

    Args:
        spec: Environment.
        state: Current state (or its observation).
        goal: Goal position for maze variants; falls back to state.goal.
        sigma_data: Standard deviation of the additive Gaussian noise.
        seed: Seed or Generator for the noise.
        clip: Clip to the action bounds (disable only to inspect raw noise).

    Raises:
        OrlabError: ENV_UNREACHABLE_GOAL if the goal cell is a wall or cut off.
    """
    if sigma_data < 0:
        raise ValueError(f"sigma_data must be >= 0, got {sigma_data}")
    obs = state.obs if isinstance(state, EnvState) else np.asarray(state, dtype=np.float64)
    if goal is None and isinstance(state, EnvState):
        goal = state.goal

    if spec.env_id is EnvId.CHAINRUN:
        base = np.ones(spec.action_dim)
    else:
        if goal is None:
            raise OrlabError("maze expert needs a goal", ErrorCode.ENV_UNREACHABLE_GOAL)
        assert spec.layout is not None
        base = shortest_path_direction(spec.layout, obs[:2], goal)

    rng = as_generator(seed)
    action = base + (rng.normal(0.0, sigma_data, size=spec.action_dim) if sigma_data > 0 else 0.0)
    if clip:
        action = np.clip(action, -1.0, 1.0)
    return np.asarray(action, dtype=np.float64)
