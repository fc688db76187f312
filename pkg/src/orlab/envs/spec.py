"""
Environment descriptions: maze layouts, EnvSpec and EnvState.

Maze coordinates are in cell units. Cell (row r, column c) covers
x in [c, c+1) and y in [r, r+1); the observation of a maze state is (x, y).
Layouts are plain text grids:

    '#'  wall
    '.'  free
    'S'  free, part of the start region
    'G'  free, part of the goal region

Layouts must be rectangular, fully enclosed by walls and have connected
free space (4-connectivity).
"""

from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

from orlab.types import ErrorCode, OrlabError

# Physical constants shared by dynamics, experts and oracles.
DT = 0.1
GOAL_RADIUS = 0.5
CHAIN_LAMBDA = 0.2
CHAIN_VMAX = 1.0
CHAIN_LENGTH = 25.0

Cell = tuple[int, int]


class EnvId(str, Enum):
    POINTMAZE = "pointmaze"
    GC_POINTMAZE = "gc-pointmaze"
    CHAINRUN = "chainrun"


class RewardKind(str, Enum):
    SPARSE_GOAL = "sparse-goal"
    DENSE = "dense"


# =============================================================================
# MAZE LAYOUTS
# =============================================================================


@dataclass(frozen=True)
class MazeLayout:
    """
    An immutable wall grid.

    Attributes:
        name: Label used in configs and dataset metadata.
        rows: The text grid, one string per row.
    """

    name: str
    rows: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        if not self.rows or not self.rows[0]:
            raise OrlabError("maze layout is empty", ErrorCode.ENV_INVALID_LAYOUT)
        width = len(self.rows[0])
        if any(len(row) != width for row in self.rows):
            raise OrlabError("maze layout is not rectangular", ErrorCode.ENV_INVALID_LAYOUT)
        bad = {ch for row in self.rows for ch in row} - set("#.SG")
        if bad:
            raise OrlabError(
                f"unknown layout characters: {sorted(bad)}", ErrorCode.ENV_INVALID_LAYOUT
            )
        border = self.rows[0] + self.rows[-1] + "".join(r[0] + r[-1] for r in self.rows)
        if set(border) != {"#"}:
            raise OrlabError("maze layout must be enclosed by walls", ErrorCode.ENV_INVALID_LAYOUT)
        free = self.free_cells
        if not free:
            raise OrlabError("maze layout has no free cells", ErrorCode.ENV_INVALID_LAYOUT)
        if len(self.distances_from(free[0])) != len(free):
            raise OrlabError(
                "maze free space is not connected", ErrorCode.ENV_INVALID_LAYOUT
            )

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.rows[0])

    @cached_property
    def walls(self) -> np.ndarray:
        """Boolean (n_rows, n_cols) array, True where a wall is."""
        return np.array([[ch == "#" for ch in row] for row in self.rows], dtype=bool)

    @cached_property
    def free_cells(self) -> list[Cell]:
        return [
            (r, c)
            for r, row in enumerate(self.rows)
            for c, ch in enumerate(row)
            if ch != "#"
        ]

    def cells_marked(self, mark: str) -> list[Cell]:
        return [(r, c) for r, row in enumerate(self.rows) for c, ch in enumerate(row) if ch == mark]

    def region(self, name: str) -> list[Cell]:
        """
        Named cell regions used for start and goal distributions.

        "start" is the 'S' cells (all free cells if none are marked), "goal"
        the 'G' cells, "all" every free cell, "left"/"right" the free cells
        in the left/right half of the columns.
        """
        free = self.free_cells
        if name == "start":
            return self.cells_marked("S") or free
        if name == "goal":
            return self.cells_marked("G") or free
        if name == "all":
            return free
        half = self.n_cols / 2.0
        if name == "left":
            return [cell for cell in free if cell[1] + 0.5 < half]
        if name == "right":
            return [cell for cell in free if cell[1] + 0.5 >= half]
        raise OrlabError(f"unknown maze region: {name}", ErrorCode.ENV_INVALID_LAYOUT)

    def is_wall(self, r: int, c: int) -> bool:
        if r < 0 or c < 0 or r >= self.n_rows or c >= self.n_cols:
            return True
        return bool(self.walls[r, c])

    def cell_of(self, xy: np.ndarray) -> Cell:
        return int(np.floor(xy[1])), int(np.floor(xy[0]))

    @staticmethod
    def center(cell: Cell) -> np.ndarray:
        return np.array([cell[1] + 0.5, cell[0] + 0.5])

    def neighbors(self, cell: Cell) -> list[Cell]:
        r, c = cell
        return [
            (r + dr, c + dc)
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
            if not self.is_wall(r + dr, c + dc)
        ]

    def distances_from(self, source: Cell) -> dict[Cell, int]:
        """BFS step distances from `source` to every reachable free cell."""
        if self.is_wall(*source):
            return {}
        dist = {source: 0}
        queue = deque([source])
        while queue:
            cell = queue.popleft()
            for nxt in self.neighbors(cell):
                if nxt not in dist:
                    dist[nxt] = dist[cell] + 1
                    queue.append(nxt)
        return dist

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(2), np.array([float(self.n_cols), float(self.n_rows)])

    def to_text(self) -> str:
        return "\n".join(self.rows) + "\n"


def parse_layout(text: str, name: str = "custom") -> MazeLayout:
    rows = tuple(line.strip() for line in text.splitlines() if line.strip())
    return MazeLayout(name=name, rows=rows)


def load_layout(path: str | Path) -> MazeLayout:
    path = Path(path)
    if not path.exists():
        raise OrlabError(f"layout file not found: {path}", ErrorCode.PERSIST_FILE_NOT_FOUND)
    return parse_layout(path.read_text(encoding="utf-8"), name=path.stem)


# antmaze-large topology: 7x10 interior inside a wall border.
LARGE = parse_layout(
    """
    ############
    #S...#.....#
    #.##.#.#.#.#
    #......#...#
    #.####.###.#
    #..#.#.....#
    ##.#.#.#.###
    #..#...#..G#
    ############
    """,
    name="large",
)

UMAZE = parse_layout(
    """
    #####
    #S..#
    ###.#
    #G..#
    #####
    """,
    name="umaze",
)

BUNDLED_LAYOUTS: dict[str, MazeLayout] = {"large": LARGE, "umaze": UMAZE}


def get_layout(name_or_path: str) -> MazeLayout:
    if name_or_path in BUNDLED_LAYOUTS:
        return BUNDLED_LAYOUTS[name_or_path]
    return load_layout(name_or_path)


# =============================================================================
# ENV SPEC / STATE
# =============================================================================


@dataclass(frozen=True)
class EnvSpec:
    """
    Static description of an environment instance.

    Attributes:
        env_id: Which dynamics and reward to use.
        state_dim: Observation width (2 for every built-in env).
        action_dim: Action width; bounds are [-1, 1] per dim.
        max_episode_steps: Timeout.
        layout: Wall grid for maze variants, None for chainrun.
        reward_kind: sparse-goal for mazes, dense for chainrun.
        start_region: Named layout region the initial state is drawn from.
        goal_region: Named region gc goals are drawn from.
    """

    env_id: EnvId
    state_dim: int
    action_dim: int
    max_episode_steps: int
    layout: MazeLayout | None = None
    reward_kind: RewardKind = RewardKind.SPARSE_GOAL
    start_region: str = "start"
    goal_region: str = "all"

    def __post_init__(self) -> None:
        object.__setattr__(self, "env_id", EnvId(self.env_id))
        object.__setattr__(self, "reward_kind", RewardKind(self.reward_kind))
        if self.max_episode_steps < 1:
            raise ValueError(f"max_episode_steps must be >= 1, got {self.max_episode_steps}")
        if self.state_dim < 1 or self.action_dim < 1:
            raise ValueError("state_dim and action_dim must be >= 1")
        if self.is_maze:
            if self.layout is None:
                raise ValueError(f"{self.env_id.value} needs a maze layout")
            if not self.layout.region(self.start_region):
                raise OrlabError(
                    f"start region '{self.start_region}' is empty",
                    ErrorCode.ENV_INVALID_LAYOUT,
                )

    @property
    def is_maze(self) -> bool:
        return self.env_id in (EnvId.POINTMAZE, EnvId.GC_POINTMAZE)

    @property
    def goal_conditioned(self) -> bool:
        return self.env_id is EnvId.GC_POINTMAZE

    @property
    def goal_dim(self) -> int:
        return self.state_dim if self.goal_conditioned else 0

    @property
    def action_low(self) -> np.ndarray:
        return -np.ones(self.action_dim)

    @property
    def action_high(self) -> np.ndarray:
        return np.ones(self.action_dim)

    def fixed_goal(self) -> np.ndarray | None:
        """The single-task pointmaze goal: center of the first goal-region cell."""
        if self.env_id is not EnvId.POINTMAZE or self.layout is None:
            return None
        return MazeLayout.center(self.layout.region("goal")[0])

    def with_start_region(self, region: str) -> "EnvSpec":
        return EnvSpec(
            env_id=self.env_id,
            state_dim=self.state_dim,
            action_dim=self.action_dim,
            max_episode_steps=self.max_episode_steps,
            layout=self.layout,
            reward_kind=self.reward_kind,
            start_region=region,
            goal_region=self.goal_region,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "env_id": self.env_id.value,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "max_episode_steps": self.max_episode_steps,
            "layout": self.layout.name if self.layout else None,
            "layout_rows": list(self.layout.rows) if self.layout else None,
            "reward_kind": self.reward_kind.value,
            "start_region": self.start_region,
            "goal_region": self.goal_region,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EnvSpec":
        layout = None
        if data.get("layout_rows"):
            layout = MazeLayout(name=data.get("layout") or "custom", rows=tuple(data["layout_rows"]))
        elif data.get("layout"):
            layout = get_layout(data["layout"])
        return cls(
            env_id=EnvId(data["env_id"]),
            state_dim=int(data["state_dim"]),
            action_dim=int(data["action_dim"]),
            max_episode_steps=int(data["max_episode_steps"]),
            layout=layout,
            reward_kind=RewardKind(data.get("reward_kind", "sparse-goal")),
            start_region=data.get("start_region", "start"),
            goal_region=data.get("goal_region", "all"),
        )


def make_env(
    env_id: str | EnvId,
    layout: str | MazeLayout = "large",
    max_episode_steps: int | None = None,
    start_region: str = "start",
    goal_region: str = "all",
) -> EnvSpec:
    """Build an EnvSpec for a built-in environment with its default settings."""
    env_id = EnvId(env_id)
    if env_id is EnvId.CHAINRUN:
        return EnvSpec(
            env_id=env_id,
            state_dim=2,
            action_dim=1,
            max_episode_steps=max_episode_steps or 200,
            reward_kind=RewardKind.DENSE,
        )
    maze = layout if isinstance(layout, MazeLayout) else get_layout(layout)
    return EnvSpec(
        env_id=env_id,
        state_dim=2,
        action_dim=2,
        max_episode_steps=max_episode_steps or 400,
        layout=maze,
        reward_kind=RewardKind.SPARSE_GOAL,
        start_region=start_region,
        goal_region=goal_region,
    )


@dataclass(frozen=True, eq=False)
class EnvState:
    """
    One environment state.

    Attributes:
        obs: Position (x, y) for mazes, (position, velocity) for chainrun.
        t: Steps taken so far in the episode.
        goal: Active goal position (goal-reaching mazes), else None.
        reached: True once the goal was reached on the last step.
    """

    obs: np.ndarray
    t: int = 0
    goal: np.ndarray | None = None
    reached: bool = False
