"""
Exact dynamic-programming oracles.

TabularMdp is a generic finite MDP with sparse successor lists. Value
iteration, policy evaluation and discounted future-state occupancies are
solved on it exactly; OracleModel discretizes a built-in environment into a
TabularMdp and answers continuous-state queries (pi*, Q*, Q^beta) by
nearest-cell lookup.

Maze discretization: each free cell is split into resolution x resolution
subcells whose centers are the discrete states. Actions are 9 atoms (the
null action plus 8 compass directions at unit magnitude). A transition
moves the subcell center with the true dynamics and spreads the landing
point over the surrounding subcell centers by bilinear interpolation,
renormalized over free subcells.

Chainrun discretization: velocity on an evenly spaced grid over
[-vmax, vmax] with 5 throttle atoms; position does not affect reward or
dynamics of velocity and is dropped.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from orlab.envs.dynamics import chain_velocity, move_point
from orlab.envs.spec import CHAIN_VMAX, GOAL_RADIUS, Cell, EnvId, EnvSpec, MazeLayout
from orlab.seeding import SeedLike, as_generator
from orlab.types import ErrorCode, OrlabError

logger = logging.getLogger(__name__)

VI_TOLERANCE = 1e-8
TIE_TOLERANCE = 1e-9
MAX_ORACLE_STATES = 1_000_000
CHAIN_ATOMS = np.linspace(-1.0, 1.0, 5)


def compass_atoms() -> np.ndarray:
    """(9, 2) array: null action first, then E, NE, N, ... counter-clockwise."""
    angles = np.arange(8) * (np.pi / 4.0)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    dirs[np.abs(dirs) < 1e-15] = 0.0
    return np.vstack([np.zeros((1, 2)), dirs])


# =============================================================================
# GENERIC TABULAR MDP
# =============================================================================


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """
    Finite MDP with K successor slots per (state, action).

    Attributes:
        next_index: (S, A, K) successor state indices.
        next_prob: (S, A, K) successor probabilities; rows sum to 1.
        reward: (S, A) expected reward of taking a in s.
        terminal: (S, A) True when the transition ends the episode.
        gamma: Discount factor in [0, 1).
    """

    next_index: np.ndarray
    next_prob: np.ndarray
    reward: np.ndarray
    terminal: np.ndarray
    gamma: float

    def __post_init__(self) -> None:
        if self.next_index.shape != self.next_prob.shape or self.next_index.ndim != 3:
            raise ValueError("next_index and next_prob must both be (S, A, K)")
        if self.reward.shape != self.next_index.shape[:2]:
            raise ValueError("reward must be (S, A)")
        if self.terminal.shape != self.reward.shape:
            raise ValueError("terminal must be (S, A)")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        sums = self.next_prob.sum(axis=-1)
        if not np.allclose(sums, 1.0, atol=1e-9, rtol=0.0):
            raise ValueError("transition rows must sum to 1")
        if self.next_index.min() < 0 or self.next_index.max() >= self.n_states:
            raise ValueError("successor index out of range")

    @classmethod
    def deterministic(
        cls,
        next_state: np.ndarray,
        reward: np.ndarray,
        terminal: np.ndarray,
        gamma: float,
    ) -> "TabularMdp":
        """Build from an (S, A) table of successor indices."""
        next_state = np.asarray(next_state, dtype=np.int64)
        return cls(
            next_index=next_state[..., None],
            next_prob=np.ones(next_state.shape + (1,)),
            reward=np.asarray(reward, dtype=np.float64),
            terminal=np.asarray(terminal, dtype=bool),
            gamma=gamma,
        )

    @property
    def n_states(self) -> int:
        return int(self.next_index.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.next_index.shape[1])

    def expected_next(self, values: np.ndarray) -> np.ndarray:
        """(S, A) table of E[values(s')]."""
        return np.sum(self.next_prob * values[self.next_index], axis=-1)

    def backup(self, values: np.ndarray) -> np.ndarray:
        """Q(s, a) = r(s, a) + gamma (1 - terminal) E[V(s')]."""
        return self.reward + self.gamma * (~self.terminal) * self.expected_next(values)

    @cached_property
    def sa_matrix(self) -> sp.csr_matrix:
        """Sparse (S*A, S) one-step successor distribution, terminal rows zeroed."""
        s, a, k = self.next_index.shape
        rows = np.repeat(np.arange(s * a), k)
        live = np.repeat((~self.terminal).reshape(-1), k)
        data = self.next_prob.reshape(-1) * live
        return sp.csr_matrix(
            (data, (rows, self.next_index.reshape(-1))), shape=(s * a, s)
        )

    def policy_matrix(self, policy: np.ndarray) -> sp.csr_matrix:
        """Sparse (S, S*A) matrix mapping Q to E_{a~pi}[Q(s, a)]."""
        s, a = self.n_states, self.n_actions
        rows = np.repeat(np.arange(s), a)
        cols = np.arange(s * a)
        return sp.csr_matrix((policy.reshape(-1), (rows, cols)), shape=(s, s * a))


def as_policy_table(policy: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    """Accept (S,) action indices or (S, A) probabilities; return (S, A) probabilities."""
    policy = np.asarray(policy)
    if policy.ndim == 1:
        table = np.zeros((n_states, n_actions))
        table[np.arange(n_states), policy.astype(np.int64)] = 1.0
        return table
    if policy.shape != (n_states, n_actions):
        raise ValueError(f"policy must be (S,) or (S, A), got {policy.shape}")
    if not np.allclose(policy.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("policy rows must sum to 1")
    return policy.astype(np.float64)


@dataclass(frozen=True, eq=False)
class ValueSolution:
    """
    Result of value iteration.

    Attributes:
        values: V*(s).
        q: Q*(s, a).
        greedy: argmax_a Q*(s, a), lowest index on ties.
        ties: True where the two best actions are within TIE_TOLERANCE.
        residuals: Sup-norm change of V per sweep.
    """

    values: np.ndarray
    q: np.ndarray
    greedy: np.ndarray
    ties: np.ndarray
    residuals: list[float] = field(default_factory=list)


def _tie_mask(q: np.ndarray) -> np.ndarray:
    if q.shape[1] < 2:
        return np.zeros(q.shape[0], dtype=bool)
    top2 = -np.partition(-q, 1, axis=1)[:, :2]
    return np.asarray((top2[:, 0] - top2[:, 1]) <= TIE_TOLERANCE)


def value_iteration(
    mdp: TabularMdp,
    tol: float = VI_TOLERANCE,
    max_sweeps: int = 200_000,
) -> ValueSolution:
    """Iterate V <- max_a backup(V) from V = 0 until the sup-norm change is below tol."""
    values = np.zeros(mdp.n_states)
    residuals: list[float] = []
    for _ in range(max_sweeps):
        q = mdp.backup(values)
        new_values = q.max(axis=1)
        residual = float(np.max(np.abs(new_values - values)))
        residuals.append(residual)
        values = new_values
        if residual < tol:
            break
    else:
        logger.warning("value iteration stopped after %d sweeps (residual %.3g)", max_sweeps, residuals[-1])
    q = mdp.backup(values)
    return ValueSolution(
        values=values,
        q=q,
        greedy=np.argmax(q, axis=1),
        ties=_tie_mask(q),
        residuals=residuals,
    )


def policy_evaluation(
    mdp: TabularMdp,
    policy: np.ndarray,
    method: str = "direct",
    tol: float = VI_TOLERANCE,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Q^pi and V^pi of a fixed discrete policy.

    Args:
        mdp: The MDP.
        policy: (S,) action indices or (S, A) action probabilities.
        method: "direct" solves (I - gamma P_pi) V = r_pi with a sparse LU,
            "iterative" runs Bellman expectation sweeps to tol.

    Returns:
        (Q of shape (S, A), V of shape (S,)).
    """
    table = as_policy_table(policy, mdp.n_states, mdp.n_actions)
    if method == "direct":
        pi = mdp.policy_matrix(table)
        p_pi = pi @ mdp.sa_matrix
        r_pi = pi @ mdp.reward.reshape(-1)
        system = sp.identity(mdp.n_states, format="csc") - mdp.gamma * p_pi.tocsc()
        values = np.asarray(spla.spsolve(system, r_pi), dtype=np.float64).reshape(-1)
    elif method == "iterative":
        values = np.zeros(mdp.n_states)
        while True:
            new_values = np.sum(table * mdp.backup(values), axis=1)
            done = float(np.max(np.abs(new_values - values))) < tol
            values = new_values
            if done:
                break
    else:
        raise ValueError(f"unknown policy evaluation method: {method}")
    return mdp.backup(values), values


def discounted_occupancy(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """
    Geometric future-state distribution p+(g | s, a).

    p+(g | s, a) = sum_{k>=1} (1 - gamma) gamma^(k-1) P(s_{t+k} = g | s_t = s, a_t = a)
    with a_{t+1:} ~ policy. Terminal flags are ignored (the chain keeps
    running), which is the quantity the contrastive critic estimates.

    Returns:
        (S, A, S) dense array; each (s, a) slice sums to 1.
    """
    table = as_policy_table(policy, mdp.n_states, mdp.n_actions)
    s, a = mdp.n_states, mdp.n_actions
    dense = np.zeros((s * a, s))
    rows = np.repeat(np.arange(s * a), mdp.next_index.shape[2])
    np.add.at(dense, (rows, mdp.next_index.reshape(-1)), mdp.next_prob.reshape(-1))
    p_pi = np.einsum("sa,sat->st", table, dense.reshape(s, a, s))
    resolvent = np.linalg.inv(np.eye(s) - mdp.gamma * p_pi)
    occupancy = (1.0 - mdp.gamma) * dense @ resolvent
    return occupancy.reshape(s, a, s)


def sample_transitions(
    mdp: TabularMdp,
    policy: np.ndarray,
    n_steps: int,
    episode_length: int,
    seed: SeedLike,
    start_states: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """
    Roll out a discrete policy on a TabularMdp.

    Returns index arrays s, a, r, s_next, a_next, terminal, traj_id, t.
    Trajectory-final transitions (terminal or timeout) repeat a as a_next.
    """
    rng = as_generator(seed)
    table = as_policy_table(policy, mdp.n_states, mdp.n_actions)
    starts = np.arange(mdp.n_states) if start_states is None else np.asarray(start_states)
    cols: dict[str, list[float]] = {k: [] for k in ("s", "a", "r", "s_next", "a_next", "terminal", "traj_id", "t")}
    traj = 0
    while len(cols["s"]) < n_steps:
        state = int(rng.choice(starts))
        action = int(rng.choice(mdp.n_actions, p=table[state]))
        for t in range(episode_length):
            slot = int(rng.choice(mdp.next_index.shape[2], p=mdp.next_prob[state, action]))
            nxt = int(mdp.next_index[state, action, slot])
            term = bool(mdp.terminal[state, action])
            last = term or t == episode_length - 1
            nxt_action = action if last else int(rng.choice(mdp.n_actions, p=table[nxt]))
            for key, value in (
                ("s", state), ("a", action), ("r", mdp.reward[state, action]),
                ("s_next", nxt), ("a_next", nxt_action), ("terminal", term),
                ("traj_id", traj), ("t", t),
            ):
                cols[key].append(value)
            if last:
                break
            state, action = nxt, nxt_action
        traj += 1
    out = {k: np.asarray(v) for k, v in cols.items()}
    out["r"] = out["r"].astype(np.float64)
    out["terminal"] = out["terminal"].astype(bool)
    return out


# =============================================================================
# ENVIRONMENT ORACLE
# =============================================================================


@dataclass(frozen=True, eq=False)
class _MazeGrid:
    """Subcell discretization of a maze layout."""

    layout: MazeLayout
    resolution: int
    centers: np.ndarray
    index: dict[tuple[int, int], int]

    @classmethod
    def build(cls, layout: MazeLayout, resolution: int) -> "_MazeGrid":
        centers: list[np.ndarray] = []
        index: dict[tuple[int, int], int] = {}
        for r, c in layout.free_cells:
            for i in range(resolution):
                for j in range(resolution):
                    key = (r * resolution + i, c * resolution + j)
                    index[key] = len(centers)
                    centers.append(np.array([(key[1] + 0.5) / resolution, (key[0] + 0.5) / resolution]))
        return cls(layout=layout, resolution=resolution, centers=np.array(centers), index=index)

    def lookup(self, xy: np.ndarray) -> int:
        key = (int(np.floor(xy[1] * self.resolution)), int(np.floor(xy[0] * self.resolution)))
        found = self.index.get(key)
        if found is not None:
            return found
        return int(np.argmin(np.sum((self.centers - xy[:2]) ** 2, axis=1)))

    def spread(self, xy: np.ndarray) -> list[tuple[int, float]]:
        """Bilinear weights of xy over the surrounding free subcell centers."""
        u = xy[0] * self.resolution - 0.5
        v = xy[1] * self.resolution - 0.5
        j0, i0 = int(np.floor(u)), int(np.floor(v))
        fu, fv = u - j0, v - i0
        weights: list[tuple[int, float]] = []
        for di, wi in ((0, 1.0 - fv), (1, fv)):
            for dj, wj in ((0, 1.0 - fu), (1, fu)):
                w = wi * wj
                idx = self.index.get((i0 + di, j0 + dj))
                if w > 0.0 and idx is not None:
                    weights.append((idx, w))
        total = sum(w for _, w in weights)
        return [(idx, w / total) for idx, w in weights]


class OracleModel:
    """
    Discretized environment with cached exact solutions.

    For gc-pointmaze the MDP depends on the goal; solutions are cached per
    goal cell, with the goal placed at the cell center.

    Example:
        oracle = solve_oracle(make_env("gc-pointmaze", layout="umaze"), 4, 0.99)
        action, tie = oracle.optimal_action(obs, goal)
    """

    def __init__(self, spec: EnvSpec, resolution: int, gamma: float) -> None:
        if int(resolution) != resolution or resolution < 1:
            raise OrlabError(
                f"resolution must be a positive integer, got {resolution}",
                ErrorCode.ENV_ORACLE_RESOLUTION,
            )
        self.spec = spec
        self.resolution = int(resolution)
        self.gamma = gamma
        self._solutions: dict[Cell | None, ValueSolution] = {}
        self._mdps: dict[Cell | None, TabularMdp] = {}

        if spec.env_id is EnvId.CHAINRUN:
            self.atoms = CHAIN_ATOMS.reshape(-1, 1)
            self.velocities = np.linspace(-CHAIN_VMAX, CHAIN_VMAX, 8 * self.resolution + 1)
            self._grid: _MazeGrid | None = None
            n_states = len(self.velocities)
        else:
            assert spec.layout is not None
            self.atoms = compass_atoms()
            n_states = len(spec.layout.free_cells) * self.resolution**2
            if n_states > MAX_ORACLE_STATES:
                raise OrlabError(
                    f"resolution {resolution} gives {n_states} states (max {MAX_ORACLE_STATES})",
                    ErrorCode.ENV_ORACLE_RESOLUTION,
                )
            self._grid = _MazeGrid.build(spec.layout, self.resolution)
        self.n_states = n_states
        logger.debug("oracle for %s: %d states, %d atoms", spec.env_id.value, n_states, len(self.atoms))

    # =========================================================================
    # MDP CONSTRUCTION
    # =========================================================================

    @cached_property
    def _maze_moves(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Goal-independent successor tables: landing points, indices, probabilities."""
        grid = self._grid
        assert grid is not None
        s, a = len(grid.centers), len(self.atoms)
        landing = np.zeros((s, a, 2))
        spreads: list[list[tuple[int, float]]] = []
        for si, center in enumerate(grid.centers):
            for ai, atom in enumerate(self.atoms):
                landing[si, ai] = move_point(grid.layout, center, atom)
                spreads.append(grid.spread(landing[si, ai]))
        k = max(len(w) for w in spreads)
        index = np.zeros((s * a, k), dtype=np.int64)
        prob = np.zeros((s * a, k))
        for row, weights in enumerate(spreads):
            for slot, (idx, w) in enumerate(weights):
                index[row, slot] = idx
                prob[row, slot] = w
            index[row, len(weights):] = weights[0][0]
        return landing, index.reshape(s, a, k), prob.reshape(s, a, k)

    def goal_key(self, goal: np.ndarray | None) -> Cell | None:
        if self.spec.env_id is EnvId.CHAINRUN:
            return None
        if goal is None:
            goal = self.spec.fixed_goal()
        if goal is None:
            raise OrlabError("goal required for gc-pointmaze oracle", ErrorCode.VALUE_MISSING_GOAL)
        assert self.spec.layout is not None
        return self.spec.layout.cell_of(np.asarray(goal))

    def mdp(self, goal: np.ndarray | None = None) -> TabularMdp:
        key = self.goal_key(goal)
        if key in self._mdps:
            return self._mdps[key]
        if self.spec.env_id is EnvId.CHAINRUN:
            mdp = self._chain_mdp()
        else:
            assert key is not None
            goal_xy = MazeLayout.center(key)
            landing, index, prob = self._maze_moves
            reached = np.linalg.norm(landing - goal_xy, axis=-1) < GOAL_RADIUS
            mdp = TabularMdp(
                next_index=index,
                next_prob=prob,
                reward=np.where(reached, 0.0, -1.0),
                terminal=reached,
                gamma=self.gamma,
            )
        self._mdps[key] = mdp
        return mdp

    def _chain_mdp(self) -> TabularMdp:
        grid = self.velocities
        spacing = grid[1] - grid[0]
        s, a = len(grid), len(CHAIN_ATOMS)
        index = np.zeros((s, a, 2), dtype=np.int64)
        prob = np.zeros((s, a, 2))
        reward = np.zeros((s, a))
        for si, v in enumerate(grid):
            for ai, throttle in enumerate(CHAIN_ATOMS):
                nv = chain_velocity(float(v), float(throttle))
                reward[si, ai] = nv
                pos = (nv - grid[0]) / spacing
                lo = int(np.clip(np.floor(pos), 0, s - 2))
                frac = float(np.clip(pos - lo, 0.0, 1.0))
                index[si, ai] = (lo, lo + 1)
                prob[si, ai] = (1.0 - frac, frac)
        return TabularMdp(index, prob, reward, np.zeros((s, a), dtype=bool), self.gamma)

    # =========================================================================
    # QUERIES
    # =========================================================================

    def solve(self, goal: np.ndarray | None = None) -> ValueSolution:
        key = self.goal_key(goal)
        if key not in self._solutions:
            self._solutions[key] = value_iteration(self.mdp(goal))
        return self._solutions[key]

    def state_index(self, obs: np.ndarray) -> int:
        obs = np.asarray(obs, dtype=np.float64)
        if self._grid is None:
            return int(np.argmin(np.abs(self.velocities - obs[1])))
        return self._grid.lookup(obs)

    def state_center(self, index: int) -> np.ndarray:
        """Representative continuous observation of a discrete state."""
        if self._grid is None:
            return np.array([0.0, self.velocities[index]])
        return self._grid.centers[index].copy()

    def atom_index(self, action: np.ndarray) -> int:
        """Nearest action atom."""
        return int(np.argmin(np.sum((self.atoms - np.asarray(action).reshape(1, -1)) ** 2, axis=1)))

    def optimal_action(self, obs: np.ndarray, goal: np.ndarray | None = None) -> tuple[np.ndarray, bool]:
        """pi*(obs) as an action vector, plus whether that state is a tie."""
        solution = self.solve(goal)
        idx = self.state_index(obs)
        return self.atoms[solution.greedy[idx]].copy(), bool(solution.ties[idx])

    def optimal_actions(
        self,
        obs: np.ndarray,
        goals: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Batched optimal_action: (B, action_dim) actions and (B,) tie flags."""
        actions = np.zeros((len(obs), self.atoms.shape[1]))
        ties = np.zeros(len(obs), dtype=bool)
        for i, row in enumerate(obs):
            actions[i], ties[i] = self.optimal_action(row, None if goals is None else goals[i])
        return actions, ties

    def v_star(self, obs: np.ndarray, goal: np.ndarray | None = None) -> float:
        return float(self.solve(goal).values[self.state_index(obs)])

    def q_star(self, obs: np.ndarray, goal: np.ndarray | None = None) -> np.ndarray:
        """Q*(obs, atom) for every atom."""
        return self.solve(goal).q[self.state_index(obs)].copy()

    def discretize_policy(
        self,
        act_fn: Callable[[np.ndarray, np.ndarray | None], np.ndarray],
        goal: np.ndarray | None = None,
    ) -> np.ndarray:
        """Deterministic (S,) atom table of a continuous policy queried at state centers."""
        table = np.zeros(self.n_states, dtype=np.int64)
        for s in range(self.n_states):
            table[s] = self.atom_index(act_fn(self.state_center(s), goal))
        return table

    def behavior_q(self, policy: np.ndarray, goal: np.ndarray | None = None) -> np.ndarray:
        """Q^beta(s, a) of a discrete behavior policy ((S,) or (S, A))."""
        q, _ = policy_evaluation(self.mdp(goal), policy)
        return q

    def random_state(self, seed: SeedLike) -> np.ndarray:
        rng = as_generator(seed)
        return self.state_center(int(rng.integers(self.n_states)))


def solve_oracle(spec: EnvSpec, resolution: int = 4, gamma: float = 0.99) -> OracleModel:
    """
    Discretize an environment and solve it.

    Single-task environments are solved eagerly; gc-pointmaze solutions
    are computed on first use per goal cell.

    Raises:
        OrlabError: ENV_ORACLE_RESOLUTION for a non-positive or fractional
            resolution, or one that exceeds MAX_ORACLE_STATES.
    """
    oracle = OracleModel(spec, resolution, gamma)
    if not spec.goal_conditioned:
        solution = oracle.solve()
        logger.info(
            "solved %s oracle: %d states, %d sweeps",
            spec.env_id.value, oracle.n_states, len(solution.residuals),
        )
    return oracle
