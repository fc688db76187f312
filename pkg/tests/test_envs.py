"""
Tests for the toy environments: layouts, dynamics, scripted experts and the
dynamic-programming oracles.

Tabular solvers are checked on a three-state corridor whose values can be
written down by hand:

    state 0 --fwd--> state 1 --fwd--> state 2 (goal)

"stay" keeps the state. Every step costs -1 except the one that lands on
the goal, which pays 0 and ends the episode.
"""

import numpy as np
import pytest

from orlab.envs.dynamics import START_JITTER, reset, step
from orlab.envs.expert import cell_distance, expert_action, shortest_path_direction
from orlab.envs.oracle import (
    OracleModel,
    TabularMdp,
    compass_atoms,
    discounted_occupancy,
    policy_evaluation,
    sample_transitions,
    solve_oracle,
    value_iteration,
)
from orlab.envs.spec import UMAZE, EnvSpec, EnvState, get_layout, make_env, parse_layout
from orlab.types import ErrorCode, OrlabError

GOAL_XY = np.array([1.5, 3.5])


def corridor(gamma: float = 0.9) -> TabularMdp:
    # columns: stay, fwd
    next_state = np.array([[0, 1], [1, 2], [2, 2]])
    terminal = next_state == 2
    reward = np.where(terminal, 0.0, -1.0)
    return TabularMdp.deterministic(next_state, reward, terminal, gamma)


# =============================================================================
# LAYOUTS
# =============================================================================


class TestMazeLayout:
    """Tests for MazeLayout validation and geometry."""

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "###\n##\n",
            "###\n#X#\n###\n",
            ".##\n#.#\n###\n",
            "###\n###\n",
            "#####\n#.#.#\n#####\n",
        ],
        ids=["empty", "ragged", "bad-char", "open-border", "no-free", "disconnected"],
    )
    def test_invalid_layouts(self, text: str) -> None:
        with pytest.raises(OrlabError) as info:
            parse_layout(text)
        assert info.value.code is ErrorCode.ENV_INVALID_LAYOUT

    def test_umaze_regions(self) -> None:
        assert len(UMAZE.free_cells) == 7
        assert UMAZE.region("start") == [(1, 1)]
        assert UMAZE.region("goal") == [(3, 1)]
        assert len(UMAZE.region("all")) == 7

    def test_left_right_partition_free_cells(self) -> None:
        layout = get_layout("large")
        left, right = layout.region("left"), layout.region("right")
        assert set(left) | set(right) == set(layout.free_cells)
        assert not set(left) & set(right)

    def test_unknown_region(self) -> None:
        with pytest.raises(OrlabError):
            UMAZE.region("middle")

    def test_cell_geometry(self) -> None:
        """Cell (r, c) covers x in [c, c+1) and y in [r, r+1)."""
        assert UMAZE.cell_of(np.array([1.9, 3.1])) == (3, 1)
        np.testing.assert_array_equal(UMAZE.center((3, 1)), GOAL_XY)

    def test_bfs_distance_around_the_bend(self) -> None:
        assert UMAZE.distances_from((1, 1))[(3, 1)] == 6

    def test_outside_grid_is_wall(self) -> None:
        assert UMAZE.is_wall(-1, 2)
        assert UMAZE.is_wall(1, 99)

    def test_text_roundtrip(self) -> None:
        assert parse_layout(UMAZE.to_text(), name="umaze") == UMAZE


# =============================================================================
# ENV SPEC
# =============================================================================


class TestEnvSpec:
    """Tests for make_env and EnvSpec."""

    def test_chainrun_defaults(self, chain_env: EnvSpec) -> None:
        assert chain_env.action_dim == 1
        assert chain_env.max_episode_steps == 200
        assert chain_env.goal_dim == 0
        assert not chain_env.is_maze

    def test_maze_defaults(self, umaze_env: EnvSpec) -> None:
        assert umaze_env.action_dim == 2
        assert umaze_env.max_episode_steps == 400
        assert umaze_env.goal_conditioned
        assert umaze_env.goal_dim == 2

    def test_single_task_maze_has_fixed_goal(self) -> None:
        env = make_env("pointmaze", "umaze")
        np.testing.assert_array_equal(env.fixed_goal(), GOAL_XY)
        assert env.goal_dim == 0

    def test_dict_roundtrip(self, umaze_env: EnvSpec) -> None:
        assert EnvSpec.from_dict(umaze_env.to_dict()) == umaze_env

    def test_with_start_region(self, umaze_env: EnvSpec) -> None:
        assert umaze_env.with_start_region("all").start_region == "all"

    def test_unknown_env(self) -> None:
        with pytest.raises(ValueError):
            make_env("cartpole")


# =============================================================================
# DYNAMICS
# =============================================================================


class TestDynamics:
    """Tests for reset() and step()."""

    def test_chainrun_reset(self, chain_env: EnvSpec) -> None:
        state = reset(chain_env, seed=0)
        assert 0.0 <= state.obs[0] < 1.0
        assert state.obs[1] == 0.0
        assert state.goal is None

    def test_maze_reset_is_jittered_start_cell(self, umaze_env: EnvSpec) -> None:
        for seed in range(10):
            state = reset(umaze_env, seed)
            assert np.all(np.abs(state.obs - np.array([1.5, 1.5])) <= START_JITTER)
            assert UMAZE.cell_of(state.goal) in UMAZE.free_cells

    def test_reset_is_seeded(self, umaze_env: EnvSpec) -> None:
        a, b = reset(umaze_env, 4), reset(umaze_env, 4)
        np.testing.assert_array_equal(a.obs, b.obs)
        np.testing.assert_array_equal(a.goal, b.goal)

    def test_chainrun_step(self, chain_env: EnvSpec) -> None:
        """v' = 0.8 v + 0.2 a and the reward is v'."""
        nxt, reward, done = step(chain_env, EnvState(obs=np.array([1.0, 0.0])), np.array([1.0]))
        assert reward == pytest.approx(0.2)
        np.testing.assert_allclose(nxt.obs, [1.02, 0.2])
        assert not done

    def test_actions_are_clipped(self, chain_env: EnvSpec) -> None:
        _, reward, _ = step(chain_env, EnvState(obs=np.array([1.0, 0.0])), np.array([5.0]))
        assert reward == pytest.approx(0.2)

    def test_chainrun_timeout(self) -> None:
        env = make_env("chainrun", max_episode_steps=1)
        _, _, done = step(env, EnvState(obs=np.zeros(2)), np.array([0.0]))
        assert done

    def test_wall_blocks_axis_move(self, umaze_env: EnvSpec) -> None:
        state = EnvState(obs=np.array([1.5, 1.05]), goal=GOAL_XY)
        nxt, reward, done = step(umaze_env, state, np.array([1.0, -1.0]))
        np.testing.assert_allclose(nxt.obs, [1.6, 1.05])
        assert reward == -1.0
        assert not done

    def test_reaching_goal_ends_episode(self, umaze_env: EnvSpec) -> None:
        state = EnvState(obs=np.array([1.5, 3.2]), goal=GOAL_XY)
        nxt, reward, done = step(umaze_env, state, np.array([0.0, 1.0]))
        assert reward == 0.0
        assert done and nxt.reached

    def test_action_shape_checked(self, umaze_env: EnvSpec) -> None:
        with pytest.raises(OrlabError) as info:
            step(umaze_env, reset(umaze_env, 0), np.zeros(3))
        assert info.value.code is ErrorCode.EVAL_DIMENSION_MISMATCH

    def test_non_finite_action(self, umaze_env: EnvSpec) -> None:
        with pytest.raises(OrlabError) as info:
            step(umaze_env, reset(umaze_env, 0), np.array([np.nan, 0.0]))
        assert info.value.code is ErrorCode.ENV_NON_FINITE_ACTION


# =============================================================================
# EXPERTS
# =============================================================================


class TestExpert:
    """Tests for the scripted experts."""

    def test_chainrun_expert_is_full_throttle(self, chain_env: EnvSpec) -> None:
        action = expert_action(chain_env, np.zeros(2), None, 0.0, seed=0)
        np.testing.assert_array_equal(action, [1.0])

    def test_maze_expert_heads_for_next_cell(self) -> None:
        direction = shortest_path_direction(UMAZE, np.array([1.5, 1.5]), GOAL_XY)
        np.testing.assert_allclose(direction, [1.0, 0.0])

    def test_maze_expert_inside_goal_cell_aims_at_goal(self) -> None:
        direction = shortest_path_direction(UMAZE, np.array([1.9, 3.5]), GOAL_XY)
        np.testing.assert_allclose(direction, [-1.0, 0.0])

    def test_noisy_actions_stay_in_bounds(self, umaze_env: EnvSpec) -> None:
        rng = np.random.default_rng(0)
        for _ in range(50):
            action = expert_action(umaze_env, np.array([1.5, 1.5]), GOAL_XY, 1.0, rng)
            assert np.all(np.abs(action) <= 1.0)

    def test_negative_sigma_rejected(self, umaze_env: EnvSpec) -> None:
        with pytest.raises(ValueError):
            expert_action(umaze_env, np.array([1.5, 1.5]), GOAL_XY, -0.1, seed=0)

    def test_goal_in_wall_is_unreachable(self) -> None:
        with pytest.raises(OrlabError) as info:
            cell_distance(UMAZE, np.array([1.5, 1.5]), np.array([0.5, 0.5]))
        assert info.value.code is ErrorCode.ENV_UNREACHABLE_GOAL


# =============================================================================
# TABULAR SOLVERS
# =============================================================================


class TestTabularMdp:
    """Exact solvers on the three-state corridor."""

    def test_value_iteration(self) -> None:
        solution = value_iteration(corridor())
        np.testing.assert_allclose(solution.values, [-1.0, 0.0, 0.0], atol=1e-8)
        np.testing.assert_allclose(solution.q[0], [-1.9, -1.0], atol=1e-8)
        assert list(solution.greedy[:2]) == [1, 1]
        assert list(solution.ties) == [False, False, True]
        assert solution.residuals[-1] < 1e-8

    @pytest.mark.parametrize("method", ["direct", "iterative"])
    def test_policy_evaluation_of_staying(self, method: str) -> None:
        """Staying forever costs -1 / (1 - gamma) outside the goal."""
        q, v = policy_evaluation(corridor(), np.zeros(3, dtype=int), method=method)
        np.testing.assert_allclose(v, [-10.0, -10.0, 0.0], atol=1e-6)
        assert q.shape == (3, 2)

    def test_policy_evaluation_accepts_probabilities(self) -> None:
        table = np.tile([0.0, 1.0], (3, 1))
        _, v = policy_evaluation(corridor(), table)
        np.testing.assert_allclose(v, [-1.0, 0.0, 0.0], atol=1e-9)

    def test_unknown_evaluation_method(self) -> None:
        with pytest.raises(ValueError):
            policy_evaluation(corridor(), np.zeros(3, dtype=int), method="magic")

    def test_discounted_occupancy(self) -> None:
        occupancy = discounted_occupancy(corridor(), np.ones(3, dtype=int))
        np.testing.assert_allclose(occupancy.sum(axis=-1), np.ones((3, 2)))
        np.testing.assert_allclose(occupancy[0, 1], [0.0, 0.1, 0.9], atol=1e-12)

    def test_rows_must_sum_to_one(self) -> None:
        with pytest.raises(ValueError):
            TabularMdp(
                next_index=np.zeros((1, 1, 2), dtype=int),
                next_prob=np.full((1, 1, 2), 0.4),
                reward=np.zeros((1, 1)),
                terminal=np.zeros((1, 1), dtype=bool),
                gamma=0.9,
            )

    def test_gamma_range(self) -> None:
        with pytest.raises(ValueError):
            corridor(gamma=1.0)

    def test_sample_transitions(self) -> None:
        out = sample_transitions(corridor(), np.ones(3, dtype=int), 20, 10, seed=0)
        assert len(out["s"]) >= 20
        last = out["terminal"]
        np.testing.assert_array_equal(out["a_next"][last], out["a"][last])
        np.testing.assert_array_equal(out["s_next"][out["a"] == 1], np.minimum(out["s"][out["a"] == 1] + 1, 2))


# =============================================================================
# ENVIRONMENT ORACLES
# =============================================================================


class TestOracleModel:
    """Tests for OracleModel on the U-maze and chainrun."""

    def test_compass_atoms(self) -> None:
        atoms = compass_atoms()
        assert atoms.shape == (9, 2)
        np.testing.assert_array_equal(atoms[0], [0.0, 0.0])
        np.testing.assert_allclose(np.linalg.norm(atoms[1:], axis=1), 1.0)

    @pytest.mark.parametrize("resolution", [0, 1.5])
    def test_bad_resolution(self, umaze_env: EnvSpec, resolution: float) -> None:
        with pytest.raises(OrlabError) as info:
            OracleModel(umaze_env, resolution, 0.99)  # type: ignore[arg-type]
        assert info.value.code is ErrorCode.ENV_ORACLE_RESOLUTION

    def test_maze_oracle_moves_toward_corridor(self, umaze_env: EnvSpec) -> None:
        oracle = solve_oracle(umaze_env, resolution=2, gamma=0.99)
        assert oracle.n_states == 28
        action, _ = oracle.optimal_action(np.array([1.25, 1.25]), GOAL_XY)
        assert action[0] > 0.0
        assert oracle.v_star(np.array([1.75, 3.25]), GOAL_XY) > oracle.v_star(np.array([1.25, 1.25]), GOAL_XY)

    def test_gc_oracle_needs_goal(self, umaze_env: EnvSpec) -> None:
        oracle = OracleModel(umaze_env, 1, 0.99)
        with pytest.raises(OrlabError) as info:
            oracle.solve(None)
        assert info.value.code is ErrorCode.VALUE_MISSING_GOAL

    def test_chainrun_oracle_is_full_throttle(self, chain_env: EnvSpec) -> None:
        oracle = solve_oracle(chain_env, resolution=1, gamma=0.9)
        for v in (-0.5, 0.0, 0.5):
            action, _ = oracle.optimal_action(np.array([3.0, v]))
            np.testing.assert_array_equal(action, [1.0])

    def test_behavior_q_of_discretized_expert(self, chain_env: EnvSpec) -> None:
        oracle = solve_oracle(chain_env, resolution=1, gamma=0.9)
        table = oracle.discretize_policy(lambda obs, goal: np.array([1.0]))
        q = oracle.behavior_q(table)
        np.testing.assert_allclose(q, oracle.solve().q, atol=1e-6)
