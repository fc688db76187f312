"""
Tests for value learning: losses on tabular critics with hand-computed
targets, tabular fixed points checked against exact dynamic programming,
the network learners and FrozenValue persistence.
"""

from pathlib import Path

import numpy as np
import pytest

from orlab.data.dataset import Dataset
from orlab.data.sampling import Batch
from orlab.envs.oracle import (
    TabularMdp,
    discounted_occupancy,
    sample_transitions,
    solve_oracle,
    value_iteration,
)
from orlab.envs.spec import EnvSpec
from orlab.grad import ParamSet, Tensor, backward
from orlab.value import (
    FrozenValue,
    QNetwork,
    TabularCrl,
    TabularQ,
    TabularV,
    ValueConfig,
    ValueLearner,
    ValueObjective,
    crl_loss,
    expectile_loss,
    iql_q_loss,
    iql_value_loss,
    q_of,
    sarsa_loss,
    sarsa_targets,
    train_value,
)
from orlab.types import ErrorCode, OrlabError

EYE3 = np.eye(3)
EYE2 = np.eye(2)


def corridor_batch() -> Batch:
    """Two corridor rows: s0 --fwd--> s1 (then stay), and s1 --fwd--> s2 (terminal)."""
    return Batch(
        obs=EYE3[[0, 1]],
        actions=EYE2[[1, 1]],
        rewards=np.array([-1.0, 0.0]),
        next_obs=EYE3[[1, 2]],
        next_actions=EYE2[[0, 0]],
        terminals=np.array([False, True]),
        rows=np.arange(2),
    )


def table(values: list[list[float]]) -> ParamSet:
    return ParamSet([("table", np.array(values, dtype=np.float64))])


# =============================================================================
# LOSSES
# =============================================================================


class TestExpectileLoss:
    """Tests for the asymmetric squared loss."""

    def test_positive_residual_weighted_by_tau(self) -> None:
        assert expectile_loss(np.array([1.0]), 0.7).item() == pytest.approx(0.7)

    def test_negative_residual_weighted_by_one_minus_tau(self) -> None:
        assert expectile_loss(np.array([-1.0]), 0.7).item() == pytest.approx(0.3)

    def test_mean_reduction(self) -> None:
        assert expectile_loss(np.array([2.0, -2.0]), 0.9).item() == pytest.approx(2.0)

    @pytest.mark.parametrize("tau", [0.0, 1.0, 1.5])
    def test_tau_range(self, tau: float) -> None:
        with pytest.raises(ValueError):
            expectile_loss(np.array([1.0]), tau)


class TestSarsaLoss:
    """Tests for the behavioral Bellman regression on a tabular critic."""

    def test_targets_use_dataset_next_actions(self) -> None:
        critic = TabularQ(3, 2)
        targets = sarsa_targets(critic, table([[1, 2], [3, 4], [5, 6]]), corridor_batch(), 0.9)
        np.testing.assert_allclose(targets, [-1.0 + 0.9 * 3.0, 0.0])

    def test_zero_at_fixed_point(self) -> None:
        critic = TabularQ(3, 2)
        params = table([[1.0, 1.7], [3.0, 0.0], [5.0, 6.0]])
        assert sarsa_loss(critic, params, params, corridor_batch(), 0.9).item() == pytest.approx(0.0)

    def test_gradient_only_touches_visited_entries(self) -> None:
        """From zeros: loss 0.5, d/dQ[0, fwd] = 2 * (0 - (-1)) / 2."""
        critic = TabularQ(3, 2)
        params = table([[0.0, 0.0]] * 3)
        loss = sarsa_loss(critic, params, params.copy(), corridor_batch(), 0.9)
        grads = backward(loss, params)["table"].data
        assert loss.item() == pytest.approx(0.5)
        np.testing.assert_allclose(grads, [[0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])

    def test_double_q_targets_bootstrap_from_smaller_head(self) -> None:
        critic = QNetwork(3, 2, hidden_dims=(8,), double_q=True)
        params = critic.init(5)
        batch = corridor_batch()
        q1, q2 = (h.data for h in critic.heads(params, batch.next_obs, batch.next_actions))
        expected = batch.rewards + 0.9 * batch.not_done * np.minimum(q1, q2)
        np.testing.assert_allclose(sarsa_targets(critic, params, batch, 0.9), expected)

    def test_iql_q_targets_bootstrap_from_v(self) -> None:
        """Q regresses toward r + gamma V(s'); with Q at that target the loss is 0."""
        critic, v = TabularQ(3, 2), TabularV(3)
        v_params = table([[0.0], [2.0], [0.0]])
        params = table([[0.0, -1.0 + 0.9 * 2.0], [0.0, 0.0], [0.0, 0.0]])
        assert iql_q_loss(critic, params, v, v_params, corridor_batch(), 0.9).item() == pytest.approx(0.0)


class TestCrlLoss:
    """Tests for the binary contrastive objective."""

    def test_zero_scores_give_two_log_two(self) -> None:
        critic = TabularCrl(3, 2)
        params = critic.init(0)
        loss = crl_loss(critic, params, EYE3[[0]], EYE2[[1]], EYE3[[1]], EYE3[[2]])
        assert loss.item() == pytest.approx(2.0 * np.log(2.0))

    def test_gradient_raises_positive_lowers_negative(self) -> None:
        critic = TabularCrl(3, 2)
        params = critic.init(0)
        loss = crl_loss(critic, params, EYE3[[0]], EYE2[[1]], EYE3[[1]], EYE3[[2]])
        grads = backward(loss, params)["table"].data.reshape(3, 2, 3)
        assert grads[0, 1, 1] < 0.0
        assert grads[0, 1, 2] > 0.0

    def test_missing_goal(self) -> None:
        critic = TabularCrl(3, 2)
        with pytest.raises(OrlabError) as info:
            critic.apply(critic.init(0), EYE3[[0]], EYE2[[0]])
        assert info.value.code is ErrorCode.VALUE_MISSING_GOAL


# =============================================================================
# TABULAR CONVERGENCE
# =============================================================================


def sgd_step(params: ParamSet, loss: Tensor, lr: float) -> ParamSet:
    """One plain full-batch gradient step."""
    grads = backward(loss, params)
    return params.replace({name: params[name].data - lr * grads[name].data for name in params})


def enumerated_batch(mdp: TabularMdp, behavior: np.ndarray) -> Batch:
    """
    One row per (s, a) with expected successors.

    next_obs holds p(s' | s, a) and next_actions a state-independent
    behavior distribution, so a tabular critic reads E[Q(s', a')] exactly.
    """
    s, a = mdp.n_states, mdp.n_actions
    states, actions = np.divmod(np.arange(s * a), a)
    successors = np.zeros((s * a, s))
    rows = np.repeat(np.arange(s * a), mdp.next_index.shape[2])
    np.add.at(successors, (rows, mdp.next_index.reshape(-1)), mdp.next_prob.reshape(-1))
    return Batch(
        obs=np.eye(s)[states],
        actions=np.eye(a)[actions],
        rewards=mdp.reward.reshape(-1),
        next_obs=successors,
        next_actions=np.tile(behavior, (s * a, 1)),
        terminals=mdp.terminal.reshape(-1),
        rows=np.arange(s * a),
    )


def goal_chain(n_states: int, gamma: float) -> TabularMdp:
    """Left/right chain; stepping onto the last state ends the episode with reward 0, else -1."""
    nxt = np.array([[max(s - 1, 0), min(s + 1, n_states - 1)] for s in range(n_states)])
    reached = nxt == n_states - 1
    return TabularMdp.deterministic(nxt, np.where(reached, 0.0, -1.0), reached, gamma)


class TestTabularConvergence:
    """Tabular critics driven to the fixed points of their objectives."""

    def test_iql_median_expectile_is_state_mean(self) -> None:
        mdp = goal_chain(5, 0.9)
        data = sample_transitions(mdp, np.full((5, 2), 0.5), 300, 10, seed=0)
        batch = Batch(
            obs=np.eye(5)[data["s"]],
            actions=np.eye(2)[data["a"]],
            rewards=data["r"],
            next_obs=np.eye(5)[data["s_next"]],
            next_actions=np.eye(2)[data["a_next"]],
            terminals=data["terminal"],
            rows=np.arange(len(data["s"])),
        )
        q_bar = np.random.default_rng(1).normal(size=(5, 2))
        critic, v = TabularQ(5, 2), TabularV(5)
        counts = np.bincount(data["s"], minlength=5)
        lr = len(batch) / counts.max()
        q_bar_params = table(q_bar.tolist())
        v_params = v.init(0)
        for _ in range(400):
            v_params = sgd_step(v_params, iql_value_loss(v, v_params, critic, q_bar_params, batch, 0.5), lr)
        learned = v_params["table"].data.reshape(-1)
        row_q = q_bar[data["s"], data["a"]]
        for s in np.flatnonzero(counts):
            assert learned[s] == pytest.approx(row_q[data["s"] == s].mean(), abs=1e-3)

    def test_iql_high_expectile_tracks_optimal_q(self) -> None:
        mdp = goal_chain(5, 0.9)
        batch = enumerated_batch(mdp, np.array([0.5, 0.5]))
        critic, v = TabularQ(5, 2), TabularV(5)
        q_params, v_params = critic.init(0), v.init(0)
        n = len(batch)
        for _ in range(400):
            for _ in range(10):
                v_loss = iql_value_loss(v, v_params, critic, q_params, batch, 0.99)
                v_params = sgd_step(v_params, v_loss, n / 4)
            q_params = sgd_step(q_params, iql_q_loss(critic, q_params, v, v_params, batch, 0.9), n / 2)
        q_star = value_iteration(mdp).q
        corr = np.corrcoef(critic.table(q_params).ravel(), q_star.ravel())[0, 1]
        assert corr > 0.95

    def test_sarsa_recovers_behavior_q_on_chainrun(self, chain_env: EnvSpec) -> None:
        oracle = solve_oracle(chain_env, resolution=1, gamma=0.9)
        mdp = oracle.mdp()
        behavior = np.array([0.1, 0.2, 0.4, 0.2, 0.1])
        batch = enumerated_batch(mdp, behavior)
        critic = TabularQ(mdp.n_states, mdp.n_actions)
        params = critic.init(0)
        for _ in range(300):
            params = sgd_step(params, sarsa_loss(critic, params, params.copy(), batch, 0.9), len(batch) / 2)
        expected = oracle.behavior_q(np.tile(behavior, (mdp.n_states, 1)))
        assert np.max(np.abs(critic.table(params) - expected)) < 0.05

    def test_crl_recovers_occupancy_log_ratio(self) -> None:
        nxt = np.array([[max(s - 1, 0), min(s + 1, 3)] for s in range(4)])
        mdp = TabularMdp.deterministic(nxt, np.zeros((4, 2)), np.zeros((4, 2), dtype=bool), 0.9)
        occupancy = discounted_occupancy(mdp, np.full((4, 2), 0.5))
        marginal = occupancy.mean(axis=(0, 1))
        s, a, g = np.unravel_index(np.arange(32), (4, 2, 4))
        # uniform (s, a) weight 1/8 times the row count 32
        pos_w = 4.0 * occupancy[s, a, g]
        neg_w = 4.0 * marginal[g]
        obs, actions, goals = np.eye(4)[s], np.eye(2)[a], np.eye(4)[g]
        critic = TabularCrl(4, 2)
        params = critic.init(0)
        lr = 4.0 * 32.0 / float(np.max(pos_w + neg_w))
        for _ in range(2000):
            params = sgd_step(params, crl_loss(critic, params, obs, actions, goals, goals, pos_w, neg_w), lr)
        expected = np.log(occupancy / marginal[None, None, :])
        np.testing.assert_allclose(critic.table(params), expected, atol=0.1)


# =============================================================================
# CONFIG AND CRITICS
# =============================================================================


class TestValueConfig:
    """Tests for ValueConfig parsing and validation."""

    def test_from_dict_parses_nested_fields(self) -> None:
        config = ValueConfig.from_dict({
            "objective": "sarsa",
            "hidden_dims": [32, 32],
            "goal_mix": {"current": 0.0, "future": 1.0, "random": 0.0},
        })
        assert config.objective is ValueObjective.SARSA
        assert config.hidden_dims == (32, 32)
        assert config.goal_mix.future == 1.0

    def test_to_dict_roundtrip(self, tiny_value_config: ValueConfig) -> None:
        assert ValueConfig.from_dict(tiny_value_config.to_dict()) == tiny_value_config

    @pytest.mark.parametrize("field,value", [("gamma", 1.0), ("expectile", 0.0), ("batch_size", 0), ("log_every", 0)])
    def test_invalid_values(self, field: str, value: float) -> None:
        with pytest.raises(ValueError):
            ValueConfig(**{field: value})

    def test_iql_learner_needs_v(self) -> None:
        with pytest.raises(OrlabError) as info:
            ValueLearner(ValueConfig(), QNetwork(2, 2, hidden_dims=(4,)), None)
        assert info.value.code is ErrorCode.VALUE_UNSUPPORTED


class TestCritics:
    """Tests for network critics."""

    def test_double_q_takes_minimum(self) -> None:
        critic = QNetwork(2, 2, hidden_dims=(8,), double_q=True)
        params = critic.init(0)
        obs, actions = np.zeros((4, 2)), np.ones((4, 2))
        q1, q2 = (h.data for h in critic.heads(params, obs, actions))
        np.testing.assert_allclose(critic.apply(params, obs, actions).data, np.minimum(q1, q2))

    def test_goal_conditioned_needs_goal(self) -> None:
        critic = QNetwork(2, 2, goal_dim=2, hidden_dims=(8,))
        with pytest.raises(OrlabError) as info:
            critic.apply(critic.init(0), np.zeros((1, 2)), np.zeros((1, 2)))
        assert info.value.code is ErrorCode.VALUE_MISSING_GOAL


# =============================================================================
# TRAINING AND FROZEN VALUES
# =============================================================================


class TestTrainValue:
    """Tests for train_value and FrozenValue."""

    def test_iql_history_and_metadata(self, umaze_dataset: Dataset, tiny_value_config: ValueConfig) -> None:
        frozen = train_value(umaze_dataset.view(), tiny_value_config, seed=0)
        assert [row["step"] for row in frozen.metadata["history"]] == [2.0, 4.0, 5.0]
        assert all("v_loss" in row for row in frozen.metadata["history"])
        assert frozen.metadata["steps"] == 5
        assert frozen.has_v and frozen.goal_conditioned
        assert frozen.params.is_finite()

    def test_training_is_deterministic(self, umaze_dataset: Dataset, tiny_value_config: ValueConfig) -> None:
        view = umaze_dataset.view()
        assert train_value(view, tiny_value_config, 3).digest == train_value(view, tiny_value_config, 3).digest
        assert train_value(view, tiny_value_config, 3).digest != train_value(view, tiny_value_config, 4).digest

    def test_sarsa_has_no_state_value(self, chain_dataset: Dataset, tiny_value_config: ValueConfig) -> None:
        config = ValueConfig.from_dict({**tiny_value_config.to_dict(), "objective": "sarsa"})
        frozen = train_value(chain_dataset.view(), config, seed=0)
        assert frozen.has_v is False
        assert frozen.v(np.zeros((1, 2))) is None
        assert frozen.goal_conditioned is False

    def test_crl_needs_goal_reaching_task(self, chain_dataset: Dataset, tiny_value_config: ValueConfig) -> None:
        config = ValueConfig.from_dict({**tiny_value_config.to_dict(), "objective": "crl"})
        with pytest.raises(OrlabError) as info:
            train_value(chain_dataset.view(), config, seed=0)
        assert info.value.code is ErrorCode.VALUE_UNSUPPORTED

    def test_crl_on_maze(self, umaze_dataset: Dataset, tiny_value_config: ValueConfig) -> None:
        config = ValueConfig.from_dict({**tiny_value_config.to_dict(), "objective": "crl"})
        frozen = train_value(umaze_dataset.view(), config, seed=0)
        assert frozen.objective is ValueObjective.CRL
        assert q_of(frozen, np.zeros((3, 2)), np.zeros((3, 2)), np.ones((3, 2))).shape == (3,)

    def test_q_of_single_state_is_float(self, umaze_dataset: Dataset, tiny_value_config: ValueConfig) -> None:
        frozen = train_value(umaze_dataset.view(), tiny_value_config, seed=0)
        value = q_of(frozen, np.array([1.5, 1.5]), np.array([1.0, 0.0]), np.array([1.5, 3.5]))
        assert isinstance(value, float)

    def test_q_of_requires_goal(self, umaze_dataset: Dataset, tiny_value_config: ValueConfig) -> None:
        frozen = train_value(umaze_dataset.view(), tiny_value_config, seed=0)
        with pytest.raises(OrlabError) as info:
            q_of(frozen, np.array([1.5, 1.5]), np.array([1.0, 0.0]))
        assert info.value.code is ErrorCode.VALUE_MISSING_GOAL

    def test_save_load_roundtrip(
        self, umaze_dataset: Dataset, tiny_value_config: ValueConfig, temp_dir: Path
    ) -> None:
        frozen = train_value(umaze_dataset.view(), tiny_value_config, seed=0)
        path = frozen.save(temp_dir / "value.orlp")
        loaded = FrozenValue.load(path)
        assert loaded.digest == frozen.digest
        assert loaded.config == tiny_value_config
        obs, actions, goals = np.ones((5, 2)), np.zeros((5, 2)), np.full((5, 2), 2.0)
        np.testing.assert_array_equal(loaded.q(obs, actions, goals), frozen.q(obs, actions, goals))
        np.testing.assert_array_equal(loaded.v(obs, goals), frozen.v(obs, goals))

    def test_load_without_sidecar(
        self, umaze_dataset: Dataset, tiny_value_config: ValueConfig, temp_dir: Path
    ) -> None:
        path = train_value(umaze_dataset.view(), tiny_value_config, seed=0).save(temp_dir / "value.orlp")
        path.with_suffix(".json").unlink()
        with pytest.raises(OrlabError) as info:
            FrozenValue.load(path)
        assert info.value.code is ErrorCode.PERSIST_FILE_NOT_FOUND
