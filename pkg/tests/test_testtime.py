"""
Tests for test-time policy improvement (OPEX, TTT) and
evaluate_with_method.
"""

import dataclasses
import json
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from orlab.data.dataset import Dataset
from orlab.envs.spec import EnvSpec, EnvState, make_env
from orlab.grad import ParamSet, Tensor, as_tensor
from orlab.policy import ExtractionConfig, ExtractionMethod, PolicyArtifact, extract
from orlab.testtime import (
    EvalMethod,
    OpexConfig,
    StateBuffer,
    TttAdapter,
    TttConfig,
    action_gradient,
    evaluate_with_method,
    opex_adjust,
)
from orlab.types import ErrorCode, OrlabError
from orlab.value import FrozenValue, ValueConfig, ValueObjective, train_value
from orlab.value.critics import ActionValueCritic


class QuadraticCritic(ActionValueCritic):
    """Q(s, a) = -|a - center|^2, independent of s."""

    kind = "quadratic"

    def __init__(self, center: tuple[float, float] = (0.0, 0.0)) -> None:
        self.state_dim, self.action_dim, self.goal_dim = 2, 2, 0
        self.center = np.array(center)

    def init(self, seed: Any) -> ParamSet:
        return ParamSet()

    def heads(self, params: ParamSet, obs: Any, actions: Any, goals: Any = None) -> list[Tensor]:
        return [-((as_tensor(actions) - self.center).square().sum(axis=-1))]

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind}


def quadratic_value(center: tuple[float, float] = (0.0, 0.0)) -> FrozenValue:
    return FrozenValue(objective=ValueObjective.SARSA, critic=QuadraticCritic(center), params=ParamSet())


@pytest.fixture(scope="module")
def eval_env() -> EnvSpec:
    return make_env("gc-pointmaze", "umaze", max_episode_steps=40)


@pytest.fixture(scope="module")
def umaze_artifact(umaze_dataset: Dataset) -> PolicyArtifact:
    view = umaze_dataset.view()
    value = train_value(view, ValueConfig(objective=ValueObjective.IQL, steps=3, batch_size=32, hidden_dims=(16, 16)), seed=0)
    config = ExtractionConfig(
        method=ExtractionMethod.DDPG_BC, steps=3, batch_size=32, hidden_dims=(16, 16), eval_every=3, eval_batch_size=32
    )
    return extract(config, value, view, seed=0)


# =============================================================================
# OPEX
# =============================================================================


class TestOpex:
    """Tests for the action-gradient adjustment."""

    def test_single_step_on_quadratic(self) -> None:
        adjusted = opex_adjust(quadratic_value(), np.zeros(2), np.array([0.4, 0.0]), 0.1)
        np.testing.assert_allclose(adjusted, [0.32, 0.0])

    def test_repeated_steps(self) -> None:
        adjusted = opex_adjust(quadratic_value(), np.zeros(2), np.array([0.4, 0.0]), 0.1, steps=2)
        np.testing.assert_allclose(adjusted, [0.256, 0.0])

    def test_beta_zero_is_identity(self) -> None:
        action = np.array([0.7, -0.2])
        adjusted = opex_adjust(quadratic_value(), np.zeros(2), action, 0.0)
        np.testing.assert_array_equal(adjusted, action)
        assert adjusted is not action

    def test_result_is_clipped(self) -> None:
        adjusted = opex_adjust(quadratic_value((5.0, 0.0)), np.zeros(2), np.array([0.9, 0.0]), 1.0)
        np.testing.assert_allclose(adjusted, [1.0, 0.0])

    def test_batch_shape_preserved(self) -> None:
        actions = np.array([[0.4, 0.0], [0.0, -0.5]])
        adjusted = opex_adjust(quadratic_value(), np.zeros((2, 2)), actions, 0.1)
        np.testing.assert_allclose(adjusted, [[0.32, 0.0], [0.0, -0.4]])

    def test_non_finite_gradient(self) -> None:
        with pytest.raises(OrlabError) as info:
            action_gradient(quadratic_value((np.nan, 0.0)), np.zeros(2), np.zeros(2))
        assert info.value.code is ErrorCode.EVAL_NON_FINITE_GRADIENT

    @pytest.mark.parametrize("kwargs", [{"beta": -0.1}, {"beta": np.inf}, {"steps": 0}])
    def test_invalid_config(self, kwargs: dict) -> None:
        with pytest.raises(ValueError):
            OpexConfig(**kwargs)


# =============================================================================
# TTT
# =============================================================================


class TestTtt:
    """Tests for the state buffer and the online adapter."""

    def test_ring_buffer_keeps_latest(self) -> None:
        buffer = StateBuffer(3, 2, 0)
        for i in range(5):
            buffer.add(np.array([float(i), 0.0]))
        assert buffer.size == 3
        assert sorted(buffer.states[:, 0]) == [2.0, 3.0, 4.0]

    def test_offline_params_untouched(self, umaze_artifact: PolicyArtifact, umaze_dataset: Dataset) -> None:
        before = umaze_artifact.digest
        adapter = TttAdapter(umaze_artifact, umaze_artifact.value, TttConfig(batch_size=16, lr=1e-2), umaze_dataset.view(), seed=0)
        adapter.observe(EnvState(obs=np.array([1.5, 1.5]), t=0, goal=np.array([1.5, 3.5])))
        for _ in range(3):
            adapter.update()
        assert umaze_artifact.digest == before
        assert adapter.off_params.digest() == before
        assert adapter.params.digest() != before

    def test_kl_only_at_offline_policy_does_not_move(
        self, umaze_artifact: PolicyArtifact, umaze_dataset: Dataset
    ) -> None:
        """Without the Q term the adapted copy sits at the KL minimum."""
        config = TttConfig(batch_size=16, q_weight=0.0)
        adapter = TttAdapter(umaze_artifact, umaze_artifact.value, config, umaze_dataset.view(), seed=0)
        adapter.update()
        assert adapter.params.digest() == umaze_artifact.digest

    def test_step_budget(self, umaze_artifact: PolicyArtifact, umaze_dataset: Dataset) -> None:
        adapter = TttAdapter(umaze_artifact, umaze_artifact.value, TttConfig(batch_size=8, max_steps=2), umaze_dataset.view(), seed=0)
        results = [adapter.update() for _ in range(3)]
        assert results[2] is None
        assert adapter.steps == 2 and adapter.exhausted

    def test_invalid_config(self) -> None:
        with pytest.raises(ValueError):
            TttConfig(data_fraction=1.5)


# =============================================================================
# EVALUATION
# =============================================================================


class TestEvaluate:
    """Tests for evaluate_with_method."""

    def test_reports_both_modes(self, eval_env: EnvSpec, umaze_artifact: PolicyArtifact) -> None:
        report = evaluate_with_method(eval_env, umaze_artifact, "vanilla", episodes=2, seed=0)
        assert set(report.modes) == {"deterministic", "stochastic"}
        assert report.score == max(m.score for m in report.modes.values())
        assert 0.0 <= report.score <= 1.0
        assert len(report.episodes) == 4

    def test_opex_beta_zero_matches_vanilla(self, eval_env: EnvSpec, umaze_artifact: PolicyArtifact) -> None:
        """Episodes share reset seeds, so a zero step reproduces vanilla exactly."""
        vanilla = evaluate_with_method(eval_env, umaze_artifact, "vanilla", episodes=2, seed=3, modes=("deterministic",))
        opex = evaluate_with_method(
            eval_env, umaze_artifact, EvalMethod.OPEX, episodes=2, seed=3,
            opex=OpexConfig(beta=0.0), modes=("deterministic",),
        )
        assert [e.ret for e in opex.episodes] == [e.ret for e in vanilla.episodes]
        assert all(e.mean_q_gain is None for e in opex.episodes)

    def test_opex_records_q_gain(self, eval_env: EnvSpec, umaze_artifact: PolicyArtifact) -> None:
        report = evaluate_with_method(
            eval_env, umaze_artifact, "opex", episodes=1, seed=0, opex=OpexConfig(beta=0.1), modes=("deterministic",)
        )
        assert report.episodes[0].mean_q_gain is not None

    def test_ttt_and_sfbc_run(self, eval_env: EnvSpec, umaze_artifact: PolicyArtifact, umaze_dataset: Dataset) -> None:
        ttt = evaluate_with_method(
            eval_env, umaze_artifact, "ttt", episodes=1, seed=0,
            ttt=TttConfig(batch_size=8, max_steps=5), view=umaze_dataset.view(), modes=("deterministic",),
        )
        sfbc = evaluate_with_method(eval_env, umaze_artifact, "sfbc", episodes=1, seed=0, sfbc_n=4, modes=("stochastic",))
        assert ttt.method is EvalMethod.TTT and sfbc.best_mode == "stochastic"

    def test_value_required(self, eval_env: EnvSpec, umaze_artifact: PolicyArtifact) -> None:
        bare = dataclasses.replace(umaze_artifact, value=None)
        with pytest.raises(OrlabError) as info:
            evaluate_with_method(eval_env, bare, "opex", episodes=1, seed=0)
        assert info.value.code is ErrorCode.POLICY_INVALID_CONFIG

    def test_dimension_mismatch(self, umaze_artifact: PolicyArtifact) -> None:
        with pytest.raises(OrlabError) as info:
            evaluate_with_method(make_env("chainrun"), umaze_artifact, "vanilla", episodes=1, seed=0)
        assert info.value.code is ErrorCode.EVAL_DIMENSION_MISMATCH

    def test_unknown_mode(self, eval_env: EnvSpec, umaze_artifact: PolicyArtifact) -> None:
        with pytest.raises(ValueError):
            evaluate_with_method(eval_env, umaze_artifact, "vanilla", episodes=1, seed=0, modes=("greedy",))

    def test_episode_log(self, eval_env: EnvSpec, umaze_artifact: PolicyArtifact, temp_dir: Path) -> None:
        path = temp_dir / "episodes.jsonl"
        evaluate_with_method(eval_env, umaze_artifact, "vanilla", episodes=2, seed=0, episode_log=path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == 4
        assert {row["mode"] for row in rows} == {"deterministic", "stochastic"}
