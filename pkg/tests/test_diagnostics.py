"""
Tests for policy diagnostics: oracle MSE on the three state sources,
effective sample size, the overfitting gap, action spread and the
diagnostics CSV.
"""

import csv
from pathlib import Path

import numpy as np
import pytest

from orlab.data.dataset import Dataset, subset
from orlab.diagnostics import (
    DIAGNOSTIC_COLUMNS,
    MseReport,
    action_spread,
    ess,
    mse_on_states,
    overfit_gap,
    policy_mse,
    policy_mse_estimate,
    write_diagnostics_csv,
)
from orlab.envs.oracle import OracleModel, solve_oracle
from orlab.envs.spec import make_env
from orlab.types import ErrorCode, OrlabError


@pytest.fixture(scope="module")
def umaze_oracle() -> OracleModel:
    return solve_oracle(make_env("gc-pointmaze", "umaze", max_episode_steps=40), resolution=2)


@pytest.fixture(scope="module")
def chain_oracle() -> OracleModel:
    return solve_oracle(make_env("chainrun"), resolution=2)


def standing_still(obs: np.ndarray, goals: np.ndarray | None) -> np.ndarray:
    return np.zeros((len(np.atleast_2d(obs)), 2))


# =============================================================================
# POLICY MSE
# =============================================================================


class TestPolicyMse:
    """Tests for policy_mse and its estimate."""

    def test_oracle_policy_has_zero_mse(self, umaze_oracle: OracleModel, umaze_dataset: Dataset) -> None:
        oracle_fn = lambda obs, goals: umaze_oracle.optimal_actions(obs, goals)[0]  # noqa: E731
        view = umaze_dataset.view()
        assert policy_mse(oracle_fn, umaze_oracle, "train", view) == 0.0
        assert policy_mse(oracle_fn, umaze_oracle, "val", view) == 0.0

    def test_oracle_rollouts_have_zero_mse(self, chain_oracle: OracleModel) -> None:
        oracle_fn = lambda obs, goals: chain_oracle.optimal_actions(obs, goals)[0]  # noqa: E731
        estimate = policy_mse_estimate(oracle_fn, chain_oracle, "rollout", episodes=1, seed=0)
        assert estimate.mse == 0.0
        assert estimate.n_states + estimate.n_ties == 200

    def test_standing_still_is_bounded_by_unit_atoms(self, umaze_oracle: OracleModel, umaze_dataset: Dataset) -> None:
        """Every optimal atom has norm 0 or 1, so the still policy scores in (0, 1]."""
        mse = policy_mse(standing_still, umaze_oracle, "train", umaze_dataset.view())
        assert 0.0 < mse <= 1.0

    def test_ties_are_counted_separately(self, umaze_oracle: OracleModel, umaze_dataset: Dataset) -> None:
        flat = umaze_dataset.view().flat("train")
        estimate = mse_on_states(standing_still, umaze_oracle, flat.obs, flat.goals)
        assert estimate.n_states + estimate.n_ties == len(flat)

    def test_missing_validation(self, umaze_oracle: OracleModel, umaze_dataset: Dataset) -> None:
        with pytest.raises(OrlabError) as info:
            policy_mse(standing_still, umaze_oracle, "val", subset(umaze_dataset, 1))
        assert info.value.code is ErrorCode.DIAG_MISSING_VALIDATION

    def test_too_few_rollout_states(self, umaze_oracle: OracleModel) -> None:
        """One 40-step episode cannot reach the 50-state minimum."""
        with pytest.raises(OrlabError) as info:
            policy_mse(standing_still, umaze_oracle, "rollout", episodes=1)
        assert info.value.code is ErrorCode.DIAG_TOO_FEW_STATES

    def test_empty_states(self, umaze_oracle: OracleModel) -> None:
        with pytest.raises(OrlabError) as info:
            mse_on_states(standing_still, umaze_oracle, np.zeros((0, 2)), np.zeros((0, 2)))
        assert info.value.code is ErrorCode.DIAG_EMPTY_BATCH

    def test_unknown_source(self, umaze_oracle: OracleModel) -> None:
        with pytest.raises(ValueError):
            policy_mse(standing_still, umaze_oracle, "test")

    def test_report_rejects_negative(self) -> None:
        with pytest.raises(ValueError):
            MseReport(train_mse=-1.0, val_mse=0.0, eval_mse=0.0)


# =============================================================================
# WEIGHTS AND CURVES
# =============================================================================


class TestEss:
    """Tests for the effective sample size."""

    def test_uniform_weights(self) -> None:
        assert ess(np.ones(256)) == 256.0

    def test_skewed_weights(self) -> None:
        assert ess([1.0, 3.0]) == pytest.approx(1.6)

    def test_single_dominant_weight(self) -> None:
        assert ess([1e6, 1e-6, 1e-6]) == pytest.approx(1.0)

    def test_empty(self) -> None:
        with pytest.raises(OrlabError) as info:
            ess([])
        assert info.value.code is ErrorCode.DIAG_EMPTY_BATCH

    def test_non_positive(self) -> None:
        with pytest.raises(ValueError):
            ess([1.0, 0.0])


class TestOverfitGap:
    """Tests for overfit_gap."""

    def test_gap_per_step(self) -> None:
        curves = [
            {"step": 0.0, "train_loss": 2.0, "val_loss": 2.5},
            {"step": 10.0, "train_loss": 1.0, "val_loss": 3.0},
        ]
        np.testing.assert_allclose(overfit_gap(curves), [[0.0, 0.5], [10.0, 2.0]])

    def test_missing_validation(self) -> None:
        with pytest.raises(OrlabError) as info:
            overfit_gap([{"step": 0.0, "train_loss": 1.0}])
        assert info.value.code is ErrorCode.DIAG_MISSING_VALIDATION

    def test_empty_curve(self) -> None:
        with pytest.raises(OrlabError):
            overfit_gap([])


# =============================================================================
# ACTION SPREAD
# =============================================================================


class TestActionSpread:
    """Tests for action_spread."""

    def test_constant_policy_has_zero_std(self) -> None:
        spread = action_spread(standing_still, np.random.default_rng(0).uniform(1, 4, (120, 2)))
        np.testing.assert_array_equal(spread.std, [0.0, 0.0])
        assert spread.outside_hull is None
        assert spread.n_states == 120

    def test_far_actions_are_outside_hull(self, umaze_dataset: Dataset) -> None:
        states = umaze_dataset.view().flat("train").obs[:100]
        far = lambda obs, goals: np.full((len(obs), 2), 5.0)  # noqa: E731
        spread = action_spread(far, states, view=umaze_dataset.view())
        assert spread.outside_hull == 1.0

    def test_one_dimensional_hull(self, chain_dataset: Dataset) -> None:
        states = chain_dataset.view().flat("train").obs[:100]
        far = lambda obs, goals: np.full((len(obs), 1), 3.0)  # noqa: E731
        assert action_spread(far, states, view=chain_dataset.view()).outside_hull == 1.0

    def test_too_few_states(self) -> None:
        with pytest.raises(OrlabError) as info:
            action_spread(standing_still, np.zeros((99, 2)))
        assert info.value.code is ErrorCode.DIAG_TOO_FEW_STATES


# =============================================================================
# CSV
# =============================================================================


class TestDiagnosticsCsv:
    """Tests for write_diagnostics_csv."""

    def test_columns_and_blanks(self, temp_dir: Path) -> None:
        path = write_diagnostics_csv(temp_dir / "diag.csv", [{"run_id": "r", "step": 3, "train_mse": 0.25}])
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == DIAGNOSTIC_COLUMNS
        record = dict(zip(rows[0], rows[1], strict=True))
        assert record["run_id"] == "r"
        assert record["step"] == "3"
        assert float(record["train_mse"]) == 0.25
        assert record["val_mse"] == ""

    def test_header_only(self, temp_dir: Path) -> None:
        path = write_diagnostics_csv(temp_dir / "empty.csv", [])
        assert path.read_text().splitlines() == [",".join(DIAGNOSTIC_COLUMNS)]
