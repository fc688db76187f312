"""
Tests for datasets: generation, the validation split, nested views, the
ORLD file format, minibatch sampling and goal relabeling.
"""

import struct
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from orlab.data.dataset import (
    VAL_EVERY,
    VAL_OFFSET,
    Dataset,
    generate_dataset,
    rollout,
    subset,
    subset_by_transitions,
    visitation_entropy,
)
from orlab.data.io import decode_dataset, encode_dataset, load_dataset, save_dataset
from orlab.data.sampling import (
    MODE_FUTURE,
    BatchSampler,
    GoalMix,
    sample_batch,
    sample_geometric_goal,
)
from orlab.envs.spec import EnvSpec
from orlab.types import ErrorCode, OrlabError


# =============================================================================
# GENERATION
# =============================================================================


class TestGeneration:
    """Tests for generate_dataset and rollout."""

    def test_collects_at_least_requested(self, umaze_dataset: Dataset) -> None:
        assert umaze_dataset.n_transitions >= 2000
        assert umaze_dataset.n_trajectories >= VAL_EVERY
        assert umaze_dataset.meta.sigma_data == 0.2

    def test_only_goal_reaches_are_terminal(self, umaze_dataset: Dataset) -> None:
        """Timeouts never set the terminal flag; reaching the goal pays 0."""
        for traj in umaze_dataset.trajectories:
            assert not traj.terminals[:-1].any()
            np.testing.assert_array_equal(traj.rewards == 0.0, traj.terminals)

    def test_next_actions_shift_by_one(self, umaze_dataset: Dataset) -> None:
        traj = umaze_dataset.trajectories[0]
        np.testing.assert_array_equal(traj.next_actions[:-1], traj.actions[1:])
        np.testing.assert_array_equal(traj.next_actions[-1], traj.actions[-1])
        np.testing.assert_array_equal(traj.next_obs[:-1], traj.obs[1:])

    def test_traj_ids_are_a_shuffled_range(self, umaze_dataset: Dataset) -> None:
        ids = [t.traj_id for t in umaze_dataset.trajectories]
        assert sorted(ids) == list(range(len(ids)))
        assert ids != sorted(ids)

    def test_generation_is_deterministic(self, umaze_env: EnvSpec) -> None:
        a = generate_dataset(umaze_env, None, 200, 0.3, seed=5)
        b = generate_dataset(umaze_env, None, 200, 0.3, seed=5)
        assert encode_dataset(a) == encode_dataset(b)

    def test_chainrun_episodes_run_to_timeout(self, chain_dataset: Dataset) -> None:
        assert all(len(t) == 200 for t in chain_dataset.trajectories)
        assert all(t.goal is None for t in chain_dataset.trajectories)

    def test_non_finite_policy_action(self, umaze_env: EnvSpec) -> None:
        with pytest.raises(OrlabError) as info:
            rollout(umaze_env, lambda spec, state, rng: np.array([np.nan, 0.0]), np.random.default_rng(0), 0)
        assert info.value.code is ErrorCode.DATA_NON_FINITE_ACTION

    def test_visitation_entropy(self, umaze_dataset: Dataset) -> None:
        entropy = visitation_entropy(umaze_dataset.view())
        assert 0.0 < entropy <= np.log(400)


# =============================================================================
# SPLIT AND VIEWS
# =============================================================================


class TestViews:
    """Tests for the split assignment and SubsetView."""

    def test_one_in_twenty_trajectories_is_validation(self, umaze_dataset: Dataset) -> None:
        flags = umaze_dataset.is_val
        expected = [i % VAL_EVERY == VAL_OFFSET for i in range(len(flags))]
        assert list(flags) == expected

    def test_views_are_nested(self, umaze_dataset: Dataset) -> None:
        small, large = subset(umaze_dataset, 5), subset(umaze_dataset, 12)
        assert large.trajectories[:5] == small.trajectories

    def test_splits_partition_the_view(self, umaze_dataset: Dataset) -> None:
        view = umaze_dataset.view()
        assert view.n_transitions("train") + view.n_transitions("val") == view.n_transitions("all")
        train_ids = set(view.flat("train").traj_ids)
        val_ids = set(view.flat("val").traj_ids)
        assert val_ids and not train_ids & val_ids

    def test_single_trajectory_view_has_no_validation(self, umaze_dataset: Dataset) -> None:
        assert subset(umaze_dataset, 1).n_transitions("val") == 0

    @pytest.mark.parametrize("k", [2, 3, 5, VAL_EVERY - 1, VAL_EVERY])
    def test_small_views_hold_validation(self, umaze_dataset: Dataset, k: int) -> None:
        """Every prefix of two or more trajectories keeps a validation trajectory."""
        view = subset(umaze_dataset, k)
        assert len(view.split_trajectories("val")) >= 1
        assert len(view.split_trajectories("train")) >= 1

    def test_validation_share_stays_near_five_percent(self, umaze_dataset: Dataset) -> None:
        n = umaze_dataset.n_trajectories
        n_val = int(umaze_dataset.is_val.sum())
        assert n_val == len(range(VAL_OFFSET, n, VAL_EVERY))
        assert n_val <= n // VAL_EVERY + 1

    @pytest.mark.parametrize("k", [0, 10_000])
    def test_k_out_of_range(self, umaze_dataset: Dataset, k: int) -> None:
        with pytest.raises(OrlabError) as info:
            subset(umaze_dataset, k)
        assert info.value.code is ErrorCode.DATA_K_OUT_OF_RANGE

    def test_subset_by_transitions_is_smallest_prefix(self, umaze_dataset: Dataset) -> None:
        view = subset_by_transitions(umaze_dataset, 300)
        assert view.n_transitions() >= 300
        assert subset(umaze_dataset, view.k - 1).n_transitions() < 300
        assert subset_by_transitions(umaze_dataset, 10**9).k == umaze_dataset.n_trajectories

    def test_flat_trajectory_bounds(self, umaze_dataset: Dataset) -> None:
        flat = umaze_dataset.view().flat("train")
        np.testing.assert_array_equal(flat.traj_ids[flat.traj_start], flat.traj_ids)
        np.testing.assert_array_equal(flat.traj_ids[flat.traj_end], flat.traj_ids)
        assert np.all(flat.timesteps == np.arange(len(flat)) - flat.traj_start)

    def test_unknown_split(self, umaze_dataset: Dataset) -> None:
        with pytest.raises(ValueError):
            umaze_dataset.view().split_trajectories("test")

    def test_extended_appends_train_trajectories(self, umaze_dataset: Dataset) -> None:
        extra = umaze_dataset.trajectories[:3]
        grown = umaze_dataset.extended(extra)
        assert grown.n_trajectories == umaze_dataset.n_trajectories + 3
        assert not grown.is_val[-3:].any()
        assert list(grown.is_val[: umaze_dataset.n_trajectories]) == list(umaze_dataset.is_val)


# =============================================================================
# ORLD FILES
# =============================================================================


class TestDatasetIo:
    """Tests for the ORLD format."""

    def test_roundtrip(self, umaze_dataset: Dataset, temp_dir: Path) -> None:
        path = temp_dir / "d.orld"
        save_dataset(path, umaze_dataset)
        loaded = load_dataset(path)
        assert encode_dataset(loaded) == encode_dataset(umaze_dataset)
        assert list(loaded.is_val) == list(umaze_dataset.is_val)
        assert loaded.meta.env == umaze_dataset.meta.env
        np.testing.assert_array_equal(loaded.trajectories[3].goal, umaze_dataset.trajectories[3].goal)

    def test_roundtrip_without_goals(self, chain_dataset: Dataset) -> None:
        loaded = decode_dataset(encode_dataset(chain_dataset))
        assert loaded.trajectories[0].goal is None
        np.testing.assert_array_equal(loaded.trajectories[0].rewards, chain_dataset.trajectories[0].rewards)

    def test_bad_magic(self, chain_dataset: Dataset) -> None:
        with pytest.raises(OrlabError) as info:
            decode_dataset(b"ORLP" + encode_dataset(chain_dataset)[4:])
        assert info.value.code is ErrorCode.PERSIST_BAD_MAGIC

    def test_version_mismatch(self, chain_dataset: Dataset) -> None:
        data = encode_dataset(chain_dataset)
        with pytest.raises(OrlabError) as info:
            decode_dataset(data[:4] + struct.pack("<I", 7) + data[8:])
        assert info.value.code is ErrorCode.PERSIST_VERSION_MISMATCH

    def test_truncated(self, chain_dataset: Dataset) -> None:
        with pytest.raises(OrlabError) as info:
            decode_dataset(encode_dataset(chain_dataset)[:-3])
        assert info.value.code is ErrorCode.PERSIST_TRUNCATED

    def test_trailing_bytes(self, chain_dataset: Dataset) -> None:
        with pytest.raises(OrlabError) as info:
            decode_dataset(encode_dataset(chain_dataset) + b"\x00")
        assert info.value.code is ErrorCode.PERSIST_TRUNCATED

    def test_missing_file(self, temp_dir: Path) -> None:
        with pytest.raises(OrlabError) as info:
            load_dataset(temp_dir / "none.orld")
        assert info.value.code is ErrorCode.PERSIST_FILE_NOT_FOUND


# =============================================================================
# SAMPLING
# =============================================================================


class TestSampling:
    """Tests for sample_batch, BatchSampler and goal relabeling."""

    def test_batches_are_a_function_of_seed_and_call(self, umaze_dataset: Dataset) -> None:
        view = umaze_dataset.view()
        a = sample_batch(view, 64, seed=1, call_index=3, gamma=0.99)
        b = sample_batch(view, 64, seed=1, call_index=3, gamma=0.99)
        c = sample_batch(view, 64, seed=1, call_index=4, gamma=0.99)
        np.testing.assert_array_equal(a.rows, b.rows)
        np.testing.assert_array_equal(a.goals, b.goals)
        assert not np.array_equal(a.rows, c.rows)

    def test_sampler_advances_call_index(self, umaze_dataset: Dataset) -> None:
        view = umaze_dataset.view()
        sampler = BatchSampler(view, 16, seed=2)
        sampler.next()
        second = sampler.next()
        assert sampler.calls == 2
        np.testing.assert_array_equal(second.rows, sample_batch(view, 16, seed=2, call_index=1).rows)

    def test_empty_split(self, umaze_dataset: Dataset) -> None:
        with pytest.raises(OrlabError) as info:
            sample_batch(subset(umaze_dataset, 1), 8, seed=0, split="val")
        assert info.value.code is ErrorCode.DATA_EMPTY_VIEW

    def test_single_task_batches_have_no_goals(self, chain_dataset: Dataset) -> None:
        batch = sample_batch(chain_dataset.view(), 8, seed=0, gamma=0.99)
        assert batch.goals is None
        np.testing.assert_array_equal(batch.not_done, np.ones(8))

    def test_negatives(self, umaze_dataset: Dataset) -> None:
        batch = sample_batch(umaze_dataset.view(), 8, seed=0, gamma=0.99, negatives=True)
        assert batch.neg_goals.shape == (8, 2)

    @pytest.mark.parametrize("weights", [(0.5, 0.5, 0.5), (-0.1, 0.6, 0.5)])
    def test_invalid_mix(self, weights: tuple[float, float, float]) -> None:
        with pytest.raises(OrlabError) as info:
            GoalMix(*weights)
        assert info.value.code is ErrorCode.DATA_INVALID_MIX

    def test_current_goal_always_succeeds(self, umaze_dataset: Dataset) -> None:
        view = umaze_dataset.view()
        rows = np.arange(50)
        sample = sample_geometric_goal(view, rows, 0.99, GoalMix(1.0, 0.0, 0.0), seed=0)
        np.testing.assert_array_equal(sample.goals, view.flat("train").obs[rows])
        assert sample.terminals.all()
        assert np.all(sample.rewards == 0.0)
        assert np.all(sample.offsets == 0)

    def test_future_goal_stays_in_trajectory(self, umaze_dataset: Dataset) -> None:
        view = umaze_dataset.view()
        flat = view.flat("train")
        rows = np.arange(0, len(flat), 7)
        sample = sample_geometric_goal(view, rows, 0.9, GoalMix(0.0, 1.0, 0.0), seed=3)
        assert np.all(sample.modes == MODE_FUTURE)
        assert np.all(sample.offsets >= 1)
        target = np.minimum(rows + sample.offsets - 1, flat.traj_end[rows])
        np.testing.assert_array_equal(sample.goals, flat.next_obs[target])
        np.testing.assert_array_equal(flat.traj_ids[target], flat.traj_ids[rows])

    def test_future_offsets_are_geometric(self, umaze_dataset: Dataset) -> None:
        """Mean offset is 1 / (1 - gamma)."""
        view = umaze_dataset.view()
        rows = np.zeros(4000, dtype=np.int64)
        sample = sample_geometric_goal(view, rows, 0.9, GoalMix(0.0, 1.0, 0.0), seed=4)
        assert abs(sample.offsets.mean() - 10.0) < 1.0

    def test_future_offsets_pass_chi_square(self, umaze_dataset: Dataset) -> None:
        """Offsets 1..10 plus a tail bin against the geometric pmf with p = 1 - gamma."""
        rows = np.zeros(4000, dtype=np.int64)
        offsets = sample_geometric_goal(umaze_dataset.view(), rows, 0.9, GoalMix(0.0, 1.0, 0.0), seed=5).offsets
        observed = np.array([np.sum(offsets == k) for k in range(1, 11)] + [np.sum(offsets > 10)])
        pmf = stats.geom.pmf(np.arange(1, 11), 0.1)
        expected = len(offsets) * np.append(pmf, 1.0 - pmf.sum())
        assert stats.chisquare(observed, expected).pvalue > 1e-3

    def test_mode_frequencies_follow_mix(self, umaze_dataset: Dataset) -> None:
        rows = np.zeros(6000, dtype=np.int64)
        modes = sample_geometric_goal(umaze_dataset.view(), rows, 0.9, GoalMix(0.2, 0.5, 0.3), seed=6).modes
        observed = np.bincount(modes, minlength=3)
        assert stats.chisquare(observed, 6000 * np.array([0.2, 0.5, 0.3])).pvalue > 1e-3

    def test_random_goal_has_zero_offset(self, umaze_dataset: Dataset) -> None:
        sample = sample_geometric_goal(umaze_dataset.view(), np.arange(20), 0.99, GoalMix(0.0, 0.0, 1.0), seed=0)
        assert np.all(sample.offsets == 0)

    def test_row_out_of_range(self, umaze_dataset: Dataset) -> None:
        with pytest.raises(IndexError):
            sample_geometric_goal(umaze_dataset.view(), 10**7, 0.99, GoalMix(), seed=0)

    def test_gamma_range(self, umaze_dataset: Dataset) -> None:
        with pytest.raises(ValueError):
            sample_geometric_goal(umaze_dataset.view(), 0, 1.0, GoalMix(), seed=0)
