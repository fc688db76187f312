"""
Tests for the tanh-kernel featurizer.
"""

import numpy as np
import pytest

from orlab.envs.spec import make_env
from orlab.featurize import KERNELS_PER_AXIS, TanhFeaturizer, featurize


@pytest.fixture
def featurizer() -> TanhFeaturizer:
    return TanhFeaturizer.for_env(make_env("gc-pointmaze", "umaze"))


class TestTanhFeaturizer:
    """Tests for TanhFeaturizer."""

    def test_centers_span_arena_with_margin(self, featurizer: TanhFeaturizer) -> None:
        np.testing.assert_allclose(featurizer.x_centers, np.linspace(-0.5, 5.5, KERNELS_PER_AXIS))
        assert featurizer.x_delta == pytest.approx(6.0 / 31.0)

    def test_output_width(self, featurizer: TanhFeaturizer) -> None:
        assert featurize(featurizer, np.array([1.0, 2.0])).shape == (64,)
        assert featurizer(np.zeros((5, 3))).shape == (5, 65)
        assert featurizer.output_dim(3) == 65

    def test_extra_coordinates_pass_through(self, featurizer: TanhFeaturizer) -> None:
        out = featurizer(np.array([1.0, 2.0, 7.5]))
        assert out[-1] == 7.5

    def test_every_feature_increases_with_position(self, featurizer: TanhFeaturizer) -> None:
        """Far kernels saturate to +-1 in float64, so only those near x may tie."""
        low = featurizer(np.array([1.0, 1.0]))
        high = featurizer(np.array([1.2, 1.3]))
        assert np.all(high >= low)
        near = np.abs(featurizer.x_centers - 1.1) < 1.0
        assert np.all(high[:KERNELS_PER_AXIS][near] > low[:KERNELS_PER_AXIS][near])

    def test_features_are_bounded(self, featurizer: TanhFeaturizer) -> None:
        out = featurizer(np.random.default_rng(0).uniform(0, 5, (50, 2)))
        assert np.all(np.abs(out) <= 1.0)

    def test_invert_recovers_states(self, featurizer: TanhFeaturizer) -> None:
        states = np.random.default_rng(1).uniform(0, 5, (40, 2))
        np.testing.assert_allclose(featurizer.invert(featurizer(states)), states, atol=1e-9)

    def test_invert_through_fixed_kernel(self, featurizer: TanhFeaturizer) -> None:
        states = np.array([[2.5, 2.5], [2.4, 2.6]])
        np.testing.assert_allclose(featurizer.invert(featurizer(states), kernel=15), states, atol=1e-9)

    def test_dict_roundtrip(self, featurizer: TanhFeaturizer) -> None:
        rebuilt = TanhFeaturizer.from_dict(featurizer.to_dict())
        np.testing.assert_array_equal(rebuilt.y_centers, featurizer.y_centers)

    @pytest.mark.parametrize("centers", [[0.0], [0.0, 0.0, 1.0], [1.0, 0.5]])
    def test_invalid_centers(self, centers: list[float]) -> None:
        with pytest.raises(ValueError):
            TanhFeaturizer(x_centers=np.array(centers), y_centers=np.array([0.0, 1.0]))

    def test_needs_planar_arena(self) -> None:
        with pytest.raises(ValueError):
            TanhFeaturizer.for_env(make_env("chainrun"))
