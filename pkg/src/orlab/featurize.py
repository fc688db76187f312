"""
Tanh-kernel state featurization.

Each planar coordinate is replaced by 32 features

    x_i~ = tanh((x - c_i) / delta)

with centers c_i evenly spaced over the arena and delta the spacing
between neighbouring centers. Every kernel is strictly increasing in x, so
the map is continuous and invertible (any single feature recovers x), yet
it lets a network respond locally to position. Coordinates beyond the
first two pass through untouched.
"""

from dataclasses import dataclass
from typing import Any

import numpy as np

from orlab.envs.spec import EnvSpec

KERNELS_PER_AXIS = 32
ARENA_MARGIN = 0.5


@dataclass(frozen=True, eq=False)
class TanhFeaturizer:
    """
    Featurizer for observations whose first two entries are (x, y).

    Attributes:
        x_centers: Increasing kernel centers for x.
        y_centers: Increasing kernel centers for y.
    """

    x_centers: np.ndarray
    y_centers: np.ndarray

    def __post_init__(self) -> None:
        for name in ("x_centers", "y_centers"):
            centers = np.asarray(getattr(self, name), dtype=np.float64)
            if centers.ndim != 1 or len(centers) < 2:
                raise ValueError(f"{name} needs at least two centers")
            if np.any(np.diff(centers) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, centers)

    @classmethod
    def for_arena(
        cls,
        low: np.ndarray,
        high: np.ndarray,
        kernels: int = KERNELS_PER_AXIS,
        margin: float = ARENA_MARGIN,
    ) -> "TanhFeaturizer":
        return cls(
            x_centers=np.linspace(low[0] - margin, high[0] + margin, kernels),
            y_centers=np.linspace(low[1] - margin, high[1] + margin, kernels),
        )

    @classmethod
    def for_env(cls, env: EnvSpec, kernels: int = KERNELS_PER_AXIS) -> "TanhFeaturizer":
        if env.layout is None:
            raise ValueError("tanh featurization needs a planar arena")
        low, high = env.layout.bounds
        return cls.for_arena(low, high, kernels)

    @property
    def x_delta(self) -> float:
        return float(self.x_centers[1] - self.x_centers[0])

    @property
    def y_delta(self) -> float:
        return float(self.y_centers[1] - self.y_centers[0])

    @property
    def n_features(self) -> int:
        return len(self.x_centers) + len(self.y_centers)

    def output_dim(self, input_dim: int) -> int:
        return self.n_features + input_dim - 2

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        single = obs.ndim == 1
        obs = np.atleast_2d(obs)
        fx = np.tanh((obs[:, :1] - self.x_centers[None, :]) / self.x_delta)
        fy = np.tanh((obs[:, 1:2] - self.y_centers[None, :]) / self.y_delta)
        out = np.concatenate([fx, fy, obs[:, 2:]], axis=1)
        return out[0] if single else out

    def invert(self, features: np.ndarray, kernel: int | None = None) -> np.ndarray:
        """
        Recover (x, y, rest) from features through one kernel per axis.

        With kernel=None each row uses its least saturated kernel, which
        keeps the inverse accurate anywhere in the arena.
        """
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        nx = len(self.x_centers)
        fx, fy = features[:, :nx], features[:, nx:self.n_features]
        rows = np.arange(len(features))
        ix = np.full(len(features), kernel) if kernel is not None else np.argmin(np.abs(fx), axis=1)
        iy = np.full(len(features), kernel) if kernel is not None else np.argmin(np.abs(fy), axis=1)
        x = self.x_centers[ix] + self.x_delta * np.arctanh(fx[rows, ix])
        y = self.y_centers[iy] + self.y_delta * np.arctanh(fy[rows, iy])
        return np.concatenate([x[:, None], y[:, None], features[:, self.n_features:]], axis=1)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "tanh", "x_centers": self.x_centers.tolist(), "y_centers": self.y_centers.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TanhFeaturizer":
        return cls(x_centers=np.asarray(data["x_centers"]), y_centers=np.asarray(data["y_centers"]))


def featurize(featurizer: TanhFeaturizer, s: np.ndarray) -> np.ndarray:
    return featurizer(s)
