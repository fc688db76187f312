"""
Experiment configuration.

One YAML mapping describes one experiment. Its top-level sections are
shared by every experiment kind:

    env:         {env_id: gc-pointmaze, layout: large, start_region: start,
                  eval_start_region: all}
    data:        {n_transitions: 30000, sigma_data: 0.2, seed: 0}
    value:       ValueConfig fields
    extraction:  ExtractionConfig fields
    seed: 0
    value_data: 10000          # transitions for value training (null = all)
    policy_data: 3000          # transitions for extraction (null = all)
    eval_every: 5000
    eval_episodes: 50
    hyperparameters: [0.1, 0.3, 1.0, 3.0]   # null = default grid

and each kind adds its own section (grid, coverage, online, testtime,
representations, pathologies). Dotted overrides from the command line are
applied to the raw mapping before parsing, so they follow exactly the same
rules as file keys.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from orlab.envs.spec import EnvSpec, make_env
from orlab.policy.extract import ExtractionConfig, ExtractionMethod, default_grid
from orlab.types import ErrorCode, OrlabError
from orlab.value.trainer import ValueConfig

WORKERS_ENV = "ORLAB_WORKERS"
LAST_EVALS = 3


# =============================================================================
# HELPERS
# =============================================================================


def canonical_json(data: Any) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=True).encode("utf-8")


def config_digest(data: Any) -> str:
    """sha256 hex of the canonical JSON encoding."""
    return hashlib.sha256(canonical_json(data)).hexdigest()


def worker_count(default: int = 1) -> int:
    """Worker-pool size from ORLAB_WORKERS."""
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or not raw.strip():
        return default
    try:
        workers = int(raw)
    except ValueError as exc:
        raise OrlabError(f"{WORKERS_ENV} must be an integer, got {raw!r}", ErrorCode.HARNESS_INVALID_CONFIG) from exc
    if workers < 1:
        raise OrlabError(f"{WORKERS_ENV} must be >= 1, got {workers}", ErrorCode.HARNESS_INVALID_CONFIG)
    return workers


def load_mapping(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise OrlabError(f"config file not found: {path}", ErrorCode.PERSIST_FILE_NOT_FOUND)
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise OrlabError(f"{path} must contain a mapping", ErrorCode.HARNESS_INVALID_CONFIG)
    return data


def apply_overrides(data: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """
    Return a copy of `data` with dotted keys replaced.

    Example:
        >>> apply_overrides({"value": {"steps": 10}}, {"value.steps": 0})
        {'value': {'steps': 0}}
    """
    out = json.loads(json.dumps(data))
    for dotted, value in overrides.items():
        node = out
        *parents, leaf = dotted.split(".")
        for key in parents:
            child = node.get(key)
            if child is None:
                child = node[key] = {}
            if not isinstance(child, dict):
                raise OrlabError(f"cannot override {dotted}: {key} is not a section", ErrorCode.HARNESS_INVALID_CONFIG)
            node = child
        node[leaf] = value
    return out


def parse_override(text: str) -> tuple[str, Any]:
    """Parse one `key.path=value` flag; the value is read as YAML."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise OrlabError(f"override must look like key=value, got {text!r}", ErrorCode.HARNESS_INVALID_CONFIG)
    return key.strip(), yaml.safe_load(raw)


def _floats(values: Any, name: str) -> tuple[float, ...]:
    if values is None:
        return ()
    if not isinstance(values, list | tuple) or not values:
        raise OrlabError(f"{name} must be a non-empty list", ErrorCode.HARNESS_INVALID_CONFIG)
    return tuple(float(v) for v in values)


def _ints(values: Any, name: str) -> tuple[int, ...]:
    return tuple(int(v) for v in _floats(values, name))


# =============================================================================
# RUN CONFIG
# =============================================================================


@dataclass(frozen=True)
class EnvConfig:
    """
    Which environment to build and where evaluation episodes start.

    eval_start_region lets datasets come from a narrow start region while
    evaluation uses held-out starts.
    """

    env_id: str = "gc-pointmaze"
    layout: str = "large"
    start_region: str = "start"
    goal_region: str = "all"
    eval_start_region: str | None = None
    max_episode_steps: int | None = None

    def build(self) -> EnvSpec:
        return make_env(self.env_id, self.layout, self.max_episode_steps, self.start_region, self.goal_region)

    def eval_env(self) -> EnvSpec:
        env = self.build()
        if self.eval_start_region and env.is_maze:
            return env.with_start_region(self.eval_start_region)
        return env

    def to_dict(self) -> dict[str, Any]:
        return {
            "env_id": self.env_id,
            "layout": self.layout,
            "start_region": self.start_region,
            "goal_region": self.goal_region,
            "eval_start_region": self.eval_start_region,
            "max_episode_steps": self.max_episode_steps,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EnvConfig":
        return cls(**data)


@dataclass(frozen=True)
class DataConfig:
    n_transitions: int = 30_000
    sigma_data: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_transitions < 1:
            raise OrlabError("data.n_transitions must be >= 1", ErrorCode.HARNESS_INVALID_CONFIG)
        if self.sigma_data < 0:
            raise OrlabError("data.sigma_data must be >= 0", ErrorCode.HARNESS_INVALID_CONFIG)

    def to_dict(self) -> dict[str, Any]:
        return {"n_transitions": self.n_transitions, "sigma_data": self.sigma_data, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DataConfig":
        return cls(**data)


@dataclass(frozen=True)
class RunConfig:
    """
    Everything that determines one (cell, seed) job.

    Attributes:
        env: Environment and evaluation start region.
        data: Dataset generation settings.
        value: Value-learning hyperparameters.
        extraction: Extraction objective; its alpha / N is replaced by each
            entry of the hyperparameter list.
        seed: Training seed.
        value_data: Transitions used for value training (None = all).
        policy_data: Transitions used for extraction (None = all).
        eval_every: Extraction steps between evaluations.
        eval_episodes: Rollouts per evaluation.
        hyperparameters: Grid searched per cell (None = default grid for
            the method and value objective).
        representation: "raw" or "tanh" policy input.
    """

    env: EnvConfig = field(default_factory=EnvConfig)
    data: DataConfig = field(default_factory=DataConfig)
    value: ValueConfig = field(default_factory=ValueConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    seed: int = 0
    value_data: int | None = None
    policy_data: int | None = None
    eval_every: int = 5000
    eval_episodes: int = 50
    hyperparameters: tuple[float, ...] | None = None
    representation: str = "raw"

    def __post_init__(self) -> None:
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise OrlabError("eval_every and eval_episodes must be >= 1", ErrorCode.HARNESS_INVALID_CONFIG)
        for name in ("value_data", "policy_data"):
            size = getattr(self, name)
            if size is not None and size < 1:
                raise OrlabError(f"{name} must be >= 1", ErrorCode.HARNESS_INVALID_CONFIG)
        if self.hyperparameters is not None:
            object.__setattr__(self, "hyperparameters", _floats(list(self.hyperparameters), "hyperparameters"))
        if self.representation not in ("raw", "tanh"):
            raise OrlabError(f"unknown representation: {self.representation}", ErrorCode.HARNESS_INVALID_CONFIG)

    def hyperparameter_grid(self) -> tuple[float, ...]:
        if self.hyperparameters is not None:
            return self.hyperparameters
        return default_grid(self.extraction.method, self.value.objective)

    def with_method(self, method: ExtractionMethod | str, hyperparameters: tuple[float, ...] | None = None) -> "RunConfig":
        """Switch extraction method; the grid resets to `hyperparameters` (default grid if None)."""
        return replace(
            self,
            extraction=replace(self.extraction, method=ExtractionMethod(method)),
            hyperparameters=hyperparameters,
        )

    def with_sizes(self, value_data: int | None, policy_data: int | None) -> "RunConfig":
        return replace(self, value_data=value_data, policy_data=policy_data)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed)

    def with_sigma(self, sigma: float) -> "RunConfig":
        return replace(self, data=replace(self.data, sigma_data=float(sigma)))

    def to_dict(self) -> dict[str, Any]:
        return {
            "env": self.env.to_dict(),
            "data": self.data.to_dict(),
            "value": self.value.to_dict(),
            "extraction": self.extraction.to_dict(),
            "seed": self.seed,
            "value_data": self.value_data,
            "policy_data": self.policy_data,
            "eval_every": self.eval_every,
            "eval_episodes": self.eval_episodes,
            "hyperparameters": list(self.hyperparameters) if self.hyperparameters is not None else None,
            "representation": self.representation,
        }

    @property
    def digest(self) -> str:
        return config_digest(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        try:
            hps = data.get("hyperparameters")
            return cls(
                env=EnvConfig.from_dict(data.get("env") or {}),
                data=DataConfig.from_dict(data.get("data") or {}),
                value=ValueConfig.from_dict(data.get("value") or {}),
                extraction=ExtractionConfig.from_dict(data.get("extraction") or {}),
                seed=int(data.get("seed", 0)),
                value_data=data.get("value_data"),
                policy_data=data.get("policy_data"),
                eval_every=int(data.get("eval_every", 5000)),
                eval_episodes=int(data.get("eval_episodes", 50)),
                hyperparameters=tuple(hps) if hps is not None else None,
                representation=data.get("representation", "raw"),
            )
        except (TypeError, ValueError) as exc:
            raise OrlabError(f"invalid run config: {exc}", ErrorCode.HARNESS_INVALID_CONFIG) from exc


# =============================================================================
# EXPERIMENT CONFIGS
# =============================================================================


@dataclass(frozen=True)
class GridConfig:
    """A data-scaling matrix per extraction method."""

    base: RunConfig
    value_sizes: tuple[int, ...]
    policy_sizes: tuple[int, ...]
    methods: tuple[ExtractionMethod, ...]
    seeds: tuple[int, ...] = (0,)
    hyperparameters: dict[ExtractionMethod, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.value_sizes or not self.policy_sizes or not self.methods or not self.seeds:
            raise OrlabError("grid axes, methods and seeds must be non-empty", ErrorCode.HARNESS_INVALID_CONFIG)

    def grid_for(self, method: ExtractionMethod) -> tuple[float, ...] | None:
        """Per-method grid; the top-level list applies to the base method only."""
        if method in self.hyperparameters:
            return self.hyperparameters[method]
        return self.base.hyperparameters if method is self.base.extraction.method else None

    def run_config(self, method: ExtractionMethod, value_size: int, policy_size: int, seed: int) -> RunConfig:
        return (
            self.base.with_method(method, self.grid_for(method))
            .with_sizes(value_size, policy_size)
            .with_seed(seed)
        )

    @property
    def largest_size(self) -> int:
        return max(*self.value_sizes, *self.policy_sizes)

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.base.to_dict(),
            "grid": {
                "value_sizes": list(self.value_sizes),
                "policy_sizes": list(self.policy_sizes),
                "methods": [m.value for m in self.methods],
                "seeds": list(self.seeds),
                "hyperparameters": {m.value: list(h) for m, h in self.hyperparameters.items()},
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GridConfig":
        grid = data.get("grid") or {}
        return cls(
            base=RunConfig.from_dict(data),
            value_sizes=_ints(grid.get("value_sizes"), "grid.value_sizes"),
            policy_sizes=_ints(grid.get("policy_sizes"), "grid.policy_sizes"),
            methods=tuple(ExtractionMethod(m) for m in grid.get("methods") or [(data.get("extraction") or {}).get("method", "ddpg+bc")]),
            seeds=_ints(grid.get("seeds", [0]), "grid.seeds"),
            hyperparameters={
                ExtractionMethod(m): _floats(h, f"grid.hyperparameters.{m}")
                for m, h in (grid.get("hyperparameters") or {}).items()
            },
        )


@dataclass(frozen=True)
class CoverageConfig:
    """Scores over (sigma_data x dataset size); each size is used for both value and policy."""

    base: RunConfig
    sigmas: tuple[float, ...]
    sizes: tuple[int, ...]
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        if any(s < 0 for s in self.sigmas):
            raise OrlabError("sigma values must be >= 0", ErrorCode.HARNESS_INVALID_CONFIG)
        if not self.sigmas or not self.sizes or not self.seeds:
            raise OrlabError("coverage sigmas, sizes and seeds must be non-empty", ErrorCode.HARNESS_INVALID_CONFIG)

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.base.to_dict(),
            "coverage": {"sigmas": list(self.sigmas), "sizes": list(self.sizes), "seeds": list(self.seeds)},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CoverageConfig":
        cov = data.get("coverage") or {}
        return cls(
            base=RunConfig.from_dict(data),
            sigmas=_floats(cov.get("sigmas"), "coverage.sigmas"),
            sizes=_ints(cov.get("sizes"), "coverage.sizes"),
            seeds=_ints(cov.get("seeds", [0]), "coverage.seeds"),
        )


@dataclass(frozen=True)
class OnlineConfig:
    """
    Offline training followed by online fine-tuning.

    The offline budgets are base.value.steps and base.extraction.steps;
    the online phase takes one value and one policy step per environment
    step.
    """

    base: RunConfig
    online_steps: int = 10_000
    eval_every: int = 1000
    mse_episodes: int = 50
    oracle_resolution: int = 4

    def __post_init__(self) -> None:
        if self.online_steps < 0 or self.eval_every < 1 or self.mse_episodes < 1 or self.oracle_resolution < 1:
            raise OrlabError("invalid online settings", ErrorCode.HARNESS_INVALID_CONFIG)

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.base.to_dict(),
            "online": {
                "online_steps": self.online_steps,
                "eval_every": self.eval_every,
                "mse_episodes": self.mse_episodes,
                "oracle_resolution": self.oracle_resolution,
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "OnlineConfig":
        return cls(base=RunConfig.from_dict(data), **(data.get("online") or {}))


@dataclass(frozen=True)
class EvalSweepConfig:
    """Vanilla vs SfBC vs OPEX vs TTT on one extracted policy per seed."""

    base: RunConfig
    opex_betas: tuple[float, ...] = (0.03, 0.1, 0.3, 1.0)
    ttt_betas: tuple[float, ...] = (0.03, 0.1, 0.3, 1.0)
    sfbc_n: int = 16
    seeds: tuple[int, ...] = (0,)

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.base.to_dict(),
            "testtime": {
                "opex_betas": list(self.opex_betas),
                "ttt_betas": list(self.ttt_betas),
                "sfbc_n": self.sfbc_n,
                "seeds": list(self.seeds),
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvalSweepConfig":
        tt = data.get("testtime") or {}
        return cls(
            base=RunConfig.from_dict(data),
            opex_betas=_floats(tt.get("opex_betas", [0.03, 0.1, 0.3, 1.0]), "testtime.opex_betas"),
            ttt_betas=_floats(tt.get("ttt_betas", [0.03, 0.1, 0.3, 1.0]), "testtime.ttt_betas"),
            sfbc_n=int(tt.get("sfbc_n", 16)),
            seeds=_ints(tt.get("seeds", [0]), "testtime.seeds"),
        )


@dataclass(frozen=True)
class RepresentationConfig:
    """Goal-conditioned BC with several state representations."""

    base: RunConfig
    representations: tuple[str, ...] = ("raw", "tanh")
    seeds: tuple[int, ...] = (0,)
    mse_episodes: int = 50

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.base.to_dict(),
            "representations": {
                "names": list(self.representations),
                "seeds": list(self.seeds),
                "mse_episodes": self.mse_episodes,
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RepresentationConfig":
        rep = data.get("representations") or {}
        return cls(
            base=RunConfig.from_dict(data),
            representations=tuple(rep.get("names", ["raw", "tanh"])),
            seeds=_ints(rep.get("seeds", [0]), "representations.seeds"),
            mse_episodes=int(rep.get("mse_episodes", 50)),
        )


@dataclass(frozen=True)
class PathologyConfig:
    """
    AWR against DDPG+BC on two failure modes.

    Overfitting runs on the base environment at base.value_data /
    base.policy_data (the smallest matrix cell). Action spread runs on
    spread_env with its whole dataset. An alpha of None picks the highest
    AWR grid entry and the lowest DDPG+BC grid entry for the base value
    objective.
    """

    base: RunConfig
    seeds: tuple[int, ...] = (0,)
    awr_alpha: float | None = None
    ddpg_alpha: float | None = None
    spread_env: EnvConfig = field(default_factory=lambda: EnvConfig(env_id="chainrun"))
    spread_episodes: int = 2

    def __post_init__(self) -> None:
        if not self.seeds or self.spread_episodes < 1:
            raise OrlabError("pathology seeds must be non-empty and spread_episodes >= 1", ErrorCode.HARNESS_INVALID_CONFIG)
        if self.ddpg_alpha is not None and self.ddpg_alpha <= 0:
            raise OrlabError("DDPG+BC alpha must be > 0", ErrorCode.HARNESS_INVALID_CONFIG)
        if self.awr_alpha is not None and self.awr_alpha < 0:
            raise OrlabError("AWR alpha must be >= 0", ErrorCode.HARNESS_INVALID_CONFIG)

    @property
    def resolved_awr_alpha(self) -> float:
        if self.awr_alpha is not None:
            return float(self.awr_alpha)
        return max(default_grid(ExtractionMethod.AWR, self.base.value.objective))

    @property
    def resolved_ddpg_alpha(self) -> float:
        if self.ddpg_alpha is not None:
            return float(self.ddpg_alpha)
        return min(default_grid(ExtractionMethod.DDPG_BC, self.base.value.objective))

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.base.to_dict(),
            "pathologies": {
                "seeds": list(self.seeds),
                "awr_alpha": self.awr_alpha,
                "ddpg_alpha": self.ddpg_alpha,
                "spread_env": self.spread_env.to_dict(),
                "spread_episodes": self.spread_episodes,
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PathologyConfig":
        path = data.get("pathologies") or {}
        awr_alpha, ddpg_alpha = path.get("awr_alpha"), path.get("ddpg_alpha")
        return cls(
            base=RunConfig.from_dict(data),
            seeds=_ints(path.get("seeds", [0]), "pathologies.seeds"),
            awr_alpha=float(awr_alpha) if awr_alpha is not None else None,
            ddpg_alpha=float(ddpg_alpha) if ddpg_alpha is not None else None,
            spread_env=EnvConfig.from_dict(path.get("spread_env") or {"env_id": "chainrun"}),
            spread_episodes=int(path.get("spread_episodes", 2)),
        )
