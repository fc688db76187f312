"""
One harness cell: value training, extraction over a hyperparameter grid,
and periodic evaluation.

A cell job is fully determined by its RunConfig. The value function is
trained once and reused by every extraction hyperparameter (and, via the
`value` argument, by every cell sharing the same value-data size and seed).
"""

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from orlab.data.dataset import Dataset, SubsetView, generate_dataset, subset_by_transitions
from orlab.featurize import TanhFeaturizer
from orlab.harness.config import LAST_EVALS, DataConfig, EnvConfig, RunConfig
from orlab.policy.extract import PolicyArtifact, extract
from orlab.seeding import derive_seed
from orlab.testtime import EvalMethod, evaluate_with_method
from orlab.types import OrlabError
from orlab.value.trainer import FrozenValue, train_value

logger = logging.getLogger(__name__)


# =============================================================================
# RECORDS
# =============================================================================


@dataclass(frozen=True)
class HyperparameterScore:
    """
    Outcome of one extraction hyperparameter.

    Attributes:
        hyperparameter: AWR / DDPG+BC alpha or SfBC N.
        score: Mean of the last LAST_EVALS evaluation scores.
        evals: (extraction step, score) per evaluation.
        train_loss: Final training-batch loss.
        val_loss: Final validation-batch loss (None without a val split).
        policy_digest: Parameter digest of the final policy.
    """

    hyperparameter: float
    score: float
    evals: tuple[tuple[int, float], ...]
    train_loss: float
    val_loss: float | None
    policy_digest: str

    @property
    def overfit_gap(self) -> float | None:
        return None if self.val_loss is None else self.val_loss - self.train_loss

    def to_dict(self) -> dict[str, Any]:
        return {
            "hyperparameter": self.hyperparameter,
            "score": self.score,
            "evals": [list(e) for e in self.evals],
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "policy_digest": self.policy_digest,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "HyperparameterScore":
        return cls(
            hyperparameter=float(data["hyperparameter"]),
            score=float(data["score"]),
            evals=tuple((int(s), float(v)) for s, v in data["evals"]),
            train_loss=float(data["train_loss"]),
            val_loss=None if data.get("val_loss") is None else float(data["val_loss"]),
            policy_digest=data["policy_digest"],
        )


@dataclass(frozen=True)
class CellRecord:
    """
    Result of one (method, value size, policy size, seed) job.

    A failed job keeps its coordinates and the error payload and has no
    scores.
    """

    method: str
    value_size: int | None
    policy_size: int | None
    seed: int
    config_digest: str
    value_digest: str = ""
    scores: tuple[HyperparameterScore, ...] = ()
    error: dict[str, Any] | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def best(self) -> HyperparameterScore:
        """Highest-scoring hyperparameter; ties go to the earliest grid entry."""
        if not self.scores:
            raise ValueError("failed cell has no scores")
        return max(self.scores, key=lambda s: s.score)

    def score_for(self, hyperparameter: float) -> float:
        for entry in self.scores:
            if entry.hyperparameter == hyperparameter:
                return entry.score
        raise KeyError(f"hyperparameter {hyperparameter} not in cell")

    @classmethod
    def failed(cls, config: RunConfig, exc: OrlabError) -> "CellRecord":
        return cls(
            method=config.extraction.method.value,
            value_size=config.value_data,
            policy_size=config.policy_data,
            seed=config.seed,
            config_digest=config.digest,
            error=exc.to_dict(),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "value_size": self.value_size,
            "policy_size": self.policy_size,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "value_digest": self.value_digest,
            "scores": [s.to_dict() for s in self.scores],
            "error": self.error,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CellRecord":
        return cls(
            method=data["method"],
            value_size=data["value_size"],
            policy_size=data["policy_size"],
            seed=int(data["seed"]),
            config_digest=data["config_digest"],
            value_digest=data.get("value_digest", ""),
            scores=tuple(HyperparameterScore.from_dict(s) for s in data.get("scores", [])),
            error=data.get("error"),
            extra=dict(data.get("extra", {})),
        )


# =============================================================================
# BUILDING BLOCKS
# =============================================================================


def make_dataset(env: EnvConfig, data: DataConfig, n_transitions: int | None = None) -> Dataset:
    """Noisy-expert dataset for the configured environment."""
    return generate_dataset(
        env.build(),
        None,
        n_transitions or data.n_transitions,
        data.sigma_data,
        seed=data.seed,
    )


def data_view(dataset: Dataset, size: int | None) -> SubsetView:
    return dataset.view() if size is None else subset_by_transitions(dataset, size)


def featurizer_for(config: RunConfig) -> TanhFeaturizer | None:
    if config.representation == "tanh":
        return TanhFeaturizer.for_env(config.env.build())
    return None


def train_cell_value(config: RunConfig, dataset: Dataset) -> FrozenValue:
    """The value function shared by every extraction of cells with this value size and seed."""
    return train_value(data_view(dataset, config.value_data), config.value, config.seed)


def score_policy(config: RunConfig, artifact: PolicyArtifact, step: int) -> float:
    report = evaluate_with_method(
        config.env.eval_env(),
        artifact,
        EvalMethod.VANILLA,
        config.eval_episodes,
        seed=derive_seed(config.seed, "eval", step),
    )
    return report.score


def extract_and_score(
    config: RunConfig,
    value: FrozenValue | None,
    view: SubsetView,
    hyperparameter: float,
) -> tuple[HyperparameterScore, PolicyArtifact]:
    """Extract with one hyperparameter and evaluate every `eval_every` steps."""
    extraction = config.extraction.with_hyperparameter(hyperparameter)
    evals: list[tuple[int, float]] = []

    def monitor(step: int, snapshot: PolicyArtifact) -> None:
        evals.append((step, score_policy(config, snapshot, step)))

    artifact = extract(
        extraction,
        value,
        view,
        seed=config.seed,
        featurizer=featurizer_for(config),
        monitor=monitor,
        monitor_every=config.eval_every,
    )
    final = artifact.curves[-1]
    entry = HyperparameterScore(
        hyperparameter=float(hyperparameter),
        score=float(np.mean([s for _, s in evals[-LAST_EVALS:]])),
        evals=tuple(evals),
        train_loss=float(final["train_loss"]),
        val_loss=float(final["val_loss"]) if "val_loss" in final else None,
        policy_digest=artifact.digest,
    )
    return entry, artifact


# =============================================================================
# RUN CELL
# =============================================================================


def run_cell(
    config: RunConfig,
    dataset: Dataset | None = None,
    value: FrozenValue | None = None,
) -> CellRecord:
    """
    Train (or reuse) a value function, extract one policy per
    hyperparameter and evaluate each.

    Args:
        config: Cell configuration; config.seed selects the job seed.
        dataset: Shared dataset (generated from config.data if None).
        value: Value function to reuse; trained on the value-data subset
            if None.

    Returns:
        CellRecord with one HyperparameterScore per grid entry, all
        referencing the same value digest.

    Raises:
        OrlabError: Propagated from data generation, training or
            evaluation. Harness drivers turn it into a failed record.
    """
    if dataset is None:
        dataset = make_dataset(config.env, config.data)
    if value is None:
        value = train_cell_value(config, dataset)
    policy_view = data_view(dataset, config.policy_data)
    scores = []
    for h in config.hyperparameter_grid():
        entry, _ = extract_and_score(config, value, policy_view, h)
        scores.append(entry)
    record = CellRecord(
        method=config.extraction.method.value,
        value_size=config.value_data,
        policy_size=config.policy_data,
        seed=config.seed,
        config_digest=config.digest,
        value_digest=value.digest,
        scores=tuple(scores),
    )
    logger.info(
        "cell %s V=%s P=%s seed=%d: best h=%s score=%.4f",
        record.method, record.value_size, record.policy_size, record.seed,
        record.best.hyperparameter, record.best.score,
    )
    return record
