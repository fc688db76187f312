"""
Goal-conditioned behavioral cloning with different state representations.

Raw coordinates and tanh-kernel features are trained on the same data
with the same seeds. Each run reports train / validation / evaluation MSE
against the oracle and a held-out-start evaluation score.
"""

import logging
from dataclasses import asdict, dataclass, replace
from typing import TYPE_CHECKING, Any

import numpy as np

from orlab.diagnostics import mse_report
from orlab.envs.oracle import solve_oracle
from orlab.harness.cells import data_view, featurizer_for, make_dataset, score_policy
from orlab.harness.config import RepresentationConfig
from orlab.policy.extract import ExtractionMethod, extract
from orlab.seeding import derive_seed
from orlab.types import EntryType

if TYPE_CHECKING:
    from orlab.session import RunSession

logger = logging.getLogger(__name__)

ORACLE_RESOLUTION = 4


@dataclass(frozen=True)
class RepresentationRun:
    representation: str
    seed: int
    train_mse: float
    val_mse: float
    eval_mse: float
    score: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RepresentationResult:
    runs: tuple[RepresentationRun, ...]

    def mean(self, representation: str, field_name: str) -> float:
        values = [getattr(r, field_name) for r in self.runs if r.representation == representation]
        return float(np.mean(values)) if values else float("nan")

    def to_dict(self) -> dict[str, Any]:
        return {"runs": [r.to_dict() for r in self.runs]}


def compare_representations(
    config: RepresentationConfig,
    session: "RunSession | None" = None,
) -> RepresentationResult:
    """
    Train GC-BC (AWR with alpha 0, no value function) per representation and seed.

    The oracle and dataset are shared by every run, and the rollouts used
    for evaluation MSE start from the held-out evaluation region.
    """
    base = config.base
    env = base.env.build()
    eval_env = base.env.eval_env()
    oracle = solve_oracle(env, resolution=ORACLE_RESOLUTION, gamma=base.value.gamma)
    dataset = make_dataset(base.env, base.data)
    view = data_view(dataset, base.policy_data)
    extraction = replace(base.extraction, method=ExtractionMethod.AWR, alpha=0.0)

    runs = []
    for representation in config.representations:
        for seed in config.seeds:
            run_config = replace(base, representation=representation, extraction=extraction).with_seed(seed)
            artifact = extract(extraction, None, view, seed, featurizer_for(run_config))
            report = mse_report(
                artifact, oracle, view, env=eval_env, episodes=config.mse_episodes,
                seed=derive_seed(seed, "mse"), step=extraction.steps, run_id=representation,
            )
            run = RepresentationRun(
                representation=representation,
                seed=seed,
                train_mse=report.train_mse,
                val_mse=report.val_mse,
                eval_mse=report.eval_mse,
                score=score_policy(run_config, artifact, extraction.steps),
            )
            runs.append(run)
            logger.info(
                "%s seed %d: mse train %.4f val %.4f eval %.4f, score %.3f",
                representation, seed, run.train_mse, run.val_mse, run.eval_mse, run.score,
            )
            if session is not None:
                session.append("representations", EntryType.DIAGNOSTICS, run.to_dict())
    return RepresentationResult(runs=tuple(runs))
