"""
AWR failure modes measured against DDPG+BC.

- Overfitting: on the smallest cell, AWR at its highest alpha keeps
  lowering training loss while validation loss climbs; the gap
  (val - train) is tracked per logged step, along with the AWR effective
  sample size.
- Action spread: on chainrun, AWR actions stay inside the range of the
  dataset actions while DDPG+BC with a weak BC term spreads beyond it.

Both comparisons share seeds, value functions and datasets between the
two methods.
"""

import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any

import numpy as np

from orlab.data.dataset import Dataset
from orlab.diagnostics import action_spread, overfit_gap, rollout_states
from orlab.harness.cells import data_view, featurizer_for, make_dataset, score_policy, train_cell_value
from orlab.harness.config import PathologyConfig, RunConfig
from orlab.policy.extract import ExtractionMethod, PolicyArtifact, extract
from orlab.seeding import derive_seed
from orlab.types import EntryType
from orlab.value.trainer import FrozenValue

if TYPE_CHECKING:
    from orlab.session import RunSession

logger = logging.getLogger(__name__)

COMPARED_METHODS = (ExtractionMethod.AWR, ExtractionMethod.DDPG_BC)


@dataclass(frozen=True)
class GapCurve:
    """Loss curve of one extraction run on the smallest cell."""

    method: str
    alpha: float
    seed: int
    rows: tuple[dict[str, float], ...]

    @property
    def gaps(self) -> np.ndarray:
        return overfit_gap(self.rows)

    @property
    def final_gap(self) -> float:
        return float(self.gaps[-1, 1])

    @property
    def gap_rise(self) -> float:
        """Change of the gap between the first and the last logged step."""
        gaps = self.gaps[:, 1]
        return float(gaps[-1] - gaps[0])

    def diagnostic_rows(self) -> list[dict[str, Any]]:
        run_id = f"{self.method}-seed{self.seed}"
        gaps = self.gaps[:, 1]
        return [{"run_id": run_id, **row, "overfit_gap": gap} for row, gap in zip(self.rows, gaps, strict=True)]


@dataclass(frozen=True)
class SpreadRow:
    """Action spread of one policy on its own evaluation states."""

    method: str
    alpha: float
    seed: int
    step: int
    spread_std: float
    outside_hull: float | None
    n_states: int
    score: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "alpha": self.alpha,
            "seed": self.seed,
            "step": self.step,
            "spread_std": self.spread_std,
            "outside_hull": self.outside_hull,
            "n_states": self.n_states,
            "score": self.score,
        }


@dataclass(frozen=True)
class PathologyResult:
    curves: tuple[GapCurve, ...]
    spreads: tuple[SpreadRow, ...]

    def mean_final_gap(self, method: str) -> float:
        values = [c.final_gap for c in self.curves if c.method == method]
        return float(np.mean(values)) if values else float("nan")

    def mean_gap_rise(self, method: str) -> float:
        values = [c.gap_rise for c in self.curves if c.method == method]
        return float(np.mean(values)) if values else float("nan")

    def mean_spread(self, method: str) -> float:
        values = [s.spread_std for s in self.spreads if s.method == method]
        return float(np.mean(values)) if values else float("nan")

    def diagnostic_rows(self) -> list[dict[str, Any]]:
        """Curve rows, then one row per spread run, in DIAGNOSTIC_COLUMNS shape."""
        rows = [row for curve in self.curves for row in curve.diagnostic_rows()]
        for s in self.spreads:
            rows.append({
                "run_id": f"spread-{s.method}-seed{s.seed}",
                "step": s.step,
                "spread_std": s.spread_std,
                "outside_hull": s.outside_hull,
                "score": s.score,
            })
        return rows

    def summary(self) -> dict[str, Any]:
        return {
            method.value: {
                "final_gap": self.mean_final_gap(method.value),
                "gap_rise": self.mean_gap_rise(method.value),
                "spread_std": self.mean_spread(method.value),
            }
            for method in COMPARED_METHODS
        }


def _extract(
    config: RunConfig,
    method: ExtractionMethod,
    alpha: float,
    value: FrozenValue,
    dataset: Dataset,
) -> PolicyArtifact:
    extraction = replace(config.extraction, method=method).with_hyperparameter(alpha)
    return extract(extraction, value, data_view(dataset, config.policy_data), config.seed, featurizer_for(config))


def awr_pathologies(config: PathologyConfig, session: "RunSession | None" = None) -> PathologyResult:
    """
    Overfit gap on the smallest cell and action spread on the spread env.

    Per seed one value function is trained for each environment and shared
    by both methods.

    Raises:
        OrlabError: Propagated from training; DIAG_MISSING_VALIDATION when
            the policy-data view holds no validation trajectory, and
            DIAG_TOO_FEW_STATES when evaluation rollouts are too short.
    """
    alphas = {
        ExtractionMethod.AWR: config.resolved_awr_alpha,
        ExtractionMethod.DDPG_BC: config.resolved_ddpg_alpha,
    }
    base = config.base
    spread_base = replace(base, env=config.spread_env, value_data=None, policy_data=None, representation="raw")
    logger.info(
        "pathologies: AWR alpha %s vs DDPG+BC alpha %s over %d seeds",
        alphas[ExtractionMethod.AWR], alphas[ExtractionMethod.DDPG_BC], len(config.seeds),
    )

    dataset = make_dataset(base.env, base.data)
    curves = []
    for seed in config.seeds:
        cell = base.with_seed(seed)
        value = train_cell_value(cell, dataset)
        for method in COMPARED_METHODS:
            artifact = _extract(cell, method, alphas[method], value, dataset)
            curve = GapCurve(method.value, alphas[method], seed, tuple(artifact.curves))
            curves.append(curve)
            logger.info("%s seed %d: overfit gap %.4f (rise %.4f)", method.value, seed, curve.final_gap, curve.gap_rise)
            if session is not None:
                session.append(
                    "pathologies",
                    EntryType.DIAGNOSTICS,
                    {"method": method.value, "seed": seed, "final_gap": curve.final_gap, "gap_rise": curve.gap_rise},
                )

    spread_env = config.spread_env.eval_env()
    spread_data = make_dataset(spread_base.env, spread_base.data)
    spreads = []
    for seed in config.seeds:
        cell = spread_base.with_seed(seed)
        value = train_cell_value(cell, spread_data)
        for method in COMPARED_METHODS:
            artifact = _extract(cell, method, alphas[method], value, spread_data)
            states, goals = rollout_states(
                spread_env, artifact.mean_action, config.spread_episodes, derive_seed(seed, "spread")
            )
            spread = action_spread(artifact, states, goals, view=spread_data.view())
            row = SpreadRow(
                method=method.value,
                alpha=alphas[method],
                seed=seed,
                step=cell.extraction.steps,
                spread_std=spread.mean_std,
                outside_hull=spread.outside_hull,
                n_states=spread.n_states,
                score=score_policy(cell, artifact, cell.extraction.steps),
            )
            spreads.append(row)
            logger.info(
                "%s seed %d: action std %.4f, outside hull %s", method.value, seed, row.spread_std, row.outside_hull
            )
            if session is not None:
                session.append("pathologies", EntryType.DIAGNOSTICS, row.to_dict())

    return PathologyResult(curves=tuple(curves), spreads=tuple(spreads))
