"""
Experiment stage: everything that runs many cells or seeds.

Capabilities:
    matrix           Data-scaling matrix per extraction method
                     (matrices.csv, aggregates.csv, one SVG per method).
    sweep-coverage   Scores over (dataset size x sigma_data), same outputs.
    o2o              Offline-to-online MSE tracking (o2o.csv).
    testtime         Vanilla vs SfBC vs OPEX vs TTT (testtime.csv).
    representations  Raw vs tanh-featurized GC-BC (representations.csv).
    pathologies      AWR overfit gap and action spread against DDPG+BC
                     (pathologies.csv).
    plot             Re-render SVGs and aggregates from params["csv"].

Matrix results carry `failed_jobs`; the CLI exits non-zero when it is
positive even though the stage itself succeeded.
"""

from pathlib import Path
from typing import TYPE_CHECKING, Any

from orlab.diagnostics import write_diagnostics_csv
from orlab.harness.config import (
    CoverageConfig,
    EvalSweepConfig,
    GridConfig,
    OnlineConfig,
    PathologyConfig,
    RepresentationConfig,
    config_digest,
)
from orlab.harness.emit import emit_outputs, render_from_csv, write_rows_csv
from orlab.harness.matrix import MatrixResult, build_matrix
from orlab.harness.pathologies import awr_pathologies
from orlab.harness.representations import compare_representations
from orlab.harness.sweeps import coverage_sweep, eval_sweep, offline_to_online
from orlab.stage import Stage
from orlab.stages.common import config_mapping, out_dir
from orlab.types import StageInfo, StageResult

if TYPE_CHECKING:
    from orlab.session import RunSession

TESTTIME_COLUMNS = ("seed", "method", "beta", "score", "best_mode", "mean_q_gain")
REPRESENTATION_COLUMNS = ("representation", "seed", "train_mse", "val_mse", "eval_mse", "score")


def _matrix_summary(result: MatrixResult, files: list[Path]) -> dict[str, Any]:
    return {
        "files": [str(f) for f in files],
        "failed_jobs": result.failed_jobs,
        "aggregates": {m.name: m.summary() for m in result.matrices},
    }


class ExperimentStage(Stage):
    def info(self) -> StageInfo:
        return StageInfo(
            stage_id="experiments_v1",
            name="Experiment harness",
            version="1.0.0",
            capabilities=["matrix", "sweep-coverage", "o2o", "testtime", "representations", "pathologies", "plot"],
            description="Scaling matrices, sweeps and heatmap rendering",
        )

    def invoke(self, capability: str, session: "RunSession", params: dict[str, Any]) -> StageResult:
        handlers = {
            "matrix": self._matrix,
            "sweep-coverage": self._coverage,
            "o2o": self._online,
            "testtime": self._testtime,
            "representations": self._representations,
            "pathologies": self._pathologies,
            "plot": self._plot,
        }
        handler = handlers.get(capability)
        if handler is None:
            return self._unknown_capability(capability)
        return self._guarded(capability, lambda: handler(session, params))

    # =========================================================================
    # CAPABILITIES
    # =========================================================================

    def _matrix(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        config = GridConfig.from_dict(config_mapping(params))
        session.set("experiment_digest", config_digest(config.to_dict()))
        result = build_matrix(config, session)
        files = emit_outputs(out_dir(params), result.matrices)
        return _matrix_summary(result, files)

    def _coverage(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        config = CoverageConfig.from_dict(config_mapping(params))
        session.set("experiment_digest", config_digest(config.to_dict()))
        result = coverage_sweep(config, session)
        files = emit_outputs(out_dir(params), result.matrices)
        return _matrix_summary(result, files)

    def _online(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        config = OnlineConfig.from_dict(config_mapping(params))
        session.set("experiment_digest", config_digest(config.to_dict()))
        result = offline_to_online(config, session)
        rows = [{"run_id": p.phase, **p.to_dict()} for p in result.points]
        path = write_diagnostics_csv(out_dir(params) / "o2o.csv", rows)
        return {"files": [str(path)], **result.to_dict()}

    def _testtime(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        config = EvalSweepConfig.from_dict(config_mapping(params))
        session.set("experiment_digest", config_digest(config.to_dict()))
        result = eval_sweep(config, session)
        path = write_rows_csv(out_dir(params) / "testtime.csv", TESTTIME_COLUMNS, (r.to_dict() for r in result.rows))
        summary: dict[str, Any] = {
            "files": [str(path)],
            "vanilla": result.mean_score("vanilla"),
            "sfbc": result.mean_score("sfbc"),
        }
        for method in ("opex", "ttt"):
            if any(r.method == method for r in result.rows):
                beta, score = result.best_beta(method)
                summary[method] = {"best_beta": beta, "score": score}
        return summary

    def _representations(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        config = RepresentationConfig.from_dict(config_mapping(params))
        session.set("experiment_digest", config_digest(config.to_dict()))
        result = compare_representations(config, session)
        path = write_rows_csv(
            out_dir(params) / "representations.csv", REPRESENTATION_COLUMNS, (r.to_dict() for r in result.runs)
        )
        means = {
            rep: {f: result.mean(rep, f) for f in ("train_mse", "val_mse", "eval_mse", "score")}
            for rep in config.representations
        }
        return {"files": [str(path)], "means": means}

    def _pathologies(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        config = PathologyConfig.from_dict(config_mapping(params))
        session.set("experiment_digest", config_digest(config.to_dict()))
        result = awr_pathologies(config, session)
        path = write_diagnostics_csv(out_dir(params) / "pathologies.csv", result.diagnostic_rows())
        return {
            "files": [str(path)],
            "awr_alpha": config.resolved_awr_alpha,
            "ddpg_alpha": config.resolved_ddpg_alpha,
            **result.summary(),
        }

    def _plot(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        if not params.get("csv"):
            raise KeyError("plot needs csv: path to a matrices.csv")
        files = render_from_csv(params["csv"], out_dir(params))
        return {"files": [str(f) for f in files]}
