"""Experiment orchestration: cells, scaling matrices, sweeps and output files."""

from orlab.harness.cells import CellRecord, HyperparameterScore, run_cell
from orlab.harness.config import (
    CoverageConfig,
    DataConfig,
    EnvConfig,
    EvalSweepConfig,
    GridConfig,
    OnlineConfig,
    PathologyConfig,
    RepresentationConfig,
    RunConfig,
)
from orlab.harness.emit import emit_outputs, read_matrices_csv, render_from_csv, render_svg
from orlab.harness.matrix import (
    GradientClass,
    GradientDirection,
    MatrixCell,
    MatrixResult,
    ScalingMatrix,
    behavior_cloning_matrix,
    build_matrix,
    classify_gradient,
    matrix_from_records,
)
from orlab.harness.pathologies import PathologyResult, awr_pathologies
from orlab.harness.representations import RepresentationResult, compare_representations
from orlab.harness.sweeps import EvalSweepResult, OnlineResult, coverage_sweep, eval_sweep, offline_to_online

__all__ = [
    "CellRecord",
    "CoverageConfig",
    "DataConfig",
    "EnvConfig",
    "EvalSweepConfig",
    "EvalSweepResult",
    "GradientClass",
    "GradientDirection",
    "GridConfig",
    "HyperparameterScore",
    "MatrixCell",
    "MatrixResult",
    "OnlineConfig",
    "OnlineResult",
    "PathologyConfig",
    "PathologyResult",
    "RepresentationConfig",
    "RepresentationResult",
    "RunConfig",
    "ScalingMatrix",
    "awr_pathologies",
    "behavior_cloning_matrix",
    "build_matrix",
    "classify_gradient",
    "compare_representations",
    "coverage_sweep",
    "emit_outputs",
    "eval_sweep",
    "matrix_from_records",
    "offline_to_online",
    "read_matrices_csv",
    "render_from_csv",
    "render_svg",
    "run_cell",
]
