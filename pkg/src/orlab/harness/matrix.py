"""
Data-scaling matrices.

A matrix has policy-data sizes on its rows and value-data sizes on its
columns, so a vertical colour gradient means the score mostly follows the
amount of policy data. Each cell keeps the per-seed scores of the
hyperparameter with the best mean over seeds.

Every aggregate is a pure function of the stored per-seed scores, so a
matrix read back from CSV reproduces the same numbers.
"""

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np

from orlab.data.dataset import Dataset
from orlab.harness.cells import CellRecord, make_dataset, run_cell, train_cell_value
from orlab.harness.config import GridConfig, worker_count
from orlab.policy.extract import ExtractionMethod
from orlab.types import EntryType, ErrorCode, OrlabError

if TYPE_CHECKING:
    from orlab.session import RunSession

logger = logging.getLogger(__name__)

DIAGONAL_TOLERANCE = 0.25
BC_MATRIX = "bc"


# =============================================================================
# GRADIENT CLASSIFICATION
# =============================================================================


class GradientDirection(str, Enum):
    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"
    DIAGONAL = "diagonal"


@dataclass(frozen=True)
class GradientClass:
    """
    Which data axis drives the score.

    Attributes:
        direction: vertical (policy data), horizontal (value data) or
            diagonal (both about equally).
        confidence: In [0, 1]; 0 for a constant matrix.
        vertical: Mean |finite difference| along the policy-data axis.
        horizontal: Mean |finite difference| along the value-data axis.
    """

    direction: GradientDirection
    confidence: float
    vertical: float
    horizontal: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "direction": self.direction.value,
            "confidence": self.confidence,
            "vertical": self.vertical,
            "horizontal": self.horizontal,
        }


def _mean_abs_diff(scores: np.ndarray, axis: int) -> float:
    if scores.shape[axis] < 2:
        return 0.0
    diffs = np.abs(np.diff(scores, axis=axis))
    if np.all(np.isnan(diffs)):
        return 0.0
    return float(np.nanmean(diffs))


def classify_gradient(scores: np.ndarray) -> GradientClass:
    """
    Classify a (policy sizes x value sizes) score matrix.

    The two axis strengths are diagonal when within DIAGONAL_TOLERANCE of
    the larger one.
    """
    scores = np.asarray(scores, dtype=np.float64)
    vertical = _mean_abs_diff(scores, 0)
    horizontal = _mean_abs_diff(scores, 1)
    strongest = max(vertical, horizontal)
    if strongest == 0.0:
        return GradientClass(GradientDirection.DIAGONAL, 0.0, vertical, horizontal)
    imbalance = abs(vertical - horizontal) / strongest
    if imbalance <= DIAGONAL_TOLERANCE:
        return GradientClass(GradientDirection.DIAGONAL, 1.0 - imbalance, vertical, horizontal)
    direction = GradientDirection.VERTICAL if vertical > horizontal else GradientDirection.HORIZONTAL
    return GradientClass(direction, imbalance, vertical, horizontal)


# =============================================================================
# MATRIX
# =============================================================================


@dataclass(frozen=True)
class MatrixCell:
    """
    One matrix entry.

    seed_scores is aligned with the matrix seeds; NaN marks a failed seed.
    """

    row: float
    col: float
    best_hyperparameter: float
    seed_scores: tuple[float, ...]

    @property
    def score(self) -> float:
        finite = [s for s in self.seed_scores if not np.isnan(s)]
        return float(np.mean(finite)) if finite else float("nan")

    @property
    def failed_seeds(self) -> int:
        return sum(1 for s in self.seed_scores if np.isnan(s))


@dataclass(frozen=True)
class ScalingMatrix:
    """
    Scores over two data axes.

    Attributes:
        name: Matrix label (extraction method, or "coverage-<method>").
        row_label: Name of the row axis (policy_data, size, ...).
        col_label: Name of the column axis (value_data, sigma_data, ...).
        rows: Row axis values.
        cols: Column axis values.
        seeds: Seeds every cell aggregates.
        cells: Row-major cells, len(rows) * len(cols) of them.
    """

    name: str
    row_label: str
    col_label: str
    rows: tuple[float, ...]
    cols: tuple[float, ...]
    seeds: tuple[int, ...]
    cells: tuple[MatrixCell, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(float(r) for r in self.rows))
        object.__setattr__(self, "cols", tuple(float(c) for c in self.cols))
        if len(self.cells) != len(self.rows) * len(self.cols):
            raise ValueError(
                f"matrix needs {len(self.rows) * len(self.cols)} cells, got {len(self.cells)}"
            )
        if any(len(c.seed_scores) != len(self.seeds) for c in self.cells):
            raise ValueError("every cell must carry one score per seed")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.cols)

    def cell(self, i: int, j: int) -> MatrixCell:
        return self.cells[i * len(self.cols) + j]

    def scores(self) -> np.ndarray:
        """Cell means, shape (rows, cols)."""
        return np.array([c.score for c in self.cells], dtype=np.float64).reshape(self.shape)

    def seed_table(self) -> np.ndarray:
        """Per-seed scores, shape (cells, seeds)."""
        return np.array([c.seed_scores for c in self.cells], dtype=np.float64).reshape(len(self.cells), len(self.seeds))

    def aggregate(self) -> float:
        """Mean over every cell and seed."""
        table = self.seed_table()
        return float(np.nanmean(table)) if np.any(~np.isnan(table)) else float("nan")

    def stderr_cells_then_seeds(self) -> float:
        """Average over cells per seed, then the standard error across seeds."""
        table = self.seed_table()
        per_seed = np.array([np.nanmean(col) for col in table.T if np.any(~np.isnan(col))])
        if len(per_seed) < 2:
            return 0.0
        return float(np.std(per_seed, ddof=1) / np.sqrt(len(per_seed)))

    def stderr_seeds_then_cells(self) -> float:
        """Standard error across seeds per cell, then averaged over cells."""
        errs = []
        for row in self.seed_table():
            finite = row[~np.isnan(row)]
            errs.append(float(np.std(finite, ddof=1) / np.sqrt(len(finite))) if len(finite) > 1 else 0.0)
        return float(np.mean(errs)) if errs else 0.0

    @property
    def failed_seeds(self) -> int:
        return sum(c.failed_seeds for c in self.cells)

    def gradient(self) -> GradientClass:
        return classify_gradient(self.scores())

    def summary(self) -> dict[str, Any]:
        gradient = self.gradient()
        return {
            "matrix": self.name,
            "aggregate": self.aggregate(),
            "stderr_cells_then_seeds": self.stderr_cells_then_seeds(),
            "stderr_seeds_then_cells": self.stderr_seeds_then_cells(),
            "gradient": gradient.direction.value,
            "confidence": gradient.confidence,
            "failed_seeds": self.failed_seeds,
        }


def matrix_from_records(
    name: str,
    row_label: str,
    col_label: str,
    rows: Sequence[float],
    cols: Sequence[float],
    seeds: Sequence[int],
    records: Sequence[CellRecord],
    coordinates: Callable[[CellRecord], tuple[float, float]],
    hyperparameters: Sequence[float] | None = None,
) -> ScalingMatrix:
    """
    Assemble a matrix from per-seed cell records.

    The best hyperparameter of a cell maximizes the mean score over its
    successful seeds; ties go to the earliest grid entry. `hyperparameters`
    restricts the choice to part of the grid.

    Raises:
        OrlabError: HARNESS_ALL_SEEDS_FAILED if some cell has no successful
            seed; details list the errors of that cell.
    """
    by_cell: dict[tuple[float, float], dict[int, CellRecord]] = {}
    for record in records:
        r, c = coordinates(record)
        by_cell.setdefault((float(r), float(c)), {})[record.seed] = record

    cells = []
    for r in rows:
        for c in cols:
            seed_records = by_cell.get((float(r), float(c)), {})
            good = [seed_records[s] for s in seeds if s in seed_records and seed_records[s].ok]
            if not good:
                raise OrlabError(
                    f"every seed failed in {name} cell ({row_label}={r}, {col_label}={c})",
                    ErrorCode.HARNESS_ALL_SEEDS_FAILED,
                    details={
                        "matrix": name,
                        "row": r,
                        "col": c,
                        "errors": [rec.error for rec in seed_records.values()],
                    },
                )
            grid = (
                [float(h) for h in hyperparameters]
                if hyperparameters is not None
                else [entry.hyperparameter for entry in good[0].scores]
            )
            means = [float(np.mean([rec.score_for(h) for rec in good])) for h in grid]
            best = grid[int(np.argmax(means))]
            seed_scores = tuple(
                seed_records[s].score_for(best) if s in seed_records and seed_records[s].ok else float("nan")
                for s in seeds
            )
            cells.append(MatrixCell(row=float(r), col=float(c), best_hyperparameter=best, seed_scores=seed_scores))
    return ScalingMatrix(
        name=name,
        row_label=row_label,
        col_label=col_label,
        rows=tuple(rows),
        cols=tuple(cols),
        seeds=tuple(seeds),
        cells=tuple(cells),
    )



def behavior_cloning_matrix(
    policy_sizes: Sequence[float],
    value_sizes: Sequence[float],
    seeds: Sequence[int],
    records: Sequence[CellRecord],
) -> ScalingMatrix | None:
    """
    AWR at alpha 0 ignores the value function and clones the data.

    Reads the alpha = 0 scores already stored in the AWR records, so the
    baseline costs no extra training. None when no successful AWR record
    has that grid entry.
    """
    awr = [r for r in records if r.method == ExtractionMethod.AWR.value]
    good = [r for r in awr if r.ok]
    if not good or not all(any(e.hyperparameter == 0.0 for e in r.scores) for r in good):
        return None
    return matrix_from_records(
        BC_MATRIX,
        "policy_data",
        "value_data",
        policy_sizes,
        value_sizes,
        seeds,
        awr,
        lambda r: (float(r.policy_size or 0), float(r.value_size or 0)),
        hyperparameters=(0.0,),
    )


# =============================================================================
# BUILD
# =============================================================================


@dataclass(frozen=True)
class MatrixResult:
    matrices: tuple[ScalingMatrix, ...]
    records: tuple[CellRecord, ...]

    @property
    def failed_jobs(self) -> int:
        return sum(1 for r in self.records if not r.ok)

    def matrix(self, name: str) -> ScalingMatrix:
        for m in self.matrices:
            if m.name == name:
                return m
        raise KeyError(name)


def record_key(record: CellRecord) -> tuple[str, float, float, float, int]:
    return (
        record.method,
        float(record.extra.get("sigma_data", -1.0)),
        float(record.value_size or 0),
        float(record.policy_size or 0),
        record.seed,
    )


def run_jobs(jobs: Sequence[Callable[[], list[CellRecord]]], workers: int) -> list[CellRecord]:
    """Run independent jobs, serially or on a thread pool; results sorted by cell key."""
    if workers <= 1:
        results = [job() for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: job(), jobs))
    return sorted((r for batch in results for r in batch), key=record_key)


def record_cells(session: "RunSession | None", records: Sequence[CellRecord]) -> None:
    if session is None:
        return
    for record in records:
        session.append(
            source="harness",
            entry_type=EntryType.CELL_COMPLETED if record.ok else EntryType.CELL_FAILED,
            content=record.to_dict(),
        )


def _value_job(config: GridConfig, dataset: Dataset, value_size: int, seed: int) -> list[CellRecord]:
    """One value function, then every (method, policy size) cell that shares it."""
    cells = [
        config.run_config(method, value_size, policy_size, seed)
        for method in config.methods
        for policy_size in config.policy_sizes
    ]
    try:
        value = train_cell_value(cells[0], dataset)
    except OrlabError as exc:
        logger.warning("value training failed for V=%d seed=%d: %s", value_size, seed, exc)
        return [CellRecord.failed(cell, exc) for cell in cells]
    records = []
    for cell in cells:
        try:
            records.append(run_cell(cell, dataset, value))
        except OrlabError as exc:
            logger.warning("cell failed (%s V=%d P=%s seed=%d): %s", cell.extraction.method.value, value_size, cell.policy_data, seed, exc)
            records.append(CellRecord.failed(cell, exc))
    return records


def build_matrix(
    config: GridConfig,
    session: "RunSession | None" = None,
    workers: int | None = None,
    dataset: Dataset | None = None,
) -> MatrixResult:
    """
    Fill one scaling matrix per extraction method, plus the "bc" matrix
    when AWR ran with alpha = 0 in its grid.

    Jobs are (value size, seed) pairs: each trains a value function once and
    runs every method and policy size against it. Results are collected in
    a fixed order, so serial and parallel runs produce identical records.

    Args:
        config: Axes, methods, seeds and the base run configuration.
        session: Receives one CELL_COMPLETED / CELL_FAILED entry per record.
        workers: Pool size (defaults to ORLAB_WORKERS, else 1).
        dataset: Shared dataset; generated from config.base.data if None.

    Raises:
        OrlabError: HARNESS_ALL_SEEDS_FAILED when a cell has no successful
            seed (records are written to the session first).
    """
    workers = workers or worker_count()
    if dataset is None:
        dataset = make_dataset(
            config.base.env, config.base.data, max(config.base.data.n_transitions, config.largest_size)
        )
    jobs = [
        (lambda v=v, s=s: _value_job(config, dataset, v, s))
        for v in config.value_sizes
        for s in config.seeds
    ]
    logger.info(
        "building %d matrices of %dx%d cells over %d seeds with %d workers",
        len(config.methods), len(config.policy_sizes), len(config.value_sizes), len(config.seeds), workers,
    )
    records = run_jobs(jobs, workers)
    record_cells(session, records)

    matrices = tuple(
        matrix_from_records(
            method.value,
            "policy_data",
            "value_data",
            config.policy_sizes,
            config.value_sizes,
            config.seeds,
            [r for r in records if r.method == method.value],
            lambda r: (float(r.policy_size or 0), float(r.value_size or 0)),
        )
        for method in config.methods
    )
    bc = behavior_cloning_matrix(config.policy_sizes, config.value_sizes, config.seeds, records)
    if bc is not None:
        matrices += (bc,)
    for m in matrices:
        logger.info("%s aggregate %.4f, gradient %s", m.name, m.aggregate(), m.gradient().direction.value)
    return MatrixResult(matrices=matrices, records=tuple(records))
