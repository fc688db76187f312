"""
CSV and SVG output for harness results.

matrices.csv holds one row per (matrix, cell, seed) with the cell's best
hyperparameter and that seed's score (NaN for a failed seed). Floats are
written with repr(), so read_matrices_csv() rebuilds every matrix bit-exactly
and every aggregate can be recomputed from the file alone.

aggregates.csv holds one row per matrix: the mean over cells and seeds,
both standard-error orderings, the gradient class and the failed-seed count.

Each matrix is also rendered as a self-contained SVG heatmap with one
<rect> per cell and a fixed colour ramp; output depends only on the
matrix, so identical inputs give identical bytes.
"""

import csv
import logging
import xml.etree.ElementTree as ET
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from orlab.harness.matrix import MatrixCell, ScalingMatrix
from orlab.types import ErrorCode, OrlabError

logger = logging.getLogger(__name__)

MATRIX_COLUMNS = (
    "matrix",
    "row_label",
    "row",
    "col_label",
    "col",
    "seed",
    "best_hyperparameter",
    "score",
)

AGGREGATE_COLUMNS = (
    "matrix",
    "aggregate",
    "stderr_cells_then_seeds",
    "stderr_seeds_then_cells",
    "gradient",
    "confidence",
    "failed_seeds",
)

# Low to high; sampled from a perceptually ordered blue-green-yellow ramp.
COLOR_RAMP = ("#440154", "#3b528b", "#21918c", "#5ec962", "#fde725")
MISSING_COLOR = "#bdbdbd"
CELL_SIZE = 64
MARGIN = 80
SVG_NS = "http://www.w3.org/2000/svg"


# =============================================================================
# CSV
# =============================================================================


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float | np.floating):
        return repr(float(value))
    return str(value)


def write_rows_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """Generic CSV writer: fixed column order, repr floats, blank for None."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _fmt(row.get(k)) for k in columns})
    except OSError as exc:
        raise OrlabError(f"cannot write {path}: {exc}", ErrorCode.PERSIST_WRITE_FAILED) from exc
    return path


def matrix_rows(matrix: ScalingMatrix) -> list[dict[str, Any]]:
    rows = []
    for cell in matrix.cells:
        for seed, score in zip(matrix.seeds, cell.seed_scores, strict=True):
            rows.append(
                {
                    "matrix": matrix.name,
                    "row_label": matrix.row_label,
                    "row": cell.row,
                    "col_label": matrix.col_label,
                    "col": cell.col,
                    "seed": seed,
                    "best_hyperparameter": cell.best_hyperparameter,
                    "score": score,
                }
            )
    return rows


def write_matrices_csv(path: str | Path, matrices: Sequence[ScalingMatrix]) -> Path:
    return write_rows_csv(path, MATRIX_COLUMNS, (row for m in matrices for row in matrix_rows(m)))


def write_aggregates_csv(path: str | Path, matrices: Sequence[ScalingMatrix]) -> Path:
    return write_rows_csv(path, AGGREGATE_COLUMNS, (m.summary() for m in matrices))


def _ordered_unique(values: Iterable[Any]) -> list[Any]:
    return list(dict.fromkeys(values))


def read_matrices_csv(path: str | Path) -> list[ScalingMatrix]:
    """
    Rebuild matrices from matrices.csv, in file order.

    Raises:
        OrlabError: PERSIST_FILE_NOT_FOUND, or PERSIST_TRUNCATED when
            a matrix is missing rows.
    """
    path = Path(path)
    if not path.exists():
        raise OrlabError(f"matrix CSV not found: {path}", ErrorCode.PERSIST_FILE_NOT_FOUND)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))

    matrices = []
    for name in _ordered_unique(r["matrix"] for r in rows):
        mrows = [r for r in rows if r["matrix"] == name]
        row_axis = _ordered_unique(float(r["row"]) for r in mrows)
        col_axis = _ordered_unique(float(r["col"]) for r in mrows)
        seeds = _ordered_unique(int(r["seed"]) for r in mrows)
        table = {(float(r["row"]), float(r["col"]), int(r["seed"])): r for r in mrows}
        if len(table) != len(row_axis) * len(col_axis) * len(seeds):
            raise OrlabError(
                f"matrix {name} in {path} is incomplete",
                ErrorCode.PERSIST_TRUNCATED,
                details={"rows": len(table), "expected": len(row_axis) * len(col_axis) * len(seeds)},
            )
        cells = []
        for r in row_axis:
            for c in col_axis:
                first = table[(r, c, seeds[0])]
                cells.append(
                    MatrixCell(
                        row=r,
                        col=c,
                        best_hyperparameter=float(first["best_hyperparameter"]),
                        seed_scores=tuple(float(table[(r, c, s)]["score"]) for s in seeds),
                    )
                )
        matrices.append(
            ScalingMatrix(
                name=name,
                row_label=mrows[0]["row_label"],
                col_label=mrows[0]["col_label"],
                rows=tuple(row_axis),
                cols=tuple(col_axis),
                seeds=tuple(seeds),
                cells=tuple(cells),
            )
        )
    return matrices


# =============================================================================
# SVG
# =============================================================================


def _hex(color: str) -> np.ndarray:
    return np.array([int(color[i : i + 2], 16) for i in (1, 3, 5)], dtype=np.float64)


def ramp_color(t: float) -> str:
    """Colour at position t in [0, 1] along COLOR_RAMP (linear between stops)."""
    if not np.isfinite(t):
        return MISSING_COLOR
    t = min(max(t, 0.0), 1.0)
    pos = t * (len(COLOR_RAMP) - 1)
    i = min(int(pos), len(COLOR_RAMP) - 2)
    frac = pos - i
    rgb = (1.0 - frac) * _hex(COLOR_RAMP[i]) + frac * _hex(COLOR_RAMP[i + 1])
    return "#" + "".join(f"{int(round(v)):02x}" for v in rgb)


def _label(value: float) -> str:
    return f"{value:.4g}"


def render_svg(matrix: ScalingMatrix) -> bytes:
    """
    Heatmap with rows top to bottom in axis order and columns left to right.

    Colours are scaled between the smallest and largest finite cell score;
    a constant matrix is drawn at the middle of the ramp.
    """
    scores = matrix.scores()
    n_rows, n_cols = matrix.shape
    finite = scores[np.isfinite(scores)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 0.0)
    width = MARGIN + n_cols * CELL_SIZE + MARGIN // 2
    height = MARGIN + n_rows * CELL_SIZE + MARGIN

    svg = ET.Element(
        "svg",
        {
            "xmlns": SVG_NS,
            "width": str(width),
            "height": str(height),
            "viewBox": f"0 0 {width} {height}",
            "font-family": "sans-serif",
            "font-size": "11",
        },
    )
    ET.SubElement(svg, "title").text = f"{matrix.name}: {matrix.row_label} x {matrix.col_label}"
    ET.SubElement(svg, "text", {"x": str(MARGIN), "y": "20", "font-size": "14"}).text = matrix.name

    cells = ET.SubElement(svg, "g", {"class": "cells"})
    for i in range(n_rows):
        for j in range(n_cols):
            score = float(scores[i, j])
            t = 0.5 if hi == lo else (score - lo) / (hi - lo)
            x = MARGIN + j * CELL_SIZE
            y = MARGIN + i * CELL_SIZE
            ET.SubElement(
                cells,
                "rect",
                {
                    "x": str(x),
                    "y": str(y),
                    "width": str(CELL_SIZE),
                    "height": str(CELL_SIZE),
                    "fill": ramp_color(t if np.isfinite(score) else float("nan")),
                    "stroke": "#ffffff",
                },
            )
            ET.SubElement(
                svg,
                "text",
                {
                    "x": str(x + CELL_SIZE // 2),
                    "y": str(y + CELL_SIZE // 2 + 4),
                    "text-anchor": "middle",
                    "fill": "#ffffff" if t < 0.6 else "#000000",
                },
            ).text = "failed" if not np.isfinite(score) else _label(score)

    for i, r in enumerate(matrix.rows):
        ET.SubElement(
            svg,
            "text",
            {"x": str(MARGIN - 6), "y": str(MARGIN + i * CELL_SIZE + CELL_SIZE // 2 + 4), "text-anchor": "end"},
        ).text = _label(r)
    for j, c in enumerate(matrix.cols):
        ET.SubElement(
            svg,
            "text",
            {"x": str(MARGIN + j * CELL_SIZE + CELL_SIZE // 2), "y": str(MARGIN - 8), "text-anchor": "middle"},
        ).text = _label(c)
    ET.SubElement(
        svg, "text", {"x": str(MARGIN), "y": str(MARGIN - 28)}
    ).text = f"{matrix.col_label} →"
    ET.SubElement(
        svg, "text", {"x": "8", "y": str(MARGIN + n_rows * CELL_SIZE + 24)}
    ).text = f"{matrix.row_label} ↓   aggregate {_label(matrix.aggregate())}"
    return ET.tostring(svg, encoding="utf-8", xml_declaration=True)


def svg_name(matrix: ScalingMatrix) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in matrix.name) + ".svg"


def write_svg(path: str | Path, matrix: ScalingMatrix) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_bytes(render_svg(matrix))
    except OSError as exc:
        raise OrlabError(f"cannot write {path}: {exc}", ErrorCode.PERSIST_WRITE_FAILED) from exc
    return path


# =============================================================================
# EMIT
# =============================================================================


def emit_outputs(out_dir: str | Path, matrices: Sequence[ScalingMatrix]) -> list[Path]:
    """
    Write matrices.csv, aggregates.csv and one SVG per matrix into out_dir.

    An empty result set still writes both CSVs (header only) and no SVG.
    """
    out_dir = Path(out_dir)
    written = [
        write_matrices_csv(out_dir / "matrices.csv", matrices),
        write_aggregates_csv(out_dir / "aggregates.csv", matrices),
    ]
    written += [write_svg(out_dir / svg_name(m), m) for m in matrices]
    logger.info("wrote %d files to %s", len(written), out_dir)
    return written


def render_from_csv(csv_path: str | Path, out_dir: str | Path) -> list[Path]:
    """Re-render SVG heatmaps (and aggregates) from a stored matrices.csv."""
    matrices = read_matrices_csv(csv_path)
    out_dir = Path(out_dir)
    written = [write_aggregates_csv(out_dir / "aggregates.csv", matrices)]
    written += [write_svg(out_dir / svg_name(m), m) for m in matrices]
    return written
