"""Synthetic ground truth, CSV I/O for partially observed matrices, missingness filtering."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PartialMatrix, top_r_eigvecs

__all__ = [
    "GroundTruthModel",
    "gen_ground_truth",
    "gen_column",
    "gen_columns",
    "read_partial_csv",
    "write_partial_csv",
    "filter_by_missingness",
    "zero_fill_basis",
]

_MISSING = {"", "nan", "NaN", "NAN"}


@dataclass(frozen=True)
class GroundTruthModel:
    """Columns are ``X0 @ w + z`` with ``w ~ N(0, I_r)`` and ``z ~ N(0, sigma_z^2 I_N)``."""

    X0: np.ndarray
    sigma_z: float = 0.0

    def __post_init__(self):
        if self.sigma_z < 0:
            raise ValueError("sigma_z must be >= 0")

    @property
    def N(self) -> int:
        return self.X0.shape[0]

    @property
    def r(self) -> int:
        return self.X0.shape[1]

    def column_space(self) -> np.ndarray:
        """Orthonormal basis of ``span(X0)`` (its left singular vectors)."""
        U, _, _ = np.linalg.svd(self.X0, full_matrices=False)
        return U


def gen_ground_truth(
    N: int,
    r: int,
    distribution: str = "cauchy",
    rng: np.random.Generator | None = None,
    sigma_z: float = 0.0,
    retries: int = 5,
) -> GroundTruthModel:
    """Draw ``X0`` with i.i.d. standard Cauchy (default) or Gaussian entries."""
    if not 1 <= r <= N:
        raise ValueError(f"need 1 <= r <= N, got r={r}, N={N}")
    rng = np.random.default_rng() if rng is None else rng
    for _ in range(retries + 1):
        if distribution == "cauchy":
            X0 = rng.standard_cauchy((N, r))
        elif distribution == "gaussian":
            X0 = rng.standard_normal((N, r))
        else:
            raise ValueError(f"unknown distribution {distribution!r}")
        s = np.linalg.svd(X0, compute_uv=False)
        if np.all(np.isfinite(s)) and s[-1] > 1e-12 * s[0]:
            return GroundTruthModel(X0, sigma_z)
    raise np.linalg.LinAlgError(f"X0 stayed rank deficient after {retries} retries")


def gen_column(model: GroundTruthModel, rng: np.random.Generator):
    """One column ``y`` and its factor ``w``."""
    w = rng.standard_normal(model.r)
    y = model.X0 @ w + model.sigma_z * rng.standard_normal(model.N)
    return y, w


def gen_columns(model: GroundTruthModel, t: int, rng: np.random.Generator):
    """``t`` columns at once: ``(Y, W)`` with ``Y`` of shape ``N x t`` and ``W`` ``t x r``."""
    W = rng.standard_normal((t, model.r))
    Z = model.sigma_z * rng.standard_normal((model.N, t))
    return model.X0 @ W.T + Z, W


def _parse_cell(cell: str, line: int, col: int) -> float:
    cell = cell.strip()
    if cell in _MISSING:
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise ValueError(f"line {line}, column {col}: cannot parse {cell!r} as a number") from None


def read_partial_csv(path, header: bool = False) -> PartialMatrix:
    """Parse a rectangular CSV; empty cells and ``NaN`` are missing entries."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text, newline=""))
    rows, width = [], None
    for lineno, row in enumerate(reader, start=1):
        if header and lineno == 1:
            continue
        if not row:
            continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValueError(f"ragged CSV: row {len(rows)} (line {lineno}) has {len(row)} cells, expected {width}")
        rows.append([_parse_cell(c, lineno, i) for i, c in enumerate(row)])
    if not rows:
        raise ValueError(f"{path} contains no data rows")
    return PartialMatrix.from_nan(np.array(rows, dtype=float))


def write_partial_csv(Y: PartialMatrix, path, header: list[str] | None = None) -> None:
    """Write with missing entries as empty cells; values use ``repr`` so they round-trip."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header is not None:
            writer.writerow(header)
        for vals, obs in zip(Y.values, Y.mask):
            writer.writerow([repr(float(v)) if o else "" for v, o in zip(vals, obs)])


def filter_by_missingness(Y: PartialMatrix, max_missing_fraction: float = 0.5):
    """Drop rows, then columns, whose missing fraction is at least the threshold, until stable.

    A row or column survives only if its fraction of missing entries is
    strictly below ``max_missing_fraction``.

    Returns
    -------
    (PartialMatrix, kept_rows, kept_cols)
    """
    if not 0 < max_missing_fraction <= 1:
        raise ValueError("max_missing_fraction must lie in (0, 1]")
    rows = np.arange(Y.shape[0])
    cols = np.arange(Y.shape[1])
    while True:
        mask = Y.mask[np.ix_(rows, cols)]
        if mask.size == 0:
            raise ValueError("every row or column was filtered out")
        row_ok = (1 - mask.mean(axis=1)) < max_missing_fraction
        rows = rows[row_ok]
        mask = mask[row_ok]
        if mask.size == 0:
            raise ValueError("every row or column was filtered out")
        col_ok = (1 - mask.mean(axis=0)) < max_missing_fraction
        cols = cols[col_ok]
        if row_ok.all() and col_ok.all():
            break
    idx = np.ix_(rows, cols)
    return PartialMatrix(Y.values[idx], Y.mask[idx]), rows, cols


def zero_fill_basis(Y: PartialMatrix, r: int) -> np.ndarray:
    """Reference basis from data with gaps: top-``r`` eigenvectors of ``P(Y) P(Y)^T``."""
    P = Y.project()
    return top_r_eigvecs(P @ P.T, r)
