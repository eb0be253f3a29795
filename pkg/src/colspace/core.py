"""Domain types and the dense linear-algebra kernels the estimators share.

Matrices follow the column-streaming convention: a data matrix is ``N x t``
with one column per arriving observation, and a subspace estimate is an
``N x r`` array with orthonormal columns. Index sets are sorted ``int``
arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RankDeficientError",
    "SingularDesignError",
    "CoherenceUnreachableError",
    "DegenerateGapWarning",
    "PartialMatrix",
    "as_index_set",
    "check_orthonormal",
    "thin_qr",
    "top_r_eigvecs",
    "coherence",
    "row_restrict",
    "sigma_min",
]

RANK_RTOL = 1e-12
ORTHONORMAL_TOL = 1e-10


class RankDeficientError(np.linalg.LinAlgError):
    """Raised when a matrix expected to have full column rank does not."""

    def __init__(self, sigma_r: float, message: str | None = None):
        self.sigma_r = float(sigma_r)
        super().__init__(message or f"matrix is rank deficient (sigma_r={self.sigma_r:.3e})")


class SingularDesignError(np.linalg.LinAlgError):
    """A per-column or per-row least-squares design is (numerically) singular."""

    def __init__(self, index: int, sigma_min: float, axis: str = "column"):
        self.index = int(index)
        self.sigma_min = float(sigma_min)
        self.axis = axis
        super().__init__(
            f"singular design for {axis} {self.index} (sigma_min={self.sigma_min:.3e})"
        )


class CoherenceUnreachableError(RuntimeError):
    def __init__(self, final_coherence: float, target: float):
        self.final_coherence = float(final_coherence)
        self.target = float(target)
        super().__init__(
            f"smooth orthonormalization stopped at coherence {self.final_coherence:.3f} "
            f"> target {self.target:.3f}"
        )


class DegenerateGapWarning(RuntimeWarning):
    """The requested invariant subspace is not unique (tiny eigengap)."""


@dataclass(frozen=True)
class PartialMatrix:
    """Dense values plus a boolean observation mask of the same shape.

    Unobserved slots of ``values`` are never read by the estimators; the
    only sanctioned way to see them as numbers is :meth:`project`, which
    zero-fills them.
    """

    values: np.ndarray
    mask: np.ndarray
    _counts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise ValueError(
                f"values {values.shape} and mask {mask.shape} must be 2-D and the same shape"
            )
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed entries must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "_counts", mask.sum(axis=0))

    @classmethod
    def from_nan(cls, array) -> "PartialMatrix":
        """Build from an array where NaN marks a missing entry."""
        array = np.asarray(array, dtype=float)
        mask = ~np.isnan(array)
        return cls(np.where(mask, array, 0.0), mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column_count(self, j: int) -> int:
        return int(self._counts[j])

    @property
    def column_counts(self) -> np.ndarray:
        return self._counts.copy()

    def __getitem__(self, key):
        i, j = key
        if not self.mask[i, j]:
            raise KeyError(f"entry ({i}, {j}) is not observed")
        return self.values[i, j]

    def project(self) -> np.ndarray:
        """Zero-filled copy: observed entries kept, all others set to 0."""
        return np.where(self.mask, self.values, 0.0)

    def to_nan(self) -> np.ndarray:
        return np.where(self.mask, self.values, np.nan)

    def columns(self, cols) -> "PartialMatrix":
        return PartialMatrix(self.values[:, cols], self.mask[:, cols])

    def with_mask(self, mask) -> "PartialMatrix":
        """Restrict to a sub-mask; every entry of ``mask`` must already be observed."""
        mask = np.asarray(mask, dtype=bool)
        if np.any(mask & ~self.mask):
            raise ValueError("new mask reveals entries that are not observed")
        return PartialMatrix(self.values, mask)


def as_index_set(indices, n: int) -> np.ndarray:
    """Validate and return a strictly increasing index array within ``[0, n)``."""
    idx = np.asarray(indices, dtype=np.intp).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"indices must lie in [0, {n})")
    out = np.unique(idx)
    if out.size != idx.size:
        raise ValueError("index set contains duplicates")
    return out


def check_orthonormal(X, tol: float = 1e-8, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] > X.shape[0]:
        raise ValueError(f"{name} must be a tall 2-D array, got shape {X.shape}")
    dev = np.max(np.abs(X.T @ X - np.eye(X.shape[1]))) if X.shape[1] else 0.0
    if dev > tol:
        raise ValueError(f"{name} is not orthonormal (max |X^T X - I| = {dev:.2e})")
    return X


def thin_qr(A):
    """Thin QR with a nonnegative diagonal in ``R``.

    Raises
    ------
    RankDeficientError
        If ``sigma_r(A) <= 1e-12 * sigma_1(A)``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] > A.shape[0]:
        raise ValueError(f"thin_qr needs a tall 2-D array, got shape {A.shape}")
    s = np.linalg.svd(A, compute_uv=False)
    if s.size and (s[0] == 0 or s[-1] <= RANK_RTOL * s[0]):
        raise RankDeficientError(s[-1])
    Q, R = np.linalg.qr(A)
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def top_r_eigvecs(C, r: int) -> np.ndarray:
    """Orthonormal basis for the eigenvectors of the ``r`` largest eigenvalues.

    Columns are ordered by descending eigenvalue. A ``DegenerateGapWarning``
    is emitted when ``lambda_r - lambda_{r+1} < 1e-12 |lambda_1|``; the
    basis is still returned.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if C.ndim != 2 or C.shape[1] != n:
        raise ValueError("C must be square")
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= N, got r={r}, N={n}")
    asym = np.max(np.abs(C - C.T)) if n else 0.0
    if asym > 1e-9:
        raise ValueError(f"C is not symmetric (max asymmetry {asym:.2e})")
    vals, vecs = np.linalg.eigh((C + C.T) / 2)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    if r < n and vals[r - 1] - vals[r] < RANK_RTOL * abs(vals[0]):
        warnings.warn(
            f"eigengap lambda_{r} - lambda_{r + 1} = {vals[r - 1] - vals[r]:.2e} is degenerate",
            DegenerateGapWarning,
            stacklevel=2,
        )
    return np.ascontiguousarray(vecs[:, :r])


def coherence(V) -> float:
    """``max_m (M/r) ||e_m^T V||^2`` for an orthonormal ``M x r`` matrix."""
    V = check_orthonormal(V, tol=1e-8, name="V")
    M, r = V.shape
    return float(M / r * np.max(np.einsum("ij,ij->i", V, V)))


def row_restrict(X, S) -> np.ndarray:
    """Rows of ``X`` listed in ``S`` (in the given order)."""
    X = np.asarray(X, dtype=float)
    S = np.asarray(S, dtype=np.intp).ravel()
    if S.size and (S.min() < 0 or S.max() >= X.shape[0]):
        raise IndexError(f"row index out of range [0, {X.shape[0]})")
    return X[S]


def sigma_min(A) -> float:
    """Smallest of the first ``r = ncols`` singular values (0 when rows < cols)."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] < A.shape[1]:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[-1])
