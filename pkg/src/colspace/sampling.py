"""Row selection for each arriving column and subset-quality quantities.

Two selection rules are provided for the rows used to fit a column's
coefficients: uniformly at random, or actively, by picking the rows of the
current basis whose restriction has the largest smallest singular value.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import as_index_set

__all__ = [
    "SamplingBudget",
    "SubsetQuality",
    "uniform_subset",
    "uniform_subset_excluding",
    "active_subset",
    "greedy_removal",
    "sigma_star",
    "subset_quality",
    "MAX_EXHAUSTIVE_SUBSETS",
]

MAX_EXHAUSTIVE_SUBSETS = 10**6
_TIE_TOL = 1e-12
_CHUNK = 4096


@dataclass(frozen=True)
class SamplingBudget:
    """Per-column observation budget: ``k1`` rows to fit ``w``, ``k2`` to fit ``X``."""

    k1: int
    k2: int
    N: int

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 1:
            raise ValueError(f"need k1 >= 0 and k2 >= 1, got k1={self.k1}, k2={self.k2}")
        if self.k1 + self.k2 > self.N:
            raise ValueError(f"k1 + k2 = {self.k1 + self.k2} exceeds N = {self.N}")

    @property
    def total(self) -> int:
        return self.k1 + self.k2

    def validate(self, r: int, active: bool = False) -> "SamplingBudget":
        if active and self.k1 < r:
            raise ValueError(f"active sampling needs k1 >= r ({self.k1} < {r})")
        return self


@dataclass(frozen=True)
class SubsetQuality:
    q1: float
    q1_tilde: float


def uniform_subset(N: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """A size-``k`` subset of ``range(N)``, uniform over all such subsets, sorted."""
    if not 0 <= k <= N:
        raise ValueError(f"cannot draw {k} distinct rows out of {N}")
    return np.sort(rng.choice(N, size=k, replace=False))


def uniform_subset_excluding(N: int, k: int, excluded, rng: np.random.Generator) -> np.ndarray:
    excluded = as_index_set(excluded, N)
    pool = np.setdiff1d(np.arange(N), excluded, assume_unique=True)
    if k > pool.size:
        raise ValueError(f"only {pool.size} rows remain after exclusion, cannot draw {k}")
    return np.sort(rng.choice(pool, size=k, replace=False))


def _check_count(N: int, k: int, cap: int) -> None:
    n = math.comb(N, k)
    if n > cap:
        raise ValueError(
            f"C({N},{k}) = {n} subsets exceeds the exhaustive cap {cap}; use mode='greedy'"
        )


def _subset_sigmas(X: np.ndarray, k: int):
    """Yield ``(subsets, sigma_r)`` chunks over all size-k row subsets in lexicographic order."""
    combos = itertools.combinations(range(X.shape[0]), k)
    while True:
        chunk = np.array(list(itertools.islice(combos, _CHUNK)), dtype=np.intp)
        if chunk.size == 0:
            return
        s = np.linalg.svd(X[chunk], compute_uv=False)
        yield chunk, s[:, X.shape[1] - 1] if k >= X.shape[1] else np.zeros(len(chunk))


def _exhaustive(X: np.ndarray, k: int, cap: int) -> np.ndarray:
    _check_count(X.shape[0], k, cap)
    best_val, best = -np.inf, None
    for chunk, vals in _subset_sigmas(X, k):
        i = int(np.argmax(vals))
        # first strictly-better value wins; near-ties keep the earlier subset
        if vals[i] > best_val + _TIE_TOL:
            i = int(np.flatnonzero(vals >= vals[i] - _TIE_TOL)[0])
            best_val, best = vals[i], chunk[i]
    return best.copy()


def greedy_removal(X, k: int) -> np.ndarray:
    """Greedy backward elimination of rows keeping ``tr((X_S^T X_S)^{-1})`` small.

    Starting from all rows, repeatedly drop the row whose removal increases
    the trace of the inverse Gram matrix the least. For orthonormal ``X`` the
    kept rows satisfy ``sigma_r(X_S)^2 >= (k - r + 1) / (r (N - r + 1))``:
    at size ``n`` some row raises the trace by at most a factor
    ``(n - r + 1)/(n - r)``, and the product telescopes from ``tr = r``.
    """
    X = np.asarray(X, dtype=float)
    N, r = X.shape
    if k < r or k > N:
        raise ValueError(f"need r <= k <= N, got r={r}, k={k}, N={N}")
    keep = np.arange(N)
    gram = X.T @ X
    for _ in range(N - k):
        Xs = X[keep]
        try:
            ginv = np.linalg.inv(gram)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("row Gram matrix became singular during greedy removal") from exc
        B = Xs @ ginv
        lev = np.einsum("ij,ij->i", B, Xs)
        growth = np.einsum("ij,ij->i", B, B)
        slack = 1.0 - lev
        with np.errstate(divide="ignore", invalid="ignore"):
            cost = np.where(slack > 1e-12, growth / slack, np.inf)
        j = int(np.argmin(cost))
        if not np.isfinite(cost[j]):
            raise np.linalg.LinAlgError("every remaining row is essential; cannot remove more")
        gram = gram - np.outer(Xs[j], Xs[j])
        keep = np.delete(keep, j)
    return keep


def active_subset(X, k1: int, mode: str = "greedy", cap: int = MAX_EXHAUSTIVE_SUBSETS) -> np.ndarray:
    """Choose ``k1`` rows of ``X`` with a large smallest singular value.

    Parameters
    ----------
    X : ndarray (N, r)
        Current subspace estimate.
    k1 : int
        Number of rows to pick; must be at least ``r``.
    mode : {"greedy", "exhaustive"}
        ``"exhaustive"`` returns the global maximiser of ``sigma_r(X[S])``
        (ties resolved to the lexicographically smallest subset);
        ``"greedy"`` runs :func:`greedy_removal`.
    cap : int
        Largest number of subsets exhaustive mode is allowed to scan.

    Returns
    -------
    ndarray of int
        Sorted row indices.
    """
    X = np.asarray(X, dtype=float)
    N, r = X.shape
    if k1 < r:
        raise ValueError(f"active sampling needs k1 >= r ({k1} < {r})")
    if k1 > N:
        raise ValueError(f"k1={k1} exceeds N={N}")
    if mode == "exhaustive":
        return _exhaustive(X, k1, cap)
    if mode == "greedy":
        return greedy_removal(X, k1)
    raise ValueError(f"unknown active sampling mode {mode!r}")


def sigma_star(X, k: int, cap: int = MAX_EXHAUSTIVE_SUBSETS) -> float:
    """Worst-case ``sigma_r`` over every size-``k`` row restriction of ``X``."""
    X = np.asarray(X, dtype=float)
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_count(X.shape[0], k, cap)
    return float(min(vals.min() for _, vals in _subset_sigmas(X, k)))


def subset_quality(N: int, r: int, k1: int, exact: bool = False) -> SubsetQuality:
    """Lower bounds on ``sigma_r^2`` of the best (``q1``) and greedy (``q1_tilde``) subsets.

    With ``exact=True`` the fields are :class:`fractions.Fraction`.
    """
    if k1 < r:
        raise ValueError(f"need k1 >= r ({k1} < {r})")
    if k1 > N:
        raise ValueError(f"k1={k1} exceeds N={N}")
    num = Fraction(k1 - r + 1)
    q1 = num / (r * (N - k1) + k1 - r + 1)
    q1_tilde = num / (r * (N - r + 1))
    if exact:
        return SubsetQuality(q1, q1_tilde)
    return SubsetQuality(float(q1), float(q1_tilde))
