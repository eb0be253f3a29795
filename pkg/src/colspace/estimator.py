"""Alternating-minimization column space estimators and the ScaledPCA baseline.

Everything here works in the ``N x t`` orientation: rows are coordinates,
columns are observations arriving over time. Block algorithms read the data
matrix only at the entries they decide to sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    CoherenceUnreachableError,
    PartialMatrix,
    SingularDesignError,
    coherence,
    thin_qr,
    top_r_eigvecs,
)
from .sampling import SamplingBudget, active_subset, uniform_subset, uniform_subset_excluding

__all__ = [
    "EstimatorConfig",
    "SmoothQRResult",
    "column_rng",
    "scaling_factors",
    "scale_covariance",
    "scaled_pca",
    "masked_lstsq",
    "fit_w_block",
    "fit_x_block",
    "smooth_qr",
    "median_ls",
    "n_median_blocks",
    "column_space_estimate",
    "double_column_space_estimate",
]

SINGULAR_TOL = 1e-10


@dataclass
class EstimatorConfig:
    """Parameters of the block-scheduled alternating minimization.

    ``M``/``s`` describe a single-phase schedule; the two-phase variant reads
    ``M1, s1, M2, s2`` instead. ``practical_mode`` skips the noisy
    orthonormalization and the median, forces one sub-block, fits both
    regressions on every observed entry and applies ``ridge_lambda``.
    """

    r: int
    budget: SamplingBudget
    M_init: int
    M: int = 50
    s: int = 1
    M1: int | None = None
    s1: int = 0
    M2: int | None = None
    s2: int = 0
    epsilon: float = 0.1
    active: bool = False
    active_mode: str = "greedy"
    C_med: float = 1.0
    mu_target_coefficient: float = 10.0
    sigma_r_hint: float = 1.0
    ridge_lambda: float = 0.05
    practical_mode: bool = False
    allow_overlap: bool = False
    scaling: str = "literal"
    sample_splitting: bool | None = None

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("rank must be positive")
        if self.M_init < self.r or self.M < self.r:
            raise ValueError("M_init and M must be at least r")
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.C_med <= 0 or self.mu_target_coefficient <= 0 or self.sigma_r_hint <= 0:
            raise ValueError("C_med, mu_target_coefficient and sigma_r_hint must be positive")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")
        self.budget.validate(self.r, self.active)
        if self.sample_splitting is None:
            self.sample_splitting = not self.practical_mode


class SmoothQRResult(NamedTuple):
    basis: np.ndarray
    perturbed: np.ndarray
    noise: np.ndarray
    n_iter: int


def column_rng(seed: int, column: int) -> np.random.Generator:
    """Independent stream for one column, keyed by ``(seed, column)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(column),)))


def n_median_blocks(M: int, C_med: float = 1.0) -> int:
    return max(1, math.ceil(C_med * math.ceil(math.log(M))))


# --------------------------------------------------------------------------- ScaledPCA


def scaling_factors(N: int, k: int, variant: str = "literal") -> tuple[float, float]:
    """``(off_diagonal, diagonal)`` rescaling of the sampled second-moment matrix.

    ``"literal"`` uses ``N^2 / (k(k-1))`` off the diagonal; ``"unbiased"``
    uses ``N(N-1) / (k(k-1))``, the exact correction for sampling ``k`` of
    ``N`` rows without replacement. The diagonal factor is ``N/k`` for both.
    """
    if k < 2:
        raise ValueError("ScaledPCA needs at least 2 observations per column")
    if variant == "literal":
        off = N * N / (k * (k - 1))
    elif variant == "unbiased":
        off = N * (N - 1) / (k * (k - 1))
    else:
        raise ValueError(f"unknown scaling variant {variant!r}")
    return off, N / k


def scale_covariance(C, N: int, k: int, variant: str = "literal") -> np.ndarray:
    off, diag = scaling_factors(N, k, variant)
    C = np.asarray(C, dtype=float)
    out = off * C
    np.fill_diagonal(out, diag * np.diag(C))
    return out


def scaled_pca(
    Y: PartialMatrix, k: int, r: int, variant: str = "literal", return_eigenvalues: bool = False
):
    """Top-``r`` eigenvectors of the rescaled covariance of zero-filled columns.

    With ``return_eigenvalues=True`` also return the matching eigenvalues of
    the rescaled covariance (descending).
    """
    counts = Y.column_counts
    bad = np.flatnonzero(counts != k)
    if bad.size:
        raise ValueError(
            f"column {bad[0]} has {counts[bad[0]]} observations, expected exactly {k}"
        )
    P = Y.project()
    C = scale_covariance(P @ P.T, Y.shape[0], k, variant)
    basis = top_r_eigvecs(C, r)
    if return_eigenvalues:
        return basis, np.einsum("ij,ik,kj->j", basis, C, basis)
    return basis


# --------------------------------------------------------------------------- least squares


def masked_lstsq(values, mask, F, ridge: float | None = None, axis_name: str = "column") -> np.ndarray:
    """Independent (ridge) least squares for every column of a masked matrix.

    Column ``j`` solves ``min_c ||mask_j * (values_j - F c)||^2 + ridge ||c||^2``.

    Returns
    -------
    ndarray (n_cols, r)
        One coefficient row per column.

    Raises
    ------
    SingularDesignError
        When ``ridge`` is None and a column's design ``F^T P_j F`` has
        smallest singular value below ``1e-10``.
    """
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    F = np.asarray(F, dtype=float)
    r = F.shape[1]
    Pm = mask.astype(float)
    gram = np.einsum("nm,ni,nj->mij", Pm, F, F)
    rhs = np.einsum("nm,ni->mi", np.where(mask, values, 0.0), F)
    if ridge is None:
        smin = np.linalg.eigvalsh(gram)[:, 0] if gram.shape[0] else np.empty(0)
        bad = np.flatnonzero(smin <= SINGULAR_TOL)
        if bad.size:
            raise SingularDesignError(bad[0], max(smin[bad[0]], 0.0), axis_name)
    else:
        gram = gram + ridge * np.eye(r)
    return np.linalg.solve(gram, rhs[..., None])[..., 0]


def fit_w_block(Y: PartialMatrix, X_prev, ridge: float | None = None) -> np.ndarray:
    """Coefficients ``W`` (``M x r``) fitting each column of ``Y`` on ``X_prev``."""
    return masked_lstsq(Y.values, Y.mask, X_prev, ridge, "column")


def fit_x_block(Y: PartialMatrix, W_hat, ridge: float | None = None) -> np.ndarray:
    """Row factors ``X`` (``N x r``) fitting each row of ``Y`` on ``W_hat``."""
    return masked_lstsq(Y.values.T, Y.mask.T, W_hat, ridge, "row")


# --------------------------------------------------------------------------- SmoothQR


def smooth_qr(W0, epsilon_prime: float, mu_target: float, rng: np.random.Generator) -> SmoothQRResult:
    """Orthonormalize ``W0``, adding growing Gaussian noise until it is incoherent.

    Noise entries have variance ``sigma^2 / M``; ``sigma`` starts at
    ``epsilon_prime * ||W0|| / M`` and doubles while the coherence target is
    missed and ``sigma <= ||W0||``.
    """
    W0 = np.asarray(W0, dtype=float)
    if epsilon_prime <= 0:
        raise ValueError("epsilon_prime must be positive")
    if mu_target < 1:
        raise ValueError("mu_target must be >= 1")
    M = W0.shape[0]
    norm = np.linalg.norm(W0, 2)
    W_hat, _ = thin_qr(W0)
    W_tilde, G = W0.copy(), np.zeros_like(W0)
    sigma = epsilon_prime * norm / M
    n_iter = 0
    mu = coherence(W_hat)
    while mu > mu_target and sigma <= norm:
        G = rng.normal(scale=sigma / math.sqrt(M), size=W0.shape)
        W_tilde = W0 + G
        W_hat, _ = thin_qr(W_tilde)
        mu = coherence(W_hat)
        sigma *= 2
        n_iter += 1
    if mu > mu_target:
        raise CoherenceUnreachableError(mu, mu_target)
    return SmoothQRResult(W_hat, W_tilde, G, n_iter)


# --------------------------------------------------------------------------- MedianLS


def median_ls(
    X_prev,
    Y,
    mask1,
    mask2,
    M: int,
    m: int,
    epsilon: float,
    cfg: EstimatorConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """One alternating-minimization update from the ``L*M`` columns starting at ``m``.

    ``Y`` holds data for at least those columns; ``mask1``/``mask2`` are
    full-width masks of the same shape, and only entries they mark are read.
    """
    Y = np.asarray(Y, dtype=float)
    mask1 = np.asarray(mask1, dtype=bool)
    mask2 = np.asarray(mask2, dtype=bool)
    L = 1 if cfg.practical_mode else n_median_blocks(M, cfg.C_med)
    cols = slice(m, m + L * M)
    if Y[:, cols].shape[1] < L * M:
        raise ValueError(f"median_ls needs columns [{m}, {m + L * M}), only {Y.shape[1]} available")
    Yb = Y[:, cols]
    mw, mx = mask1[:, cols], mask2[:, cols]
    if not cfg.sample_splitting:
        mw = mx = mw | mx
    ridge = cfg.ridge_lambda if cfg.practical_mode else None

    W0 = fit_w_block(PartialMatrix(np.where(mw, Yb, 0.0), mw), X_prev, ridge)
    if cfg.practical_mode:
        W_hat = thin_qr(W0)[0]
    else:
        mu_target = max(1.0, cfg.mu_target_coefficient * math.log(M))
        W_hat = smooth_qr(W0, cfg.sigma_r_hint * epsilon, mu_target, rng).basis
    estimates = []
    for i in range(L):
        J = slice(i * M, (i + 1) * M)
        sub = PartialMatrix(np.where(mx[:, J], Yb[:, J], 0.0), mx[:, J])
        estimates.append(fit_x_block(sub, W_hat[J], ridge))
    X_tilde = np.median(np.stack(estimates), axis=0)
    return thin_qr(X_tilde)[0]


# --------------------------------------------------------------------------- block schedules


def _sample_columns(X_hat, budget, cols, cfg, seed, mask1, mask2):
    N = budget.N
    for j in cols:
        rng = column_rng(seed, j)
        if cfg.active:
            S1 = active_subset(X_hat, budget.k1, cfg.active_mode)
        else:
            S1 = uniform_subset(N, budget.k1, rng)
        if cfg.allow_overlap:
            S2 = uniform_subset(N, budget.k2, rng)
        else:
            S2 = uniform_subset_excluding(N, budget.k2, S1, rng)
        mask1[S1, j] = True
        mask2[S2, j] = True


def _initialize(Y, cfg: EstimatorConfig, seed: int):
    N = Y.shape[0]
    k = cfg.budget.total
    mask = np.zeros(Y.shape, dtype=bool)
    for j in range(cfg.M_init):
        mask[uniform_subset(N, k, column_rng(seed, j)), j] = True
    init = PartialMatrix(np.where(mask[:, : cfg.M_init], Y[:, : cfg.M_init], 0.0), mask[:, : cfg.M_init])
    return scaled_pca(init, k, cfg.r, cfg.scaling), mask


def double_column_space_estimate(Y, cfg: EstimatorConfig, seed: int = 0):
    """Spectral initialization, then ``s1`` blocks of size ``M1`` and ``s2`` of size ``M2``.

    Returns
    -------
    X_hat : ndarray (N, r)
    mask : ndarray of bool, same shape as ``Y``
        Every entry the algorithm observed.
    """
    Y = np.asarray(Y, dtype=float)
    N, t = Y.shape
    if cfg.budget.N != N:
        raise ValueError(f"budget is for N={cfg.budget.N}, data has {N} rows")
    M1 = cfg.M1 if cfg.M1 is not None else cfg.M
    M2 = cfg.M2 if cfg.M2 is not None else cfg.M
    phases = [(M1, cfg.s1), (M2, cfg.s2)]
    widths = [(1 if cfg.practical_mode else n_median_blocks(Mp, cfg.C_med)) * Mp for Mp, _ in phases]
    required = cfg.M_init + sum(w * sp for w, (_, sp) in zip(widths, phases))
    if t < required:
        raise ValueError(f"need at least {required} columns for this schedule, got {t}")

    X_hat, mask = _initialize(Y, cfg, seed)
    smooth_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(t + 1,)))
    start = cfg.M_init
    for (Mp, sp), width in zip(phases, widths):
        for _ in range(sp):
            cols = range(start, start + width)
            mask1 = np.zeros_like(mask)
            mask2 = np.zeros_like(mask)
            _sample_columns(X_hat, cfg.budget, cols, cfg, seed, mask1, mask2)
            X_hat = median_ls(X_hat, Y, mask1, mask2, Mp, start, cfg.epsilon, cfg, smooth_rng)
            mask |= mask1 | mask2
            start += width
    return X_hat, mask


def column_space_estimate(Y, cfg: EstimatorConfig, seed: int = 0):
    """Single block size schedule: ``s`` blocks of size ``M`` after initialization."""
    single = EstimatorConfig(
        **{**cfg.__dict__, "M1": cfg.M, "s1": cfg.s, "M2": cfg.M, "s2": 0}
    )
    return double_column_space_estimate(Y, single, seed)
