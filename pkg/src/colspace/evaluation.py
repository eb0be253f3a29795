"""Subspace distance, ridge imputation and masked recovery error."""

from __future__ import annotations

import numpy as np

from .core import PartialMatrix, RankDeficientError, check_orthonormal
from .estimator import SINGULAR_TOL, masked_lstsq

__all__ = ["sin_theta", "impute", "rel_error_masked"]


def sin_theta(X, U) -> float:
    """Sine of the largest principal angle, ``||(I - X X^T) U||_2``.

    Both arguments need orthonormal columns and the same shape.
    """
    X = check_orthonormal(X, name="X")
    U = check_orthonormal(U, name="U")
    if X.shape != U.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {U.shape}")
    resid = U - X @ (X.T @ U)
    return float(np.linalg.norm(resid, 2))


def impute(X_hat, Y: PartialMatrix, lam: float = 0.05) -> np.ndarray:
    """Fill the unobserved entries of ``Y`` from its projection on ``span(X_hat)``.

    Each column gets ``beta = argmin ||P(X_hat beta - y)||^2 + lam ||beta||^2``
    over its observed rows; missing entries become ``X_hat @ beta`` and
    observed ones are copied unchanged.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    X_hat = np.asarray(X_hat, dtype=float)
    if X_hat.shape[0] != Y.shape[0]:
        raise ValueError(f"basis has {X_hat.shape[0]} rows, data has {Y.shape[0]}")
    if lam == 0:
        gram = np.einsum("nm,ni,nj->mij", Y.mask.astype(float), X_hat, X_hat)
        smin = np.linalg.eigvalsh(gram)[:, 0] if gram.shape[0] else np.empty(0)
        bad = np.flatnonzero(smin <= SINGULAR_TOL)
        if bad.size:
            raise RankDeficientError(
                max(smin[bad[0]], 0.0), f"column {bad[0]} has a rank-deficient observed design"
            )
        beta = masked_lstsq(Y.values, Y.mask, X_hat, None)
    else:
        beta = masked_lstsq(Y.values, Y.mask, X_hat, lam)
    filled = X_hat @ beta.T
    filled[Y.mask] = Y.values[Y.mask]
    return filled


def rel_error_masked(Y_hat, Y_ref: PartialMatrix) -> float:
    """``||P(Y_hat - Y_ref)||_F / ||P(Y_ref)||_F`` over the entries of ``Y_ref``'s mask."""
    Y_hat = np.asarray(Y_hat, dtype=float)
    if Y_hat.shape != Y_ref.shape:
        raise ValueError(f"shape mismatch: {Y_hat.shape} vs {Y_ref.shape}")
    ref = Y_ref.values[Y_ref.mask]
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise ZeroDivisionError("reference has zero norm on the evaluation mask")
    return float(np.linalg.norm(Y_hat[Y_ref.mask] - ref) / denom)
