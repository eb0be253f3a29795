"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .core import PartialMatrix


def check_partial(X, min_samples: int = 1) -> PartialMatrix:
    """Samples-by-features array with NaN for missing entries -> ``N x t`` PartialMatrix.

    The estimators follow the usual convention (one sample per row), so the
    matrix whose column space is estimated is ``X.T``.
    """
    X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan", ensure_min_samples=min_samples)
    if np.isinf(X).any():
        raise ValueError("input contains infinity")
    return PartialMatrix.from_nan(X.T)


def check_rank(n_components, n_features: int) -> int:
    if not isinstance(n_components, (int, np.integer)) or n_components < 1:
        raise ValueError(f"n_components must be a positive integer, got {n_components!r}")
    if n_components > n_features:
        raise ValueError(f"n_components={n_components} exceeds n_features={n_features}")
    return int(n_components)


def check_n_features(estimator, Y: PartialMatrix) -> None:
    expected = estimator.n_features_in_
    if Y.shape[0] != expected:
        raise ValueError(f"X has {Y.shape[0]} features, but {type(estimator).__name__} was fitted with {expected}")
