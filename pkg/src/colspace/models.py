"""scikit-learn style wrappers around the estimators.

All three take ``X`` of shape ``(n_samples, n_features)``: each sample is one
arriving column of the underlying ``N x t`` matrix, so ``n_features = N``.
NaN marks entries that are missing (for :class:`ScaledPCA`) or unavailable
to the sampler (for the alternating-minimization estimators, which choose
for themselves which entries of each sample to read).

After fitting, ``components_`` has shape ``(n_components, n_features)`` with
orthonormal rows and ``mask_`` records every entry that was read.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_n_features, check_partial, check_rank
from .core import PartialMatrix
from .estimator import EstimatorConfig, column_space_estimate, masked_lstsq, scaled_pca
from .evaluation import impute
from .sampling import SamplingBudget
from .streaming import feed_column, stream_init

__all__ = ["ScaledPCA", "BlockAltMin", "StreamingAltMin"]


def _random_seed(random_state) -> int:
    if random_state is None:
        return int(np.random.SeedSequence().entropy % 2**63)
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    raise ValueError("random_state must be None or an int")


class _SubspaceMixin(TransformerMixin):
    """transform / inverse_transform / impute on top of ``components_``."""

    @property
    def basis_(self) -> np.ndarray:
        """``(n_features, n_components)`` orthonormal basis of the estimated column space."""
        check_is_fitted(self, "components_")
        return self.components_.T

    def transform(self, X):
        """Ridge coefficients of each sample on the basis, using its observed entries only."""
        check_is_fitted(self, "components_")
        Y = check_partial(X)
        check_n_features(self, Y)
        return masked_lstsq(Y.values, Y.mask, self.basis_, self.transform_lambda or None)

    def inverse_transform(self, W):
        check_is_fitted(self, "components_")
        W = np.asarray(W, dtype=float)
        return W @ self.components_

    def impute(self, X):
        """Fill the NaN entries of ``X`` from the fitted column space; observed entries are kept."""
        check_is_fitted(self, "components_")
        Y = check_partial(X)
        check_n_features(self, Y)
        return impute(self.basis_, Y, self.transform_lambda).T


class ScaledPCA(_SubspaceMixin, BaseEstimator):
    """Rescaled covariance PCA for samples with a fixed number of observed entries.

    Parameters
    ----------
    n_components : int
    scaling : {"literal", "unbiased"}
        Off-diagonal correction ``N^2 / (k (k - 1))`` or ``N (N - 1) / (k (k - 1))``.
    transform_lambda : float
        Ridge used by :meth:`transform` and :meth:`impute`.
    """

    def __init__(self, n_components=1, scaling="literal", transform_lambda=0.05):
        self.n_components = n_components
        self.scaling = scaling
        self.transform_lambda = transform_lambda

    def fit(self, X, y=None):
        Y = check_partial(X)
        r = check_rank(self.n_components, Y.shape[0])
        counts = Y.column_counts
        k = int(counts[0])
        if np.any(counts != k):
            raise ValueError("every sample must have the same number of observed entries")
        basis, evals = scaled_pca(Y, k, r, self.scaling, return_eigenvalues=True)
        self.components_ = basis.T
        self.eigenvalues_ = evals
        self.mask_ = Y.mask.T.copy()
        self.n_features_in_ = Y.shape[0]
        return self


class BlockAltMin(_SubspaceMixin, BaseEstimator):
    """Block-scheduled alternating minimization with median least squares.

    ``fit`` treats ``X`` as a column oracle: it reads ``k1 + k2`` entries per
    sample, ScaledPCA on the first ``n_init`` samples, then ``n_blocks``
    blocks of ``block_size`` samples each.
    """

    def __init__(
        self,
        n_components=1,
        k1=1,
        k2=1,
        n_init=100,
        block_size=50,
        n_blocks=1,
        active=False,
        active_mode="greedy",
        epsilon=0.1,
        practical_mode=False,
        ridge_lambda=0.05,
        transform_lambda=0.05,
        random_state=None,
    ):
        self.n_components = n_components
        self.k1 = k1
        self.k2 = k2
        self.n_init = n_init
        self.block_size = block_size
        self.n_blocks = n_blocks
        self.active = active
        self.active_mode = active_mode
        self.epsilon = epsilon
        self.practical_mode = practical_mode
        self.ridge_lambda = ridge_lambda
        self.transform_lambda = transform_lambda
        self.random_state = random_state

    def fit(self, X, y=None):
        Y = check_partial(X)
        if not Y.mask.all():
            raise ValueError("BlockAltMin samples its own entries; X must be fully available")
        N = Y.shape[0]
        r = check_rank(self.n_components, N)
        cfg = EstimatorConfig(
            r=r,
            budget=SamplingBudget(self.k1, self.k2, N),
            M_init=self.n_init,
            M=self.block_size,
            s=self.n_blocks,
            epsilon=self.epsilon,
            active=self.active,
            active_mode=self.active_mode,
            practical_mode=self.practical_mode,
            ridge_lambda=self.ridge_lambda,
        )
        basis, mask = column_space_estimate(Y.values, cfg, _random_seed(self.random_state))
        self.components_ = basis.T
        self.mask_ = mask.T
        self.n_features_in_ = N
        return self


class StreamingAltMin(_SubspaceMixin, BaseEstimator):
    """Online alternating minimization, one sample at a time.

    The first ``n_init`` samples (uniformly sampled) initialize the basis by
    ScaledPCA; afterwards each sample reads ``k1`` rows (chosen actively when
    ``active``) plus ``k2`` uniform rows and updates the estimate. Use
    :meth:`partial_fit` to keep feeding samples.

    Parameters
    ----------
    forgetting : float in (0, 1]
        Exponential down-weighting of past samples in the row summaries;
        1 keeps the exact running least-squares fit.
    """

    def __init__(
        self,
        n_components=1,
        k1=1,
        k2=1,
        n_init=100,
        active=False,
        active_mode="greedy",
        practical_mode=True,
        ridge_lambda=0.05,
        forgetting=0.97,
        transform_lambda=0.05,
        random_state=None,
    ):
        self.n_components = n_components
        self.k1 = k1
        self.k2 = k2
        self.n_init = n_init
        self.active = active
        self.active_mode = active_mode
        self.practical_mode = practical_mode
        self.ridge_lambda = ridge_lambda
        self.forgetting = forgetting
        self.transform_lambda = transform_lambda
        self.random_state = random_state

    def fit(self, X, y=None):
        for attr in ("state_", "components_", "mask_"):
            self.__dict__.pop(attr, None)
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        """Stream the samples of ``X``; the first call needs at least ``n_init`` of them."""
        first = not hasattr(self, "state_")
        Y = check_partial(X, min_samples=self.n_init if first else 1)
        if first:
            self._start(Y)
            Y = PartialMatrix(Y.values[:, self.n_init :], Y.mask[:, self.n_init :])
        else:
            check_n_features(self, Y)
        full = Y.mask.all()
        for j in range(Y.shape[1]):
            avail = None if full else np.flatnonzero(Y.mask[:, j])
            feed_column(self.state_, Y.values[:, j], avail)
        self.components_ = self.state_.basis.T.copy()
        self.mask_ = self.state_.mask().T
        self.n_samples_seen_ = self.state_.n_seen
        return self

    def _start(self, Y: PartialMatrix) -> None:
        N = Y.shape[0]
        r = check_rank(self.n_components, N)
        cfg = EstimatorConfig(
            r=r,
            budget=SamplingBudget(self.k1, self.k2, N),
            M_init=self.n_init,
            active=self.active,
            active_mode=self.active_mode,
            practical_mode=self.practical_mode,
            ridge_lambda=self.ridge_lambda,
        )
        cfg.budget.validate(r, self.active)
        rng = np.random.default_rng(_random_seed(self.random_state))
        k = self.k1 + self.k2
        mask = np.zeros((N, self.n_init), dtype=bool)
        for j in range(self.n_init):
            pool = np.flatnonzero(Y.mask[:, j])
            if pool.size < k:
                raise ValueError(f"sample {j} has {pool.size} available entries, budget needs {k}")
            mask[np.sort(rng.choice(pool, size=k, replace=False)), j] = True
        init = PartialMatrix(np.where(mask, Y.values[:, : self.n_init], 0.0), mask)
        self.state_ = stream_init(cfg, rng, init, forgetting=self.forgetting)
        self.n_features_in_ = N
