"""Online alternating minimization: one column at a time.

Each arriving column is sampled, its coefficient vector ``w`` is fitted on
the current factor, and the observed entries are folded into per-row
normal-equation summaries. With ``forgetting=1`` and no ridge, solving those
summaries reproduces the batch row-wise least squares exactly; a forgetting
factor below 1 down-weights old columns geometrically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PartialMatrix, SingularDesignError, as_index_set, thin_qr
from .estimator import SINGULAR_TOL, EstimatorConfig, masked_lstsq, scaled_pca
from .sampling import active_subset, uniform_subset, uniform_subset_excluding

__all__ = [
    "RowRLS",
    "StreamState",
    "stream_init",
    "stream_next_indices",
    "stream_observe",
    "feed_column",
]


class RowRLS:
    """Per-row accumulated normal equations ``G_n = sum w w^T``, ``b_n = sum y_n w``."""

    def __init__(self, n_rows: int, rank: int):
        self.gram = np.zeros((n_rows, rank, rank))
        self.rhs = np.zeros((n_rows, rank))
        self.counts = np.zeros(n_rows, dtype=np.int64)

    @property
    def shape(self):
        return self.rhs.shape

    def decay(self, factor: float) -> None:
        """Down-weight everything accumulated so far (exponential forgetting)."""
        self.gram *= factor
        self.rhs *= factor

    def update(self, rows, values, w) -> None:
        rows = np.asarray(rows, dtype=np.intp)
        w = np.asarray(w, dtype=float)
        self.gram[rows] += np.outer(w, w)
        self.rhs[rows] += np.asarray(values, dtype=float)[:, None] * w
        self.counts[rows] += 1

    def rotate(self, R) -> None:
        """Change coefficient coordinates ``w -> R w`` in every summary."""
        R = np.asarray(R, dtype=float)
        self.gram = np.einsum("ij,njk,lk->nil", R, self.gram, R)
        self.rhs = self.rhs @ R.T

    def solve(self, ridge: float = 0.0, previous=None) -> np.ndarray:
        """Row factors from the summaries.

        Rows with fewer than ``rank`` updates keep their value in
        ``previous`` when it is given; otherwise an unidentified row with
        ``ridge == 0`` raises :class:`SingularDesignError`.
        """
        N, r = self.rhs.shape
        gram = self.gram + ridge * np.eye(r)
        thin = self.counts < r
        if previous is not None and thin.any():
            out = np.array(previous, dtype=float, copy=True)
            ok = ~thin
            out[ok] = np.linalg.solve(gram[ok], self.rhs[ok][..., None])[..., 0]
            return out
        if ridge == 0:
            smin = np.linalg.eigvalsh(gram)[:, 0]
            bad = np.flatnonzero(smin <= SINGULAR_TOL)
            if bad.size:
                raise SingularDesignError(bad[0], max(smin[bad[0]], 0.0), "row")
        return np.linalg.solve(gram, self.rhs[..., None])[..., 0]


@dataclass
class StreamState:
    """Mutable state of one online estimator; owned by a single caller."""

    cfg: EstimatorConfig
    basis: np.ndarray
    factor: np.ndarray
    rls: RowRLS
    rng: np.random.Generator
    refresh_every: int = 1
    n_seen: int = 0
    observed: list = field(default_factory=list)
    coefficients: list = field(default_factory=list)
    pending: tuple | None = None
    parametrization: str = "whitened"
    forgetting: float = 1.0
    moment: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.basis.shape[0]

    def mask(self) -> np.ndarray:
        """Boolean ``N x n_seen`` mask of every entry observed so far."""
        out = np.zeros((self.N, len(self.observed)), dtype=bool)
        for j, rows in enumerate(self.observed):
            out[rows, j] = True
        return out


def stream_init(
    cfg: EstimatorConfig,
    rng: np.random.Generator,
    Y_init: PartialMatrix | None = None,
    basis=None,
    refresh_every: int = 1,
    parametrization: str = "whitened",
    forgetting: float = 1.0,
) -> StreamState:
    """Start a stream from initialization columns or from a given basis.

    With ``Y_init`` the basis is the ScaledPCA estimate of those columns, and
    their observed entries seed the row summaries (coefficients fitted on
    that basis). The estimate is left untouched until the first column is
    observed. ``forgetting`` multiplies all accumulated summaries before each
    new column is added.
    """
    if refresh_every < 1:
        raise ValueError("refresh_every must be >= 1")
    if not 0 < forgetting <= 1:
        raise ValueError("forgetting must lie in (0, 1]")
    if parametrization not in ("whitened", "orthonormal"):
        raise ValueError(f"unknown parametrization {parametrization!r}")
    N, r = cfg.budget.N, cfg.r
    rls = RowRLS(N, r)
    state_obs, state_w = [], []
    factor = None if basis is None else np.array(basis, dtype=float)
    if Y_init is not None:
        if Y_init.shape[0] != N:
            raise ValueError(f"initial columns have {Y_init.shape[0]} rows, budget is for N={N}")
        if basis is None:
            k = int(Y_init.column_count(0))
            basis, evals = scaled_pca(Y_init, k, r, cfg.scaling, return_eigenvalues=True)
            factor = basis
            if parametrization == "whitened":
                # second moment of the columns is X0 X0^T (+ noise), so this puts
                # the factor at the model's scale
                factor = basis * np.sqrt(np.maximum(evals, 0.0) / Y_init.shape[1])
        W = masked_lstsq(Y_init.values, Y_init.mask, factor, cfg.ridge_lambda)
        for j in range(Y_init.shape[1]):
            rows = np.flatnonzero(Y_init.mask[:, j])
            rls.update(rows, Y_init.values[rows, j], W[j])
            state_obs.append(rows)
            state_w.append(W[j])
    if basis is None:
        raise ValueError("need either initialization columns or a starting basis")
    basis = np.array(basis, dtype=float)
    return StreamState(
        cfg=cfg,
        basis=basis,
        factor=factor,
        rls=rls,
        rng=rng,
        refresh_every=refresh_every,
        parametrization=parametrization,
        forgetting=forgetting,
        moment=np.asarray(state_w).T @ np.asarray(state_w) if state_w else np.zeros((r, r)),
        n_seen=len(state_obs),
        observed=state_obs,
        coefficients=state_w,
    )


def stream_next_indices(state: StreamState, available=None):
    """Rows to observe for the next column: ``(S1, S2)``, disjoint unless overlap is allowed.

    ``available`` optionally restricts the choice to rows that exist for
    this column (real data with missing entries).
    """
    cfg = state.cfg
    N = state.N
    k1, k2 = cfg.budget.k1, cfg.budget.k2
    if available is None:
        pool = None
    else:
        pool = as_index_set(available, N)
        if pool.size < k1 + k2:
            raise ValueError(f"only {pool.size} rows available, budget needs {k1 + k2}")

    if cfg.active and k1 > 0:
        if pool is None:
            S1 = active_subset(state.basis, k1, cfg.active_mode)
        else:
            try:
                S1 = pool[active_subset(state.basis[pool], k1, cfg.active_mode)]
            except np.linalg.LinAlgError:
                S1 = np.sort(state.rng.choice(pool, size=k1, replace=False))
    elif pool is None:
        S1 = uniform_subset(N, k1, state.rng)
    else:
        S1 = np.sort(state.rng.choice(pool, size=k1, replace=False))

    if cfg.allow_overlap:
        S2 = uniform_subset(N, k2, state.rng) if pool is None else np.sort(
            state.rng.choice(pool, size=k2, replace=False)
        )
    elif pool is None:
        S2 = uniform_subset_excluding(N, k2, S1, state.rng)
    else:
        rest = np.setdiff1d(pool, S1, assume_unique=True)
        S2 = np.sort(state.rng.choice(rest, size=k2, replace=False))
    state.pending = (state.n_seen, S1, S2)
    return S1, S2


def stream_observe(state: StreamState, column: int, indices, values) -> StreamState:
    """Fold one column's requested entries into the state.

    ``values[i]`` is the entry at row ``indices[i]``. The indices must be
    exactly the union of the rows issued by :func:`stream_next_indices`
    for this column.
    """
    if state.pending is None:
        raise RuntimeError("no indices were issued; call stream_next_indices first")
    col, S1, S2 = state.pending
    if column != col:
        raise ValueError(f"expected column {col}, got {column}")
    indices = np.asarray(indices, dtype=np.intp).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if indices.shape != values.shape:
        raise ValueError("indices and values must have the same length")
    requested = np.union1d(S1, S2)
    order = np.argsort(indices, kind="stable")
    indices, values = indices[order], values[order]
    if not np.array_equal(indices, requested):
        raise ValueError("observed entries do not match the requested rows")
    y = dict(zip(indices.tolist(), values.tolist()))

    cfg = state.cfg
    if cfg.sample_splitting:
        rows_w, rows_x = S1, S2
    else:
        rows_w = rows_x = requested
    yw = np.array([y[i] for i in rows_w])
    w = masked_lstsq(yw[:, None], np.ones((len(rows_w), 1), dtype=bool), state.factor[rows_w],
                     cfg.ridge_lambda if cfg.ridge_lambda > 0 else None)[0]
    if state.forgetting < 1:
        state.rls.decay(state.forgetting)
        state.moment *= state.forgetting
    state.rls.update(rows_x, [y[i] for i in rows_x], w)
    state.moment += np.outer(w, w)
    state.observed.append(requested)
    state.coefficients.append(w)
    state.n_seen += 1
    state.pending = None
    if state.n_seen % state.refresh_every == 0:
        refresh(state)
    return state


def refresh(state: StreamState) -> StreamState:
    """Re-solve the row factors and re-express the summaries in new coordinates.

    The solved factor ``X`` is re-coordinatized by an invertible ``T``
    (``w -> T w``, ``X -> X T^{-1}``), which leaves ``X w`` unchanged and,
    with no ridge, the least-squares problem too. With
    ``parametrization="whitened"`` the stored coefficients end up with
    identity second moment, so the factor sits at the scale of the
    generating model; ``"orthonormal"`` makes the factor itself orthonormal.
    """
    X = state.rls.solve(state.cfg.ridge_lambda, previous=state.factor)
    Q, R = thin_qr(X)
    if state.parametrization == "orthonormal" or state.n_seen < state.cfg.r:
        T = R
        state.factor = Q
        state.basis = Q
    else:
        evals, V = np.linalg.eigh(R @ state.moment @ R.T)
        evals = np.maximum(evals / _effective_count(state), np.finfo(float).tiny)
        T = (V / np.sqrt(evals)).T @ R
        state.factor = Q @ (V * np.sqrt(evals))
        state.basis = Q @ V
    state.rls.rotate(T)
    state.moment = T @ state.moment @ T.T
    if state.coefficients:
        state.coefficients = list(np.asarray(state.coefficients) @ T.T)
    return state


def _effective_count(state: StreamState) -> float:
    if state.forgetting == 1:
        return float(state.n_seen)
    return (1 - state.forgetting**state.n_seen) / (1 - state.forgetting)


def feed_column(state: StreamState, y, available=None) -> StreamState:
    """Drive one step against a column oracle ``y`` (only requested entries are read)."""
    S1, S2 = stream_next_indices(state, available)
    rows = np.union1d(S1, S2)
    return stream_observe(state, state.n_seen, rows, np.asarray(y, dtype=float)[rows])
