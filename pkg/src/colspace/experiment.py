"""Multi-replication comparison of ScaledPCA and online alternating minimization."""

from __future__ import annotations

import csv
import logging
import math
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PartialMatrix, thin_qr, top_r_eigvecs
from .data import filter_by_missingness, gen_columns, gen_ground_truth, read_partial_csv, zero_fill_basis
from .estimator import EstimatorConfig, scale_covariance
from .evaluation import impute, rel_error_masked, sin_theta
from .sampling import SamplingBudget
from .streaming import feed_column, stream_init

__all__ = [
    "METHODS",
    "RESULT_FIELDS",
    "ExperimentSpec",
    "MetricsRecord",
    "derive_rng",
    "run_experiment",
    "write_records",
    "read_records",
    "summarize",
]

log = logging.getLogger(__name__)

METHODS = ("scaledpca", "altmin_random", "altmin_active")
RESULT_FIELDS = ("method", "replication", "t", "sin_theta", "rel_error", "wall_seconds")
SUMMARY_FIELDS = ("method", "t", "n", "sin_theta_mean", "sin_theta_se", "rel_error_mean", "rel_error_se")


@dataclass(frozen=True)
class MetricsRecord:
    method: str
    replication: int
    t: int
    sin_theta: float
    rel_error: float
    wall_seconds: float = math.nan

    def __post_init__(self):
        if not -1e-12 <= self.sin_theta <= 1 + 1e-9:
            raise ValueError(f"sin_theta {self.sin_theta} outside [0, 1]")


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one comparison run.

    ``source`` is ``"synthetic"`` or ``"csv"``. For CSV input, ``n`` and
    ``t_total`` (when set) choose a random ``n x t_total`` submatrix per
    replication; ``ground_truth`` is ``"svd_zero_fill"`` or a path to an
    ``N x r`` CSV basis.
    """

    source: str = "synthetic"
    n: int | None = 50
    r: int = 6
    sigma_z: float = 0.1
    x0_distribution: str = "cauchy"
    csv_path: str | None = None
    csv_header: bool = False
    ground_truth: str = "svd_zero_fill"
    max_missing_fraction: float | None = None
    k1: int = 6
    k2: int = 6
    M_init: int = 100
    t_total: int | None = 1100
    methods: tuple[str, ...] = METHODS
    replications: int = 1
    base_seed: int = 0
    eval_every: int = 10
    record_initial: bool = False
    ridge_lambda: float = 0.05
    forgetting: float = 0.97
    practical_mode: bool = True
    active_mode: str = "greedy"
    scaling: str = "literal"
    timing: bool = False
    output: str | None = None

    def __post_init__(self):
        self.methods = tuple(self.methods)
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
        if not self.methods:
            raise ValueError("at least one method is required")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0 < self.forgetting <= 1:
            raise ValueError("forgetting must lie in (0, 1]")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.source not in ("synthetic", "csv"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.source == "synthetic" and (self.n is None or self.t_total is None):
            raise ValueError("synthetic source needs n and t_total")
        if self.source == "csv" and not self.csv_path:
            raise ValueError("csv source needs csv_path")
        if self.t_total is not None and self.t_total <= self.M_init:
            raise ValueError("t_total must exceed M_init")


def derive_rng(base_seed: int, *keys) -> np.random.Generator:
    """Generator keyed by ``base_seed`` and labels; labels are mixed with CRC32 so they are stable."""
    spawn = tuple(k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(base_seed), spawn_key=spawn))


def _checkpoints(spec: ExperimentSpec, t_total: int) -> list[int]:
    pts = list(range(spec.M_init + spec.eval_every, t_total + 1, spec.eval_every))
    if not pts or pts[-1] != t_total:
        pts.append(t_total)
    if spec.record_initial:
        pts.insert(0, spec.M_init)
    return pts


@dataclass
class _Problem:
    Y: np.ndarray            # values; unavailable entries are 0 and never sampled
    available: np.ndarray    # what the algorithms may observe
    reference: np.ndarray    # evaluation mask
    U: np.ndarray

    @property
    def shape(self):
        return self.Y.shape


def _synthetic_problem(spec: ExperimentSpec, rep: int) -> _Problem:
    rng = derive_rng(spec.base_seed, rep, "data")
    model = gen_ground_truth(spec.n, spec.r, spec.x0_distribution, rng, spec.sigma_z)
    Y, _ = gen_columns(model, spec.t_total, rng)
    full = np.ones(Y.shape, dtype=bool)
    return _Problem(Y, full, full, model.column_space())


def _load_csv(spec: ExperimentSpec) -> PartialMatrix:
    data = read_partial_csv(spec.csv_path, header=spec.csv_header)
    if spec.max_missing_fraction is not None:
        data, rows, cols = filter_by_missingness(data, spec.max_missing_fraction)
        log.info("missingness filter kept %d rows and %d columns", len(rows), len(cols))
    return data


def _csv_problem(spec: ExperimentSpec, data: PartialMatrix, truth, rep: int) -> _Problem:
    rng = derive_rng(spec.base_seed, rep, "data")
    N_all, t_all = data.shape
    rows = np.arange(N_all)
    if spec.n is not None and spec.n < N_all:
        rows = np.sort(rng.choice(N_all, size=spec.n, replace=False))
    sub = PartialMatrix(data.values[rows], data.mask[rows])
    k = spec.k1 + spec.k2
    usable = np.flatnonzero(sub.column_counts >= k)
    if usable.size < t_all:
        log.info("dropping %d columns with fewer than %d available entries", t_all - usable.size, k)
    t = spec.t_total if spec.t_total is not None else usable.size
    if usable.size < t:
        raise ValueError(f"only {usable.size} usable columns, need {t}")
    cols = np.sort(rng.choice(usable, size=t, replace=False)) if t < usable.size else usable
    sub = sub.columns(cols)
    if truth is None:
        U = zero_fill_basis(sub, spec.r)
    else:
        U = thin_qr(np.asarray(truth)[rows])[0]
    return _Problem(sub.values, sub.mask, sub.mask, U)


def _evaluate(basis, problem: _Problem, observed: np.ndarray, t: int, lam: float):
    Y = problem.Y[:, :t]
    Y_hat = impute(basis, PartialMatrix(Y, observed[:, :t]), lam)
    err = rel_error_masked(Y_hat, PartialMatrix(Y, problem.reference[:, :t]))
    return sin_theta(basis, problem.U), err


def _uniform_rows(rng, avail_col: np.ndarray, k: int) -> np.ndarray:
    pool = np.flatnonzero(avail_col)
    return np.sort(rng.choice(pool, size=k, replace=False))


def _run_scaledpca(spec, problem: _Problem, rng, checkpoints):
    N, t_total = problem.shape
    k = spec.k1 + spec.k2
    observed = np.zeros((N, t_total), dtype=bool)
    C = np.zeros((N, N))
    out = []
    start = time.perf_counter()
    pts = iter(checkpoints)
    nxt = next(pts)
    for j in range(t_total):
        rows = _uniform_rows(rng, problem.available[:, j], k)
        observed[rows, j] = True
        y = problem.Y[rows, j]
        C[np.ix_(rows, rows)] += np.outer(y, y)
        while nxt is not None and j + 1 == nxt:
            basis = top_r_eigvecs(scale_covariance(C, N, k, spec.scaling), spec.r)
            out.append((nxt, *_evaluate(basis, problem, observed, nxt, spec.ridge_lambda), time.perf_counter() - start))
            nxt = next(pts, None)
    return out, observed


def _run_altmin(spec, problem: _Problem, rng, checkpoints, active: bool):
    N, t_total = problem.shape
    k = spec.k1 + spec.k2
    cfg = EstimatorConfig(
        r=spec.r,
        budget=SamplingBudget(spec.k1, spec.k2, N),
        M_init=spec.M_init,
        M=max(spec.M_init, spec.r),
        active=active,
        active_mode=spec.active_mode,
        ridge_lambda=spec.ridge_lambda,
        practical_mode=spec.practical_mode,
        scaling=spec.scaling,
    )
    start = time.perf_counter()
    init_mask = np.zeros((N, spec.M_init), dtype=bool)
    for j in range(spec.M_init):
        init_mask[_uniform_rows(rng, problem.available[:, j], k), j] = True
    Y_init = PartialMatrix(np.where(init_mask, problem.Y[:, : spec.M_init], 0.0), init_mask)
    state = stream_init(cfg, rng, Y_init, forgetting=spec.forgetting)
    observed = np.zeros((N, t_total), dtype=bool)
    observed[:, : spec.M_init] = init_mask
    out = []
    pts = iter(checkpoints)
    nxt = next(pts)
    full = problem.available.all()
    for j in range(spec.M_init, t_total + 1):
        while nxt is not None and j == nxt:
            out.append((nxt, *_evaluate(state.basis, problem, observed, nxt, spec.ridge_lambda), time.perf_counter() - start))
            nxt = next(pts, None)
        if j == t_total:
            break
        avail = None if full else np.flatnonzero(problem.available[:, j])
        feed_column(state, problem.Y[:, j], avail)
        observed[state.observed[-1], j] = True
    return out, observed


def run_experiment(spec: ExperimentSpec, return_masks: bool = False):
    """Run every (replication, method) pair and return records sorted by (method, replication, t).

    With ``return_masks=True`` also return ``{(method, replication): mask}``
    holding every entry each run observed.
    """
    data = truth = None
    if spec.source == "csv":
        data = _load_csv(spec)
        if spec.ground_truth != "svd_zero_fill":
            truth = read_partial_csv(spec.ground_truth).values
            if truth.shape != (data.shape[0], spec.r):
                raise ValueError(f"ground truth basis must be {data.shape[0]} x {spec.r}, got {truth.shape}")

    records, masks = [], {}
    for rep in range(spec.replications):
        problem = _synthetic_problem(spec, rep) if data is None else _csv_problem(spec, data, truth, rep)
        checkpoints = _checkpoints(spec, problem.shape[1])
        for method in spec.methods:
            rng = derive_rng(spec.base_seed, rep, method)
            if method == "scaledpca":
                rows, observed = _run_scaledpca(spec, problem, rng, checkpoints)
            else:
                rows, observed = _run_altmin(spec, problem, rng, checkpoints, method == "altmin_active")
            masks[method, rep] = observed
            for t, st, err, wall in rows:
                records.append(
                    MetricsRecord(method, rep, t, min(max(st, 0.0), 1.0), err, wall if spec.timing else math.nan)
                )
            log.info("replication %d %s: final sin_theta %.4f", rep, method, rows[-1][1])
    records.sort(key=lambda rec: (rec.method, rec.replication, rec.t))
    if spec.output is not None:
        write_records(records, spec.output)
    return (records, masks) if return_masks else records


def _fmt(x: float) -> str:
    return repr(float(x))


def write_records(records, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_FIELDS)
        for rec in records:
            writer.writerow([rec.method, rec.replication, rec.t, _fmt(rec.sin_theta), _fmt(rec.rel_error), _fmt(rec.wall_seconds)])


def read_records(path) -> list[MetricsRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"results file {path} lacks column(s) {sorted(missing)}")
        return [
            MetricsRecord(
                row["method"], int(row["replication"]), int(row["t"]),
                float(row["sin_theta"]), float(row["rel_error"]), float(row["wall_seconds"]),
            )
            for row in reader
        ]


def _mean_se(values: list[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if a.size == 1:
        return float(a[0]), 0.0
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def summarize(results_path, out_path=None) -> list[dict]:
    """Per (method, t): replication count, mean and standard error of both metrics."""
    records = read_records(results_path)
    if not records:
        raise ValueError(f"{results_path} has no records")
    groups: dict[tuple[str, int], list[MetricsRecord]] = {}
    for rec in records:
        groups.setdefault((rec.method, rec.t), []).append(rec)
    rows = []
    for (method, t), recs in sorted(groups.items()):
        st_mean, st_se = _mean_se([r.sin_theta for r in recs])
        er_mean, er_se = _mean_se([r.rel_error for r in recs])
        rows.append(dict(zip(SUMMARY_FIELDS, (method, t, len(recs), st_mean, st_se, er_mean, er_se))))
    if out_path is not None:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_FIELDS)
            for row in rows:
                writer.writerow([row["method"], row["t"], row["n"]] + [_fmt(row[k]) for k in SUMMARY_FIELDS[3:]])
    return rows
