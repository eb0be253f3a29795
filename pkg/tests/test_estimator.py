import math

import numpy as np
import pytest

from colspace import estimator as est_mod
from colspace.core import CoherenceUnreachableError, PartialMatrix, SingularDesignError, coherence
from colspace.data import gen_columns, gen_ground_truth
from colspace.estimator import (
    EstimatorConfig,
    _initialize,
    column_space_estimate,
    double_column_space_estimate,
    fit_w_block,
    fit_x_block,
    median_ls,
    n_median_blocks,
    scaled_pca,
    scaling_factors,
    smooth_qr,
)
from colspace.evaluation import sin_theta
from colspace.sampling import SamplingBudget, uniform_subset

from conftest import lstsq_oracle, random_orthonormal


def random_mask(rng, N, M, k):
    mask = np.zeros((N, M), dtype=bool)
    for j in range(M):
        mask[uniform_subset(N, k, rng), j] = True
    return mask


def masked_objective(Y, mask, X, W):
    return np.sum((mask * (Y - X @ W.T)) ** 2)


# -- ScaledPCA


def test_scaling_factor_values():
    off, diag = scaling_factors(10, 10)
    assert diag == 1.0
    off, diag = scaling_factors(50, 12)
    assert off == pytest.approx(2500 / 132)
    assert off == pytest.approx(18.9394, abs=1e-4)
    off, _ = scaling_factors(50, 12, "unbiased")
    assert off == pytest.approx(50 * 49 / 132)
    with pytest.raises(ValueError):
        scaling_factors(50, 1)
    with pytest.raises(ValueError):
        scaling_factors(50, 4, "bernoulli")


def test_scaled_pca_rank_one_fully_observed():
    # at k = N the literal off-diagonal factor is N/(N-1), so the estimate is
    # slightly tilted by the diagonal correction; the unbiased variant is exact
    literal = []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        u = rng.standard_normal((6, 1))
        Y = u @ rng.standard_normal((1, 200))
        full = PartialMatrix(Y, np.ones_like(Y, dtype=bool))
        oracle = np.linalg.svd(Y, full_matrices=False)[0][:, :1]
        literal.append(sin_theta(scaled_pca(full, 6, 1), oracle))
        assert sin_theta(scaled_pca(full, 6, 1, "unbiased"), oracle) <= 1e-10
    literal = np.array(literal)
    assert np.mean(literal <= 0.05) >= 0.95
    assert literal.max() <= 0.1


def test_scaled_pca_matches_hand_rescaled_covariance(rng):
    Y = rng.standard_normal((7, 30))
    mask = random_mask(rng, 7, 30, 4)
    P = np.where(mask, Y, 0.0)
    C = P @ P.T
    Cs = C * 49 / 12
    for i in range(7):
        Cs[i, i] = C[i, i] * 7 / 4
    w, V = np.linalg.eigh(Cs)
    oracle = V[:, np.argsort(w)[::-1][:2]]
    assert sin_theta(scaled_pca(PartialMatrix(Y, mask), 4, 2), oracle) <= 1e-10


def test_scaled_pca_requires_constant_count(rng):
    Y = rng.standard_normal((5, 4))
    mask = random_mask(rng, 5, 4, 3)
    mask[:, 0] = True
    with pytest.raises(ValueError, match="column 0"):
        scaled_pca(PartialMatrix(Y, mask), 3, 1)
    with pytest.raises(ValueError):
        scaled_pca(PartialMatrix(Y, random_mask(rng, 5, 4, 1)), 1, 1)


# -- least squares blocks


def test_fit_w_orthonormal_projection():
    Y = PartialMatrix(np.array([[3.0], [0.0]]), np.ones((2, 1), dtype=bool))
    assert fit_w_block(Y, np.array([[1.0], [0.0]]))[0, 0] == pytest.approx(3.0)


def test_fit_w_against_normal_equations(rng):
    X = random_orthonormal(rng, 8, 2)
    Y = rng.standard_normal((8, 5))
    mask = random_mask(rng, 8, 5, 3)
    W = fit_w_block(PartialMatrix(Y, mask), X)
    for m in range(5):
        rows = mask[:, m]
        np.testing.assert_allclose(W[m], lstsq_oracle(X[rows], Y[rows, m]), atol=1e-9)


def test_fit_w_is_separable(rng):
    X = random_orthonormal(rng, 10, 3)
    Y = rng.standard_normal((10, 6))
    mask = random_mask(rng, 10, 6, 5)
    joint = fit_w_block(PartialMatrix(Y, mask), X)
    for m in range(6):
        single = fit_w_block(PartialMatrix(Y[:, [m]], mask[:, [m]]), X)
        np.testing.assert_allclose(joint[m], single[0], atol=1e-12)


def test_fit_w_singular_design_names_column():
    X = np.eye(4)[:, :2]
    mask = np.zeros((4, 2), dtype=bool)
    mask[[0, 1], 0] = True
    mask[[0, 2], 1] = True  # column 1 never sees coordinate 2 of X
    with pytest.raises(SingularDesignError) as info:
        fit_w_block(PartialMatrix(np.ones((4, 2)), mask), X)
    assert info.value.index == 1
    assert info.value.sigma_min <= 1e-10
    # ridge fallback solves it
    W = fit_w_block(PartialMatrix(np.ones((4, 2)), mask), X, ridge=0.05)
    assert np.all(np.isfinite(W))


def test_fit_x_orthonormal_projection(rng):
    W = random_orthonormal(rng, 12, 3)
    Y = rng.standard_normal((5, 12))
    X = fit_x_block(PartialMatrix(Y, np.ones_like(Y, dtype=bool)), W)
    np.testing.assert_allclose(X, Y @ W, atol=1e-12)


def test_fit_x_against_normal_equations(rng):
    W = rng.standard_normal((40, 2))
    Y = rng.standard_normal((6, 40))
    mask = random_mask(rng, 6, 40, 2)
    X = fit_x_block(PartialMatrix(Y, mask), W)
    for n in range(6):
        cols = mask[n]
        np.testing.assert_allclose(X[n], lstsq_oracle(W[cols], Y[n, cols]), atol=1e-9)


def test_fit_x_is_row_separable(rng):
    W = rng.standard_normal((30, 2))
    Y = rng.standard_normal((6, 30))
    mask = random_mask(rng, 6, 30, 3)
    joint = fit_x_block(PartialMatrix(Y, mask), W)
    for n in range(6):
        single = fit_x_block(PartialMatrix(Y[[n]], mask[[n]]), W)
        np.testing.assert_allclose(joint[n], single[0], atol=1e-12)


def test_fit_x_singular_row():
    mask = np.zeros((3, 4), dtype=bool)
    mask[0] = True
    mask[1] = True
    mask[2, 0] = True
    with pytest.raises(SingularDesignError) as info:
        fit_x_block(PartialMatrix(np.ones((3, 4)), mask), np.eye(4)[:, :2] + 0.1)
    assert info.value.index == 2 and info.value.axis == "row"


def test_block_fits_are_first_order_optimal(rng):
    for trial in range(200):
        N, M, r = 8, 12, 2
        Y = rng.standard_normal((N, M))
        mask = random_mask(rng, N, M, 5)
        lam = 0.05 if trial % 2 else None
        X = random_orthonormal(rng, N, r)
        W = fit_w_block(PartialMatrix(Y, mask), X, lam)
        Xf = fit_x_block(PartialMatrix(Y, mask), W, lam)
        pen = lam or 0.0
        base_w = masked_objective(Y, mask, X, W) + pen * np.sum(W**2)
        base_x = masked_objective(Y, mask, Xf, W) + pen * np.sum(Xf**2)
        m, n = rng.integers(M), rng.integers(N)
        for sign in (1, -1):
            d = rng.standard_normal(r)
            d *= sign * 1e-4 / np.linalg.norm(d)
            W2 = W.copy()
            W2[m] += d
            X2 = Xf.copy()
            X2[n] += d
            assert masked_objective(Y, mask, X, W2) + pen * np.sum(W2**2) >= base_w - 1e-12
            assert masked_objective(Y, mask, X2, W) + pen * np.sum(X2**2) >= base_x - 1e-12


# -- SmoothQR


def test_smooth_qr_incoherent_input_untouched(rng):
    W0 = rng.standard_normal((100, 3))
    res = smooth_qr(W0, 0.1, 10.0, rng)
    assert res.n_iter == 0
    assert not res.noise.any()
    np.testing.assert_allclose(res.basis, np.linalg.qr(W0)[0] * np.sign(np.diag(np.linalg.qr(W0)[1])), atol=1e-12)


def test_smooth_qr_pure_spike_is_unreachable():
    # noise is capped at ||W0||, which cannot flatten a single spike of that size
    W0 = np.zeros((100, 1))
    W0[0] = 1.0
    W0[1:] = 1e-6
    with pytest.raises(CoherenceUnreachableError) as info:
        smooth_qr(W0, 0.1, 5.0, np.random.default_rng(0))
    assert info.value.final_coherence > 5.0


def test_smooth_qr_moderate_spike_meets_target():
    M, eps, target = 100, 0.1, 9.0
    W0 = np.full((M, 1), 0.1)
    W0[0] = 0.32
    assert coherence(W0 / np.linalg.norm(W0)) > target
    res = smooth_qr(W0, eps, target, np.random.default_rng(3))
    assert coherence(res.basis) <= target
    # sigma doubles from eps ||W0|| / M and the loop stops once it passes ||W0||
    assert 1 <= res.n_iter <= math.log2(M / eps) + 1
    assert np.linalg.norm(res.noise, 2) <= 2 * np.linalg.norm(W0, 2)
    np.testing.assert_allclose(res.perturbed, W0 + res.noise)


def test_smooth_qr_deterministic():
    W0 = np.full((100, 1), 0.1)
    W0[0] = 0.32
    a = smooth_qr(W0, 0.1, 9.0, np.random.default_rng(9))
    b = smooth_qr(W0, 0.1, 9.0, np.random.default_rng(9))
    assert a.n_iter > 0
    np.testing.assert_array_equal(a.basis, b.basis)
    np.testing.assert_array_equal(a.noise, b.noise)


def test_smooth_qr_coherence_postcondition(rng):
    for _ in range(100):
        M, r = int(rng.integers(20, 80)), int(rng.integers(1, 4))
        W0 = rng.standard_cauchy((M, r))
        target = float(rng.uniform(1.5, M / r))
        try:
            res = smooth_qr(W0, 0.1, target, rng)
        except CoherenceUnreachableError as exc:
            assert exc.final_coherence > target
            continue
        assert coherence(res.basis) <= target


# -- MedianLS


def _cfg(N=10, r=2, k1=4, k2=4, **kw):
    return EstimatorConfig(r=r, budget=SamplingBudget(k1, k2, N), M_init=20, **kw)


def test_median_blocks_count():
    assert n_median_blocks(50) == 4
    assert n_median_blocks(2) == 1
    assert n_median_blocks(50, 2.0) == 8


def test_median_ls_fixed_point_noise_free(rng):
    N, r, M = 10, 2, 30
    U = random_orthonormal(rng, N, r)
    cfg = _cfg(N, r, 5, 5)
    L = n_median_blocks(M)
    Y = U @ rng.standard_normal((r, L * M))
    full = np.ones_like(Y, dtype=bool)
    out = median_ls(U, Y, full, full, M, 0, 0.1, cfg, rng)
    assert sin_theta(out, U) <= 1e-8


def test_median_ls_single_block_in_practical_mode(rng, monkeypatch):
    calls = []
    real = est_mod.fit_x_block
    monkeypatch.setattr(est_mod, "fit_x_block", lambda *a: calls.append(1) or real(*a))
    N, r, M = 10, 2, 30
    U = random_orthonormal(rng, N, r)
    Y = U @ rng.standard_normal((r, M))
    full = np.ones_like(Y, dtype=bool)
    out = median_ls(U, Y, full, full, M, 0, 0.1, _cfg(N, r, 5, 5, practical_mode=True), rng)
    assert len(calls) == 1
    assert sin_theta(out, U) <= 1e-8


def test_median_ls_takes_elementwise_median(rng, monkeypatch):
    N, r, M = 6, 2, 8
    A = rng.standard_normal((N, r))
    outlier = A + 100.0
    results = iter([A, outlier, A])
    monkeypatch.setattr(est_mod, "n_median_blocks", lambda M, C=1.0: 3)
    monkeypatch.setattr(est_mod, "fit_x_block", lambda *a: next(results))
    Y = rng.standard_normal((N, 3 * M))
    full = np.ones_like(Y, dtype=bool)
    out = median_ls(random_orthonormal(rng, N, r), Y, full, full, M, 0, 0.1, _cfg(6, 2, 3, 3), rng)
    assert sin_theta(out, np.linalg.qr(A)[0]) <= 1e-12


def test_median_ls_needs_enough_columns(rng):
    Y = rng.standard_normal((10, 20))
    full = np.ones_like(Y, dtype=bool)
    with pytest.raises(ValueError, match="needs columns"):
        median_ls(random_orthonormal(rng, 10, 2), Y, full, full, 30, 0, 0.1, _cfg(), rng)


# -- block schedules


@pytest.mark.parametrize(
    "practical, scaling", [(True, "literal"), (True, "unbiased"), (False, "unbiased")]
)
def test_noise_free_full_observation_is_exact(practical, scaling):
    rng = np.random.default_rng(1)
    N, r = 12, 3
    model = gen_ground_truth(N, r, "gaussian", rng)
    cfg = EstimatorConfig(r=r, budget=SamplingBudget(6, 6, N), M_init=30, M=40, s=1,
                          practical_mode=practical, scaling=scaling)
    L = 1 if practical else n_median_blocks(40)
    Y, _ = gen_columns(model, 30 + L * 40, rng)
    X, mask = column_space_estimate(Y, cfg, seed=4)
    assert sin_theta(X, model.column_space()) <= 1e-6
    assert mask.all()


def test_required_column_count_is_reported(rng):
    cfg = EstimatorConfig(r=2, budget=SamplingBudget(3, 3, 10), M_init=20, M=30, s=2)
    need = 20 + 2 * n_median_blocks(30) * 30
    with pytest.raises(ValueError, match=f"at least {need} columns"):
        column_space_estimate(rng.standard_normal((10, need - 1)), cfg)


@pytest.mark.parametrize("active", [False, True])
def test_sample_count_accounting(active):
    rng = np.random.default_rng(2)
    model = gen_ground_truth(15, 2, "gaussian", rng, 0.01)
    cfg = EstimatorConfig(r=2, budget=SamplingBudget(3, 4, 15), M_init=40, M=30, s=2,
                          active=active, practical_mode=True)
    Y, _ = gen_columns(model, 40 + 60, rng)
    X, mask = column_space_estimate(Y, cfg, seed=0)
    np.testing.assert_array_equal(mask.sum(axis=0), 7)
    np.testing.assert_allclose(X.T @ X, np.eye(2), atol=1e-8)


def test_block_estimate_improves_on_initialization():
    init, final = [], []
    for rep in range(20):
        rng = np.random.default_rng(100 + rep)
        model = gen_ground_truth(10, 2, "gaussian", rng, 0.01)
        cfg = EstimatorConfig(r=2, budget=SamplingBudget(3, 3, 10), M_init=50, M=40, s=3, practical_mode=True)
        Y, _ = gen_columns(model, 50 + 120, rng)
        U = model.column_space()
        X0, _ = _initialize(Y, cfg, rep)
        X, _ = column_space_estimate(Y, cfg, seed=rep)
        init.append(sin_theta(X0, U))
        final.append(sin_theta(X, U))
    assert np.median(final) < np.median(init)


def test_double_schedule_degenerates_to_single(rng):
    model = gen_ground_truth(10, 2, "gaussian", rng, 0.05)
    Y, _ = gen_columns(model, 30 + 2 * n_median_blocks(25) * 25, rng)
    single = EstimatorConfig(r=2, budget=SamplingBudget(3, 3, 10), M_init=30, M=25, s=2, practical_mode=True)
    double = EstimatorConfig(r=2, budget=SamplingBudget(3, 3, 10), M_init=30, M1=25, s1=2, M2=25, s2=0,
                             practical_mode=True)
    a, ma = column_space_estimate(Y, single, seed=7)
    b, mb = double_column_space_estimate(Y, double, seed=7)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(ma, mb)
    # s1 = 0 runs only the second phase
    only2 = EstimatorConfig(r=2, budget=SamplingBudget(3, 3, 10), M_init=30, M1=99, s1=0, M2=25, s2=2,
                            practical_mode=True)
    c, _ = double_column_space_estimate(Y, only2, seed=7)
    np.testing.assert_array_equal(a, c)


def test_second_phase_usually_helps():
    better = 0
    for rep in range(50):
        rng = np.random.default_rng(500 + rep)
        model = gen_ground_truth(10, 2, "gaussian", rng, 0.05)
        Y, _ = gen_columns(model, 40 + 2 * 30 + 2 * 60, rng)
        kw = dict(r=2, budget=SamplingBudget(3, 3, 10), M_init=40, M1=30, s1=2, M2=60, practical_mode=True)
        U = model.column_space()
        phase1, _ = double_column_space_estimate(Y, EstimatorConfig(s2=0, **kw), seed=rep)
        full, _ = double_column_space_estimate(Y, EstimatorConfig(s2=2, **kw), seed=rep)
        better += sin_theta(full, U) <= sin_theta(phase1, U)
    assert better >= 30


def test_theory_mode_runs_with_smooth_qr_and_median():
    rng = np.random.default_rng(8)
    model = gen_ground_truth(12, 2, "gaussian", rng, 0.01)
    cfg = EstimatorConfig(r=2, budget=SamplingBudget(5, 5, 12), M_init=60, M=40, s=1)
    Y, _ = gen_columns(model, 60 + n_median_blocks(40) * 40, rng)
    X, mask = column_space_estimate(Y, cfg, seed=1)
    np.testing.assert_allclose(X.T @ X, np.eye(2), atol=1e-8)
    np.testing.assert_array_equal(mask.sum(axis=0), 10)


def test_config_validation():
    b = SamplingBudget(3, 3, 10)
    with pytest.raises(ValueError):
        EstimatorConfig(r=2, budget=b, M_init=1)
    with pytest.raises(ValueError):
        EstimatorConfig(r=2, budget=b, M_init=10, epsilon=0)
    with pytest.raises(ValueError, match="k1 >= r"):
        EstimatorConfig(r=4, budget=b, M_init=10, active=True)
    assert EstimatorConfig(r=2, budget=b, M_init=10).sample_splitting is True
    assert EstimatorConfig(r=2, budget=b, M_init=10, practical_mode=True).sample_splitting is False
