import math

import numpy as np
import pytest

from core.grid import build_grid
from core.surfaces import EnsembleKind
from stochastics.ensemble import (BLOCK_SIZE, build_ensemble, enumerate_bernoulli_ensemble,
                                  generate_gaussian_ensemble)
from stochastics.estimators import (EstimatorFactory, ExactPrefixEstimator, RegressionEstimator, check_adapted,
                                    cond_exp, martingale_coeffs, monomial_exponents)
from utils.error_handler import EnumerationBoundError, EstimatorError


# ---------------------------------------------------------------- 路径集

def test_bernoulli_enumeration_layout(tree2):
    root_h = math.sqrt(0.5)
    assert tree2.kind is EnsembleKind.BERNOULLI
    assert tree2.paths == 4
    assert np.all(tree2.values[:, 0] == 0.0)
    assert np.allclose(np.abs(tree2.increments), root_h)
    # 编号 0 全为 -√h，编号 3 全为 +√h，前缀相同的路径编号连续
    assert tree2.increments[0, :, 0].tolist() == [-root_h, -root_h]
    assert tree2.increments[3, :, 0].tolist() == [root_h, root_h]
    assert np.all(tree2.increments[:2, 0] < 0) and np.all(tree2.increments[2:, 0] > 0)


def test_bernoulli_values_match_increments(tree8):
    assert tree8.paths == 2 ** 8
    assert np.allclose(np.diff(tree8.values, axis=1), tree8.increments)


def test_bernoulli_two_dimensional():
    ensemble = enumerate_bernoulli_ensemble(build_grid(1.0, 3), dim=2)
    assert ensemble.paths == 2 ** 6
    assert ensemble.values.shape == (64, 4, 2)


def test_bernoulli_bound():
    with pytest.raises(EnumerationBoundError):
        enumerate_bernoulli_ensemble(build_grid(1.0, 5), bound=4)


def test_gaussian_ensemble_is_independent_of_workers(grid8):
    serial = generate_gaussian_ensemble(seed=5, paths=2500, grid=grid8, workers=1)
    threaded = generate_gaussian_ensemble(seed=5, paths=2500, grid=grid8, workers=3)
    assert np.array_equal(serial.values, threaded.values)
    assert serial.values.shape == (2500, 9, 1)


def test_gaussian_ensemble_blocks_are_prefix_stable(grid8):
    small = generate_gaussian_ensemble(seed=5, paths=BLOCK_SIZE, grid=grid8)
    large = generate_gaussian_ensemble(seed=5, paths=3 * BLOCK_SIZE + 7, grid=grid8)
    assert np.array_equal(small.increments, large.increments[:BLOCK_SIZE])


def test_gaussian_ensemble_seed_and_moments(grid8):
    a = generate_gaussian_ensemble(seed=1, paths=20000, grid=grid8)
    b = generate_gaussian_ensemble(seed=2, paths=20000, grid=grid8)
    assert not np.array_equal(a.increments, b.increments)
    assert np.all(a.values[:, 0] == 0.0)
    assert np.var(a.increments) == pytest.approx(grid8.h, rel=0.03)
    assert np.var(a.terminal) == pytest.approx(1.0, rel=0.05)


def test_gaussian_ensemble_rejects_bad_arguments(grid8):
    with pytest.raises(ValueError):
        generate_gaussian_ensemble(seed=1, paths=0, grid=grid8)
    with pytest.raises(ValueError):
        generate_gaussian_ensemble(seed=-1, paths=10, grid=grid8)


def test_build_ensemble_by_name(grid8):
    assert build_ensemble("bernoulli", grid8).paths == 256
    assert build_ensemble("gaussian", grid8, paths=10, seed=3).seed == 3
    with pytest.raises(ValueError):
        build_ensemble("sobol", grid8)


# ---------------------------------------------------------------- 条件期望

def test_exact_cond_exp_of_terminal_square(tree8, exact):
    h = tree8.grid.h
    values = tree8.terminal[:, 0] ** 2
    for j in (0, 3, 8):
        expected = tree8.values[:, j, 0] ** 2 + (8 - j) * h
        assert np.allclose(exact.cond_exp(values, tree8, j), expected, atol=1e-12)


def test_exact_cond_exp_is_adapted(tree8, exact):
    values = np.sin(tree8.terminal)
    for j in range(9):
        estimate = cond_exp(exact, values, tree8, j)
        assert check_adapted(estimate, tree8, j)
    assert not check_adapted(values, tree8, 2)


def test_exact_martingale_coefficients(tree8, exact):
    # W_T² = E_j[W_T²] + 2W_j ΔW_j + ...，系数为 2W_j
    coeffs = martingale_coeffs(exact, tree8.terminal[:, :1] ** 2, tree8, 4)
    assert coeffs.shape == (256, 1, 1)
    assert np.allclose(coeffs[:, 0, 0], 2.0 * tree8.values[:, 4, 0], atol=1e-12)


def test_exact_cond_exp_tower_property(tree8, exact):
    values = np.sin(tree8.terminal[:, 0]) + tree8.terminal[:, 0] ** 3
    for i, j in ((0, 3), (2, 5), (4, 8)):
        inner = exact.cond_exp(values, tree8, j)
        assert np.allclose(exact.cond_exp(inner, tree8, i), exact.cond_exp(values, tree8, i), atol=1e-12)


def _martingale_terms(estimator, values, ensemble):
    steps = ensemble.grid.steps
    coeffs = np.stack([martingale_coeffs(estimator, values[:, None], ensemble, j)[:, 0, 0] for j in range(steps)],
                      axis=1)
    return coeffs * ensemble.increments[:, :, 0]


def test_martingale_increments_are_orthogonal(tree8, exact):
    terms = _martingale_terms(exact, np.exp(tree8.terminal[:, 0]), tree8)
    gram = terms.T @ terms / tree8.paths
    assert np.allclose(gram - np.diag(np.diag(gram)), 0.0, atol=1e-12)
    for j in range(8):
        assert np.allclose(exact.cond_exp(terms[:, j], tree8, j), 0.0, atol=1e-12)


def test_discrete_martingale_representation(tree8, exact):
    values = np.cos(tree8.terminal[:, 0]) + tree8.values[:, 3, 0] * tree8.terminal[:, 0]
    rebuilt = values.mean() + _martingale_terms(exact, values, tree8).sum(axis=1)
    assert np.allclose(rebuilt, values, atol=1e-12)


def test_regression_martingale_coefficients_of_scaled_square():
    # V = t·W_T²，系数为 2t·W_j
    t = 0.5
    ensemble = generate_gaussian_ensemble(seed=7, paths=40000, grid=build_grid(1.0, 4))
    values = t * ensemble.terminal[:, :1] ** 2
    coeffs = martingale_coeffs(RegressionEstimator(3), values, ensemble, 2)[:, 0, 0]
    expected = 2.0 * t * ensemble.values[:, 2, 0]
    assert np.sqrt(np.mean((coeffs - expected) ** 2)) <= 0.1 * np.sqrt(np.mean(expected ** 2))


def test_gaussian_moments_at_large_sample():
    grid = build_grid(1.0, 4)
    ensemble = generate_gaussian_ensemble(seed=8, paths=100000, grid=grid)
    terminal = ensemble.terminal[:, 0]
    assert abs(terminal.mean()) <= 0.02
    assert terminal.var() == pytest.approx(1.0, abs=0.03)
    assert np.mean(terminal ** 4) == pytest.approx(3.0, abs=0.2)
    increments = ensemble.increments[:, :, 0]
    assert np.allclose(increments.var(axis=0), grid.h, atol=0.01)
    assert abs(np.mean(increments[:, 0] * increments[:, 1])) <= 0.005


def test_regression_rank_is_cached_per_step(gaussian8, monkeypatch):
    estimator = RegressionEstimator(3)
    calls = []
    rank = np.linalg.matrix_rank
    monkeypatch.setattr(np.linalg, "matrix_rank", lambda a, *args, **kw: calls.append(1) or rank(a, *args, **kw))
    values = gaussian8.terminal[:, 0]
    first = estimator.cond_exp(values, gaussian8, 3)
    estimator.cond_exp(values ** 2, gaussian8, 3)
    assert len(calls) == 1
    assert np.allclose(estimator.cond_exp(values, gaussian8, 3), first)
    estimator.reset()
    estimator.cond_exp(values, gaussian8, 3)
    assert len(calls) == 2


def test_exact_estimator_requires_bernoulli(gaussian8, exact):
    with pytest.raises(EstimatorError):
        exact.cond_exp(gaussian8.terminal, gaussian8, 1)


def test_check_adapted_is_undecidable_on_gaussian(gaussian8):
    assert check_adapted(gaussian8.values[:, 3], gaussian8, 3) is None


def test_regression_coefficients_of_square():
    grid = build_grid(1.0, 2)
    ensemble = generate_gaussian_ensemble(seed=3, paths=20000, grid=grid)
    coeffs, degree = RegressionEstimator(2).fit_coefficients(ensemble.terminal[:, 0] ** 2, ensemble, 1)
    # E[W_2² | W_1] = W_1² + h
    assert degree == 2
    assert coeffs == pytest.approx([0.5, 0.0, 1.0], abs=0.05)


def test_regression_at_time_zero_is_the_mean(gaussian8, regress):
    values = gaussian8.terminal[:, 0]
    estimate = regress.cond_exp(values, gaussian8, 0)
    assert np.allclose(estimate, values.mean())


def test_regression_rank_fallback_is_counted(tree2):
    estimator = RegressionEstimator(3)
    estimator.cond_exp(tree2.terminal[:, 0], tree2, 1)
    assert estimator.fallback_counts == {1: 1}
    estimator.reset()
    assert estimator.fallback_counts == {}


def test_regression_exact_on_tree_when_degree_suffices(tree2):
    # 第 1 步 W_1 只取两个值，一次多项式即可插值
    estimator = RegressionEstimator(1)
    values = tree2.terminal[:, 0] ** 2
    expected = ExactPrefixEstimator().cond_exp(values, tree2, 1)
    assert np.allclose(estimator.cond_exp(values, tree2, 1), expected, atol=1e-12)


def test_monomial_ordering():
    assert monomial_exponents(1, 2) == [(0,), (1,), (2,)]
    assert monomial_exponents(2, 1) == [(0, 0), (1, 0), (0, 1)]


@pytest.mark.parametrize("text, label", [("exact", "exact"), ("regress", "regress:3"), ("REGRESS:2", "regress:2")])
def test_estimator_factory(text, label):
    assert EstimatorFactory.create(text).label == label


@pytest.mark.parametrize("text", ["lsq", "regress:x", "regress:-1", ""])
def test_estimator_factory_rejects(text):
    with pytest.raises(EstimatorError):
        EstimatorFactory.create(text)
