import numpy as np
import pytest

from proxicausal.errors import AllZeroWeights, DimensionMismatch, SingleClassResponse
from proxicausal.linalg import logistic_irls, ols


def test_exact_line():
    fit = ols([[1, 1], [1, 2], [1, 3]], [1, 2, 3])
    np.testing.assert_allclose(fit.coefficients, [0.0, 1.0], atol=1e-12)
    assert fit.unique


def test_duplicated_column_minimum_norm():
    c = np.array([1.0, 2.0, 3.0])
    fit = ols(np.column_stack([c, c]), c)
    np.testing.assert_allclose(fit.coefficients, [0.5, 0.5], atol=1e-12)
    assert fit.rank == 1
    assert not fit.unique


def test_noiseless_recovery_against_matrix_oracle():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 4))
    truth = np.array([1.0, -2.0, 0.5, 3.0])
    y = X @ truth  # oracle: direct matrix multiply, no noise
    fit = ols(X, y)
    np.testing.assert_allclose(fit.coefficients, truth, atol=1e-10)
    np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-9)


def test_residuals_complement_fitted_exactly():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((30, 3))
    y = rng.standard_normal(30)
    fit = ols(X, y)
    # the decomposition identity holds bitwise by construction
    assert np.array_equal(fit.residuals, y - fit.fitted_values)


def test_residual_orthogonality_scale():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((200, 5))
    y = rng.standard_normal(200)
    fit = ols(X, y)
    bound = 1e-8 * np.linalg.norm(X) * np.linalg.norm(y)
    assert np.max(np.abs(X.T @ fit.residuals)) <= bound


def test_constant_weights_match_unweighted():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 3))
    y = rng.standard_normal(40)
    unweighted = ols(X, y)
    weighted = ols(X, y, weights=np.full(40, 7.5))
    np.testing.assert_allclose(weighted.coefficients, unweighted.coefficients, atol=1e-10)


def test_projection_idempotence():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((60, 4))
    y = rng.standard_normal(60)
    first = ols(X, y)
    second = ols(X, first.fitted_values)
    np.testing.assert_allclose(second.fitted_values, first.fitted_values, atol=1e-10)


def test_weighted_solution_matches_normal_equations():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((80, 3))
    y = rng.standard_normal(80)
    w = rng.uniform(0.5, 2.0, size=80)
    fit = ols(X, y, weights=w)
    # oracle: solve X'WX b = X'Wy directly
    oracle = np.linalg.solve(X.T @ (X * w[:, None]), X.T @ (w * y))
    np.testing.assert_allclose(fit.coefficients, oracle, atol=1e-10)


def test_dimension_and_weight_errors():
    with pytest.raises(DimensionMismatch):
        ols(np.ones((3, 2)), np.ones(4))
    with pytest.raises(AllZeroWeights):
        ols(np.ones((3, 1)), np.ones(3), weights=np.zeros(3))
    with pytest.raises(AllZeroWeights):
        ols(np.ones((3, 1)), np.ones(3), weights=np.array([1.0, -1.0, 1.0]))


def test_logistic_intercept_only_closed_form():
    y = np.array([1.0] * 30 + [0.0] * 70)
    fit = logistic_irls(np.ones((100, 1)), y)
    assert fit.converged
    assert abs(fit.coefficients[0] - np.log(3 / 7)) < 1e-6
    # score equation at the optimum
    p = fit.predict_proba(np.ones((100, 1)))
    assert np.max(np.abs(np.ones((100, 1)).T @ (y - p))) < 1e-6


def test_logistic_null_slope_within_asymptotic_se():
    rng = np.random.default_rng(6)
    n = 10_000
    x = rng.standard_normal(n)
    y = (rng.uniform(size=n) < 0.4).astype(float)  # independent of x
    design = np.column_stack([np.ones(n), x])
    fit = logistic_irls(design, y)
    # oracle SE: sqrt(1 / sum(p(1-p) x^2)) at p = 0.4
    se = 1.0 / np.sqrt(0.4 * 0.6 * np.sum(x**2))
    assert abs(fit.coefficients[1]) < 3 * se


def test_logistic_loglik_nondecreasing():
    rng = np.random.default_rng(7)
    X = np.column_stack([np.ones(200), rng.standard_normal(200)])
    p = 1 / (1 + np.exp(-(0.3 + 0.8 * X[:, 1])))
    y = (rng.uniform(size=200) < p).astype(float)
    fit = logistic_irls(X, y)
    path = np.array(fit.log_likelihood_path)
    assert np.all(np.diff(path) >= -1e-10)


def test_logistic_separation_flag():
    x = np.array([-2.0, -1.0, 1.0, 2.0])
    y = np.array([0.0, 0.0, 1.0, 1.0])  # perfectly separated
    fit = logistic_irls(np.column_stack([np.ones(4), x]), y)
    assert fit.separation


def test_logistic_single_class_error():
    with pytest.raises(SingleClassResponse):
        logistic_irls(np.ones((10, 1)), np.ones(10))
    with pytest.raises(SingleClassResponse):
        logistic_irls(np.ones((10, 1)), np.full(10, 0.5))
