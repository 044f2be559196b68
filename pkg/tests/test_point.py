import numpy as np
import pytest

from proxicausal.data import POINT, validate_dataset
from proxicausal.dgp import (default_point_spec, generate_point, misspec_point_spec,
                             probit_point_spec)
from proxicausal.point import (fit_ols_baseline, fit_p2sls, fit_proximal_g_computation,
                               fit_standard_g_formula, first_stage)
from proxicausal.point import test_confounding as confounding_test


def dataset_from(columns, roles):
    return validate_dataset(columns, roles, POINT)


def test_ols_unconfounded_recovers_effect():
    data, truth = generate_point(default_point_spec(confounded=False), 10_000, seed=1)
    est = fit_ols_baseline(data)
    assert abs(est.contrast - truth.slope) < 3 * est.contrast_se


def test_ols_confounded_is_biased():
    data, truth = generate_point(default_point_spec(), 10_000, seed=2)
    est = fit_ols_baseline(data)
    assert abs(est.contrast - truth.slope) > 5 * est.contrast_se


def test_g_formula_saturated_matches_cell_means():
    rng = np.random.default_rng(3)
    n = 400
    l = (rng.uniform(size=n) < 0.4).astype(float)
    a = (rng.uniform(size=n) < 0.3 + 0.3 * l).astype(float)
    y = 1.0 + 0.5 * a + 0.8 * l - 0.7 * a * l + rng.standard_normal(n)
    data = dataset_from({"Y": y, "A": a, "L": l},
                        {"Y": "outcome", "A": "treatment", "L": "covariate_x"})
    est = fit_standard_g_formula(data, interactions=True)
    # oracle: direct standardization from the four cell means
    for value in (0.0, 1.0):
        cells = sum(y[(a == value) & (l == lv)].mean() * (l == lv).mean()
                    for lv in (0.0, 1.0))
        assert abs(est.beta[value] - cells) < 1e-10


def test_g_formula_no_covariates_equals_armwise_fit():
    rng = np.random.default_rng(4)
    a = (rng.uniform(size=300) < 0.5).astype(float)
    y = 2.0 - 1.2 * a + rng.standard_normal(300)
    data = dataset_from({"Y": y, "A": a}, {"Y": "outcome", "A": "treatment"})
    est = fit_standard_g_formula(data)
    fit = np.polyfit(a, y, 1)
    for value in (0.0, 1.0):
        assert abs(est.beta[value] - (fit[1] + fit[0] * value)) < 1e-10


def test_g_formula_unconfounded_recovery():
    data, truth = generate_point(default_point_spec(confounded=False), 10_000, seed=5)
    est = fit_standard_g_formula(data)
    boot_se = 0.05  # coarse scale bound; exact SEs come from the bootstrap
    assert abs(est.contrast - truth.slope) < 3 * boot_se


def test_p2sls_exact_micro_dataset():
    a = np.array([0.0, 1.0, 0.0, 1.0, 1.0])
    z = np.array([1.0, 2.0, 3.0, 4.0, 2.5])
    data = dataset_from({"Y": 2 * a, "A": a, "Z": z, "W": z},
                        {"Y": "outcome", "A": "treatment", "Z": "proxy_z",
                         "W": "proxy_w"})
    est = fit_p2sls(data)
    assert abs(est.contrast - 2.0) < 1e-10
    assert abs(est.eta_w[0]) < 1e-10
    assert abs(est.beta[1.0] - 2.0) < 1e-10 and abs(est.beta[0.0]) < 1e-10


def test_p2sls_debiases_default_dgp():
    spec = default_point_spec()
    reps, n = 60, 4000
    est = np.empty(reps)
    for r in range(reps):
        seed = int(np.random.default_rng([101, r]).integers(2**31))
        data, truth = generate_point(spec, n, seed=seed)
        est[r] = fit_p2sls(data).contrast
    mc_se = est.std(ddof=1) / np.sqrt(reps)
    assert abs(est.mean() - truth.slope) < 3 * mc_se


def test_p2sls_robust_to_nonlinear_first_stage():
    # Z depends on U through tanh: the linear W model is wrong, the linear
    # bridge is still exact, and the two-stage moments stay consistent
    spec = misspec_point_spec()
    reps, n = 60, 4000
    est = np.empty(reps)
    for r in range(reps):
        seed = int(np.random.default_rng([103, r]).integers(2**31))
        data, truth = generate_point(spec, n, seed=seed)
        est[r] = fit_p2sls(data).contrast
    mc_se = est.std(ddof=1) / np.sqrt(reps)
    assert abs(est.mean() - truth.slope) < 3 * mc_se


def test_p2sls_requires_proxies():
    rng = np.random.default_rng(6)
    cols = {"Y": rng.standard_normal(50), "A": rng.standard_normal(50)}
    data = dataset_from(cols, {"Y": "outcome", "A": "treatment"})
    with pytest.raises(ValueError):
        fit_p2sls(data)


def test_p2sls_rank_deficient_flag_when_more_w_than_z():
    spec = default_point_spec().__class__(
        d_w=2,
        w_intercepts=(0.2, -0.1), w_u_loadings=(1.0, 0.8),
        w_x_loadings=((0.3,), (0.1,)), noise_w=(0.6, 0.7),
    )
    data, truth = generate_point(spec, 8000, seed=7)
    est = fit_p2sls(data)
    assert est.diagnostics["rank_deficient_stage2"]
    # the treatment slope is still estimated consistently (minimum-norm stage 2)
    assert abs(est.contrast - truth.slope) < 0.15


def test_treatment_recoding_shifts_grid_not_contrast():
    data, _ = generate_point(default_point_spec(), 4000, seed=8)
    est = fit_p2sls(data)
    shifted_cols = dict(data.columns)
    shifted_cols["A"] = data.column("A") + 5.0
    shifted = dataset_from(shifted_cols, data.roles)
    est2 = fit_p2sls(shifted, grid=(5.0, 6.0))
    assert abs(est.contrast - est2.contrast) < 1e-10
    assert abs((est.beta[1.0] - est.beta[0.0]) - (est2.beta[6.0] - est2.beta[5.0])) < 1e-10


def test_outcome_scale_equivariance():
    data, _ = generate_point(default_point_spec(), 4000, seed=9)
    est = fit_p2sls(data)
    scaled_cols = dict(data.columns)
    scaled_cols["Y"] = 3.0 * data.column("Y")
    est3 = fit_p2sls(dataset_from(scaled_cols, data.roles))
    assert abs(est3.contrast - 3.0 * est.contrast) < 1e-8
    assert abs(est3.contrast_se - 3.0 * est.contrast_se) < 1e-8
    np.testing.assert_allclose(est3.eta_w, 3.0 * est.eta_w, atol=1e-8)


def test_first_stage_exact_span_reduces_to_ols():
    # W duplicates a covariate column and Z is empty: the projection returns
    # W itself, so the second stage is plain least squares on (1, A, W, X)
    rng = np.random.default_rng(10)
    n = 200
    x1 = rng.standard_normal(n)
    x2 = rng.standard_normal(n)
    a = (rng.uniform(size=n) < 0.5).astype(float)
    y = 1 + a + x1 - x2 + rng.standard_normal(n)
    data = dataset_from(
        {"Y": y, "A": a, "X1": x1, "X2": x2, "W": x1.copy()},
        {"Y": "outcome", "A": "treatment", "X1": "covariate_x",
         "X2": "covariate_x", "W": "proxy_w"})
    _, w_hat, _ = first_stage(data)
    np.testing.assert_allclose(w_hat[:, 0], x1, atol=1e-10)


def test_pgcomp_linear_equals_p2sls():
    data, _ = generate_point(default_point_spec(), 4000, seed=11)
    a = fit_p2sls(data)
    b = fit_proximal_g_computation(data, bridge="linear")
    for v in (0.0, 1.0):
        assert abs(a.beta[v] - b.beta[v]) < 1e-6
    np.testing.assert_allclose(a.eta_w, b.eta_w, atol=1e-8)


def test_pgcomp_eta_w_zero_collapses_to_x_standardization():
    data, _ = generate_point(default_point_spec(), 3000, seed=12)
    constrained = fit_proximal_g_computation(data, eta_w_zero=True)
    # comparison dataset keeps only the X covariates in view
    keep = {c: data.column(c) for c, r in data.roles.items()
            if r in ("outcome", "treatment", "covariate_x")}
    roles = {c: data.roles[c] for c in keep}
    reduced = dataset_from(keep, roles)
    reference = fit_standard_g_formula(reduced)
    for v in (0.0, 1.0):
        assert abs(constrained.beta[v] - reference.beta[v]) < 1e-10


def test_pgcomp_empty_z_reduces_to_g_formula_over_x_and_w():
    rng = np.random.default_rng(13)
    n = 2000
    x = rng.standard_normal(n)
    w = 0.5 * x + rng.standard_normal(n)
    a = (rng.uniform(size=n) < 1 / (1 + np.exp(-(0.3 * x + 0.4 * w)))).astype(float)
    y = 1 + 0.8 * a + 0.5 * x + 0.7 * w + rng.standard_normal(n)
    data = dataset_from(
        {"Y": y, "A": a, "X": x, "W": w},
        {"Y": "outcome", "A": "treatment", "X": "covariate_x", "W": "proxy_w"})
    est = fit_proximal_g_computation(data)
    assert est.diagnostics["reduction_to_g_formula"]
    reference = fit_standard_g_formula(data)
    for v in (0.0, 1.0):
        assert abs(est.beta[v] - reference.beta[v]) < 1e-10


def test_pgcomp_probit_recovers_interventional_oracle():
    from proxicausal.dgp import point_do_mean_mc
    spec = probit_point_spec()
    oracle1, se1 = point_do_mean_mc(spec, 1.0, 200_000, seed=51)
    oracle0, se0 = point_do_mean_mc(spec, 0.0, 200_000, seed=52)
    reps = 15
    est = np.empty(reps)
    for r in range(reps):
        seed = int(np.random.default_rng([107, r]).integers(2**31))
        data, _ = generate_point(spec, 4000, seed=seed)
        est[r] = fit_proximal_g_computation(data, bridge="probit").contrast
    tol = 3 * np.sqrt(est.var(ddof=1) / reps + se1**2 + se0**2)
    assert abs(est.mean() - (oracle1 - oracle0)) < tol


def test_pgcomp_probit_mc_fallback_agrees_with_closed_form():
    data, _ = generate_point(probit_point_spec(), 600, seed=14)
    closed = fit_proximal_g_computation(data, bridge="probit")
    mc = fit_proximal_g_computation(data, bridge="probit", force_mc=True, seed=3,
                                    n_restarts=1)
    assert mc.diagnostics["used_mc"]
    assert abs(closed.contrast - mc.contrast) < 0.02


def test_confounding_test_distinguishes():
    confounded, _ = generate_point(default_point_spec(), 6000, seed=15)
    strong = confounding_test(confounded, B=120, seed=0)
    assert strong.p_value < 0.01
    clean, _ = generate_point(default_point_spec(confounded=False), 6000, seed=16)
    null = confounding_test(clean, B=120, seed=0)
    assert null.p_value > 0.01
    fast = confounding_test(confounded, covariance="classical")
    assert fast.p_value < 0.01
