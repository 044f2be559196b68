"""Point-treatment effect estimators.

The two-stage estimator regresses each outcome-side proxy on the
treatment-side proxies (plus treatment and covariates) and adds the fitted
values to the outcome regression as a control for the latent confounder.
The g-computation estimator instead fits a parametric bridge through the
fitted proxy law; under linear specifications the two coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy import optimize
from scipy.stats import chi2, norm

from .data import Dataset
from .errors import OptimizerNotConverged, SingleClassResponse
from .linalg import RANK_RCOND, ols

WEAK_FIRST_STAGE_F = 10.0


@dataclass
class EffectEstimate:
    """Counterfactual means on a treatment grid plus inference fields."""

    method: str
    beta: dict
    contrast: float | None = None
    contrast_se: float | None = None
    contrast_ci: tuple[float, float] | None = None
    eta_w: NDArray | None = None
    eta_w_se: NDArray | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.contrast_se is not None and self.contrast_se < 0:
            raise ValueError("standard errors must be nonnegative")
        if self.contrast_ci is not None and self.contrast is not None:
            lo, hi = self.contrast_ci
            if not (lo <= self.contrast <= hi):
                raise ValueError("confidence interval must contain the point estimate")

    def to_dict(self) -> dict:
        def key(k):
            return ",".join(str(int(v)) for v in k) if isinstance(k, tuple) else str(k)

        def clean(v):
            if isinstance(v, np.ndarray):
                return [float(x) for x in v]
            if isinstance(v, (np.floating, np.integer)):
                return float(v)
            if isinstance(v, dict):
                return {str(kk): clean(vv) for kk, vv in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        return {
            "method": self.method,
            "beta": {key(k): float(v) for k, v in self.beta.items()},
            "contrast": None if self.contrast is None else float(self.contrast),
            "contrast_se": None if self.contrast_se is None else float(self.contrast_se),
            "contrast_ci": None if self.contrast_ci is None else [float(v) for v in self.contrast_ci],
            "eta_w": None if self.eta_w is None else [float(v) for v in self.eta_w],
            "eta_w_se": None if self.eta_w_se is None else [float(v) for v in self.eta_w_se],
            "diagnostics": clean(self.diagnostics),
        }


_ADJUST_ROLES = {"x": "covariate_x", "w": "proxy_w", "z": "proxy_z"}


def fit_ols_baseline(data: Dataset, adjust: tuple[str, ...] = ("x",),
                     grid: tuple[float, ...] = (0.0, 1.0)) -> EffectEstimate:
    """Least squares of Y on (1, A, selected covariate blocks).

    ``adjust`` selects blocks from {"x", "w", "z"}. The treatment slope is
    generally biased under latent confounding regardless of the selection;
    this is the comparison baseline, not a recommendation.
    """
    y = data.outcome
    a = data.treatment
    blocks = [np.ones((data.n_rows, 1)), a[:, None]]
    for key in adjust:
        blocks.append(data.matrix(_ADJUST_ROLES[key]))
    design = np.hstack(blocks)
    fit = ols(design, y)
    slope = float(fit.coefficients[1])
    se = float(fit.standard_errors[1])
    cov_means = design[:, 2:].mean(axis=0) if design.shape[1] > 2 else np.empty(0)
    base = float(fit.coefficients[0] + cov_means @ fit.coefficients[2:])
    return EffectEstimate(
        method="ols",
        beta={float(v): base + slope * float(v) for v in grid},
        contrast=slope,
        contrast_se=se,
        diagnostics={"adjust": list(adjust), "rank": fit.rank},
    )


def fit_standard_g_formula(data: Dataset, interactions: bool = False,
                           grid: tuple[float, ...] = (0.0, 1.0)) -> EffectEstimate:
    """Outcome-regression standardization over all measured covariates.

    Fits a linear model of Y on (1, A, L) with L = every covariate and proxy
    column, optionally with A x L interactions (which makes the model
    saturated for binary data), then averages predictions over the empirical
    covariate distribution at each grid value of A.
    """
    y = data.outcome
    a = data.treatment
    L = np.hstack([data.matrix("covariate_x"), data.matrix("proxy_w"), data.matrix("proxy_z")])
    blocks = [np.ones((data.n_rows, 1)), a[:, None], L]
    if interactions and L.shape[1]:
        blocks.append(a[:, None] * L)
    fit = ols(np.hstack(blocks), y)

    beta = {}
    for v in grid:
        av = np.full(data.n_rows, float(v))
        pred_blocks = [np.ones((data.n_rows, 1)), av[:, None], L]
        if interactions and L.shape[1]:
            pred_blocks.append(av[:, None] * L)
        beta[float(v)] = float((np.hstack(pred_blocks) @ fit.coefficients).mean())
    contrast = beta[float(grid[-1])] - beta[float(grid[0])] if len(grid) >= 2 else None
    return EffectEstimate(
        method="g_formula",
        beta=beta,
        contrast=contrast,
        diagnostics={"interactions": interactions, "rank": fit.rank},
    )


def first_stage(data: Dataset) -> tuple[NDArray, NDArray, list[float]]:
    """Elementwise regressions of each W column on (1, Z, A, X).

    Returns (coefficient matrix, fitted values, Z-block F statistic per
    column). The F statistic diagnoses proxy relevance: values below 10 mean
    the treatment-side proxies barely move that W column.
    """
    a = data.treatment
    Z = data.matrix("proxy_z")
    X = data.matrix("covariate_x")
    W = data.matrix("proxy_w")
    n = data.n_rows
    ones = np.ones((n, 1))
    design = np.hstack([ones, Z, a[:, None], X])
    restricted = np.hstack([ones, a[:, None], X])
    d_z = Z.shape[1]

    coefs = np.empty((design.shape[1], W.shape[1]))
    fitted = np.empty_like(W)
    f_stats: list[float] = []
    for k in range(W.shape[1]):
        fit = ols(design, W[:, k])
        coefs[:, k] = fit.coefficients
        fitted[:, k] = fit.fitted_values
        rss_full = float(fit.residuals @ fit.residuals)
        rss_restr = float(np.sum(ols(restricted, W[:, k]).residuals ** 2))
        dof = n - fit.rank
        if d_z == 0 or dof <= 0 or rss_full <= 0:
            f_stats.append(float("inf") if rss_full <= 0 else 0.0)
        else:
            f_stats.append(((rss_restr - rss_full) / d_z) / (rss_full / dof))
    return coefs, fitted, f_stats


def fit_p2sls(data: Dataset, grid: tuple[float, ...] = (0.0, 1.0)) -> EffectEstimate:
    """Two-stage least squares with W endogenous and Z as instruments.

    Stage 1 projects each W column on (1, Z, A, X); stage 2 regresses Y on
    (A, fitted W, X) with an intercept. The treatment coefficient estimates
    the causal slope; the W coefficients are the confounding-control block
    whose nullity is the no-unmeasured-confounding hypothesis. Standard
    errors use the classical two-stage asymptotic covariance (the residual
    is evaluated at the observed W); bootstrap SEs are available through the
    resampling module and are the reference method.
    """
    Z = data.matrix("proxy_z")
    W = data.matrix("proxy_w")
    if Z.shape[1] == 0 or W.shape[1] == 0:
        raise ValueError("fit_p2sls requires nonempty proxy_z and proxy_w sets")
    y = data.outcome
    a = data.treatment
    X = data.matrix("covariate_x")
    n = data.n_rows
    d_w = W.shape[1]

    theta, w_hat, f_stats = first_stage(data)
    ones = np.ones((n, 1))
    projected = np.hstack([ones, a[:, None], w_hat, X])
    stage2 = ols(projected, y)
    coef = stage2.coefficients

    # classical 2SLS covariance: residuals at the observed (not fitted) W
    structural = np.hstack([ones, a[:, None], W, X])
    resid = y - structural @ coef
    dof = n - stage2.rank
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.pinv(projected.T @ projected, rcond=RANK_RCOND, hermitian=True)

    slope = float(coef[1])
    slope_se = float(np.sqrt(max(cov[1, 1], 0.0)))
    eta_w = coef[2:2 + d_w]
    eta_w_cov = cov[2:2 + d_w, 2:2 + d_w]
    eta_w_se = np.sqrt(np.clip(np.diag(eta_w_cov), 0.0, None))
    eta_x = coef[2 + d_w:]

    base = float(coef[0] + eta_w @ W.mean(axis=0)
                 + (eta_x @ X.mean(axis=0) if X.shape[1] else 0.0))
    wald = float(eta_w @ np.linalg.pinv(eta_w_cov, rcond=RANK_RCOND) @ eta_w)
    diagnostics = {
        "first_stage_f": [float(f) for f in f_stats],
        "weak_first_stage": bool(any(f < WEAK_FIRST_STAGE_F for f in f_stats)),
        "rank_deficient_stage2": Z.shape[1] < d_w or not stage2.unique,
        "stage2_rank": stage2.rank,
        "confounding_wald": wald,
        "confounding_p_value": float(chi2.sf(wald, d_w)),
    }
    return EffectEstimate(
        method="p2sls",
        beta={float(v): base + slope * float(v) for v in grid},
        contrast=slope,
        contrast_se=slope_se,
        eta_w=eta_w,
        eta_w_se=eta_w_se,
        diagnostics=diagnostics,
    )


def _probit_negloglik(eta: NDArray, y: NDArray, feats: NDArray, sigma2: NDArray,
                      w_slice: slice) -> tuple[float, NDArray]:
    """Bernoulli negative log likelihood (and gradient) of the attenuated probit."""
    eta_w = eta[w_slice]
    quad = float(eta_w @ sigma2 @ eta_w)
    phi = 1.0 / np.sqrt(1.0 + quad)
    s = feats @ eta
    t = phi * s
    mu = np.clip(norm.cdf(t), 1e-12, 1.0 - 1e-12)
    ll = float(y @ np.log(mu) + (1.0 - y) @ np.log(1.0 - mu))

    dll_dt = (y - mu) / (mu * (1.0 - mu)) * norm.pdf(t)
    grad = phi * (dll_dt @ feats)
    dphi = -(phi**3) * (sigma2 @ eta_w)
    grad[w_slice] += float(dll_dt @ s) * dphi
    return -ll / y.size, -grad / y.size


def fit_proximal_g_computation(data: Dataset, bridge: str = "linear",
                               grid: tuple[float, ...] = (0.0, 1.0),
                               eta_w_zero: bool = False,
                               force_mc: bool = False, mc_draws: int = 4096,
                               seed: int = 0, grad_tol: float = 1e-6,
                               n_restarts: int = 3) -> EffectEstimate:
    """Parametric g-computation through a fitted linear-Gaussian W law.

    With the linear bridge the surrogate-outcome least-squares problem has a
    closed form that reduces to the two-stage moment conditions. With the
    probit-linked bridge (binary Y) the conditional mean is the attenuated
    probit, maximized by quasi-Newton with analytic gradient and random
    restarts; ``force_mc`` switches the conditional mean to a fixed seeded
    Monte-Carlo quadrature (the fallback when no closed form applies).

    With no treatment-side proxies present the bridge equation is solved by
    the outcome regression itself, and the estimator reduces to
    standardization over (X, W).
    """
    y = data.outcome
    a = data.treatment
    X = data.matrix("covariate_x")
    Z = data.matrix("proxy_z")
    W = data.matrix("proxy_w")
    n = data.n_rows
    ones = np.ones((n, 1))
    d_w = W.shape[1]

    if Z.shape[1] == 0 or eta_w_zero or d_w == 0:
        # stable solution: the outcome regression solves the bridge equation
        blocks = [ones, a[:, None]] + ([] if eta_w_zero else [W]) + [X]
        fit = ols(np.hstack(blocks), y)
        coef = fit.coefficients
        used_w = 0 if eta_w_zero else d_w
        eta_w = coef[2:2 + used_w]
        means = np.concatenate([
            W.mean(axis=0) if used_w else np.empty(0),
            X.mean(axis=0) if X.shape[1] else np.empty(0),
        ])
        base = float(coef[0] + means @ coef[2:])
        slope = float(coef[1])
        return EffectEstimate(
            method="proximal_g_computation",
            beta={float(v): base + slope * float(v) for v in grid},
            contrast=slope,
            eta_w=eta_w if used_w else np.empty(0),
            diagnostics={"bridge": "linear", "reduction_to_g_formula": True},
        )

    theta, w_hat, f_stats = first_stage(data)
    w_resid = W - w_hat
    sigma2 = (w_resid.T @ w_resid) / n  # Gaussian MLE residual covariance

    if bridge == "linear":
        design = np.hstack([ones, a[:, None], w_hat, X])
        fit = ols(design, y)
        coef = fit.coefficients
        slope = float(coef[1])
        eta_w = coef[2:2 + d_w]
        eta_x = coef[2 + d_w:]
        base = float(coef[0] + eta_w @ W.mean(axis=0)
                     + (eta_x @ X.mean(axis=0) if X.shape[1] else 0.0))
        return EffectEstimate(
            method="proximal_g_computation",
            beta={float(v): base + slope * float(v) for v in grid},
            contrast=slope,
            eta_w=eta_w,
            diagnostics={"bridge": "linear", "first_stage_f": [float(f) for f in f_stats],
                         "w_sigma2": sigma2.tolist()},
        )

    if bridge != "probit":
        raise ValueError(f"unknown bridge form {bridge!r}")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise SingleClassResponse("the probit bridge requires a binary outcome")

    # eta layout: (intercept, a, W block, X block)
    feats = np.hstack([ones, a[:, None], w_hat, X])
    w_slice = slice(2, 2 + d_w)
    p = feats.shape[1]
    rng = np.random.default_rng(seed)

    if force_mc:
        chol = np.linalg.cholesky(sigma2 + 1e-12 * np.eye(d_w))
        draws = rng.standard_normal((mc_draws, d_w)) @ chol.T

        def objective(eta):
            s = feats @ eta  # (n,)
            shift = draws @ eta[w_slice]  # (mc_draws,)
            t = s[:, None] + shift[None, :]
            mu = np.clip(norm.cdf(t).mean(axis=1), 1e-12, 1.0 - 1e-12)
            ll = float(y @ np.log(mu) + (1.0 - y) @ np.log(1.0 - mu))
            dmu_dt = norm.pdf(t)
            dll_dmu = (y - mu) / (mu * (1.0 - mu))
            grad = (dll_dmu * dmu_dt.mean(axis=1)) @ feats
            grad[w_slice] += dll_dmu @ (dmu_dt @ draws) / mc_draws
            return -ll / n, -grad / n
    else:
        def objective(eta):
            return _probit_negloglik(eta, y, feats, sigma2, w_slice)

    best = None
    starts = [np.zeros(p)] + [0.5 * rng.standard_normal(p) for _ in range(n_restarts - 1)]
    for start in starts:
        res = optimize.minimize(objective, start, jac=True, method="BFGS",
                                options={"gtol": grad_tol / 10, "maxiter": 500})
        gnorm = float(np.max(np.abs(res.jac)))
        if gnorm < grad_tol and (best is None or res.fun < best[0].fun):
            best = (res, gnorm)
    if best is None:
        res = optimize.minimize(objective, np.zeros(p), jac=True, method="BFGS",
                                options={"maxiter": 2000})
        raise OptimizerNotConverged("probit bridge likelihood did not converge",
                                    float(np.max(np.abs(res.jac))))
    res, gnorm = best
    eta = res.x

    # counterfactual means average the bridge at the observed W
    beta = {}
    for v in grid:
        lin = (eta[0] + eta[1] * float(v) + W @ eta[w_slice]
               + (X @ eta[2 + d_w:] if X.shape[1] else 0.0))
        beta[float(v)] = float(norm.cdf(lin).mean())
    contrast = beta[float(grid[-1])] - beta[float(grid[0])] if len(grid) >= 2 else None
    return EffectEstimate(
        method="proximal_g_computation",
        beta=beta,
        contrast=contrast,
        eta_w=eta[w_slice],
        diagnostics={"bridge": "probit", "converged": True, "grad_norm": gnorm,
                     "n_iterations": int(res.nit), "used_mc": force_mc,
                     "w_sigma2": sigma2.tolist(),
                     "first_stage_f": [float(f) for f in f_stats]},
    )


@dataclass(frozen=True)
class ConfoundingTest:
    statistic: float
    p_value: float
    dof: int
    covariance: str


def test_confounding(data: Dataset, B: int = 200, seed: int = 0,
                     covariance: str = "bootstrap") -> ConfoundingTest:
    """Wald test that every confounding-control coefficient is zero.

    Rejection indicates the fitted-proxy block is doing real work, i.e.
    evidence of unmeasured confounding. The covariance of eta_w comes from a
    nonparametric bootstrap by default ("classical" uses the two-stage
    asymptotic covariance and is much faster).
    """
    fit = fit_p2sls(data)
    eta_w = fit.eta_w
    d_w = eta_w.size
    if covariance == "classical":
        stat = float(fit.diagnostics["confounding_wald"])
        return ConfoundingTest(stat, float(chi2.sf(stat, d_w)), d_w, "classical")
    if covariance != "bootstrap":
        raise ValueError(f"unknown covariance choice {covariance!r}")

    from .resampling import bootstrap

    boot = bootstrap(lambda d: fit_p2sls(d).eta_w, data, B=B, seed=seed)
    cov = np.cov(boot.replicates.T, ddof=1).reshape(d_w, d_w)
    stat = float(eta_w @ np.linalg.pinv(cov, rcond=RANK_RCOND) @ eta_w)
    return ConfoundingTest(stat, float(chi2.sf(stat, d_w)), d_w, "bootstrap")
