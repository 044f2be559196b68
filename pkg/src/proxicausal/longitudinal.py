"""Longitudinal estimators for joint effects of time-varying treatments.

The recursive least-squares procedure walks backwards through the follow-up
periods. At each stage it projects the proxy-history features onto the
period's information set, regresses the running pseudo-outcome on those
projections, and re-evaluates the fitted bridge at the observed proxies to
form the next pseudo-outcome. Because each projection is an in-sample least
squares fit, the stage moments hold even when the proxy projections are
misspecified; the parametric g-computation variant gives that protection up
for efficiency when its fitted proxy law is correct.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .data import Dataset, WideRecords
from .errors import DimensionMismatch
from .linalg import logistic_irls, ols
from .point import EffectEstimate, WEAK_FIRST_STAGE_F

EXTREME_WEIGHT = 50.0


@dataclass(frozen=True)
class FeatureMap:
    """Turns a variable history (n, periods, d) into a feature block (n, q).

    Named maps: "cum" sums the periods entrywise, "concat" lays the periods
    side by side, "last" keeps the most recent period, and
    "full_with_interaction" adds all products of scalar per-period values
    (main effects first, then pairwise and higher products in subset order).
    """

    name: str
    fn: Callable[[NDArray], NDArray] | None = None

    def apply(self, history: NDArray) -> NDArray:
        h = np.asarray(history, dtype=float)
        if h.ndim == 2:
            h = h[:, :, None]
        n, periods, d = h.shape
        if self.name == "cum":
            return h.sum(axis=1)
        if self.name == "concat":
            return h.reshape(n, periods * d)
        if self.name == "last":
            return h[:, -1, :]
        if self.name == "full_with_interaction":
            if d != 1:
                raise DimensionMismatch("full_with_interaction expects scalar per-period values")
            cols = []
            for size in range(1, periods + 1):
                for subset in combinations(range(periods), size):
                    cols.append(np.prod(h[:, list(subset), 0], axis=1))
            return np.column_stack(cols)
        if self.name == "custom":
            if self.fn is None:
                raise ValueError("custom FeatureMap requires fn")
            return np.atleast_2d(np.asarray(self.fn(h), dtype=float).T).T
        raise ValueError(f"unknown feature map {self.name!r}")


CUM = FeatureMap("cum")
CONCAT = FeatureMap("concat")
LAST = FeatureMap("last")
FULL_WITH_INTERACTION = FeatureMap("full_with_interaction")

_NAMED_MAPS = {"cum": CUM, "concat": CONCAT, "last": LAST,
               "full_with_interaction": FULL_WITH_INTERACTION}


def named_map(name: str) -> FeatureMap:
    try:
        return _NAMED_MAPS[name]
    except KeyError:
        raise ValueError(f"unknown feature map {name!r}") from None


@dataclass(frozen=True)
class StageMaps:
    """Per-stage feature-map choices; a bare map applies to every stage."""

    treatment: FeatureMap | tuple[FeatureMap, ...] = CUM
    w: FeatureMap | tuple[FeatureMap, ...] = CONCAT
    x: FeatureMap | tuple[FeatureMap, ...] = CONCAT
    z: FeatureMap | tuple[FeatureMap, ...] = CONCAT

    def get(self, which: str, stage: int) -> FeatureMap:
        value = getattr(self, which)
        return value[stage] if isinstance(value, tuple) else value


DEFAULT_MAPS = StageMaps()


@dataclass
class RecursiveFit:
    """Stagewise output of the recursive least-squares algorithm.

    Coefficient blocks are indexed by stage (ascending). The stored observed
    feature blocks support re-evaluating each stage's bridge at any regime
    via ``stage_h``.
    """

    n_periods: int
    maps: StageMaps
    stage_first_stage: tuple[NDArray, ...]
    stage_eta: tuple[NDArray, ...]
    stage_eta_w: tuple[NDArray, ...]
    orthogonality: tuple[float, ...]
    weak_proxy_stages: tuple[int, ...]
    estimate: EffectEstimate
    _w_feats: tuple[NDArray, ...] = field(repr=False, default=())
    _x_feats: tuple[NDArray, ...] = field(repr=False, default=())
    _x0: NDArray | None = field(repr=False, default=None)

    def stage_h(self, stage: int, regime) -> NDArray:
        """Evaluate the stage bridge at observed proxies under a regime."""
        n = self._w_feats[stage].shape[0]
        a_row = np.tile(np.asarray(regime, dtype=float), (n, 1))
        ca = self.maps.get("treatment", stage).apply(a_row[:, :, None])
        blocks = [np.ones((n, 1)), ca, self._w_feats[stage], self._x_feats[stage]]
        if stage >= 1:
            blocks.append(self._x0)
        return np.hstack(blocks) @ self.stage_eta[stage]


def _binary_regimes(J: int) -> list[tuple[int, ...]]:
    return list(product((0, 1), repeat=J))


def fit_recursive_ls(data: Dataset, maps: StageMaps = DEFAULT_MAPS,
                     regimes: list[tuple[int, ...]] | None = None) -> RecursiveFit:
    """Backward recursive least squares over all follow-up periods.

    For stages j = J-1 down to 0: project the stage's proxy-history features
    on (1, z features, treatment-history features, covariate features, and
    the baseline covariates for j >= 1); regress the running pseudo-outcome
    on (1, treatment features, projected proxies, covariate features[,
    baseline]); then form the next pseudo-outcome from the fitted
    coefficients evaluated at the OBSERVED proxy features. The final
    counterfactual mean plugs the regime's treatment features and the
    empirical baseline-proxy and baseline-covariate means into the stage-0
    coefficients.
    """
    wide = data.to_wide()
    return _recursive_from_wide(wide, data.layout.n_periods, maps, regimes)


def _recursive_from_wide(wide: WideRecords, J: int, maps: StageMaps,
                         regimes: list[tuple[int, ...]] | None) -> RecursiveFit:
    n = wide.y.size
    ones = np.ones((n, 1))
    x0 = wide.x[:, 0, :]
    a_hist = wide.a[:, :, None]

    thetas: list[NDArray] = [None] * J
    etas: list[NDArray] = [None] * J
    etas_w: list[NDArray] = [None] * J
    ortho: list[float] = [0.0] * J
    weak: list[int] = []
    w_feats: list[NDArray] = [None] * J
    x_feats: list[NDArray] = [None] * J

    H = wide.y.copy()
    for j in range(J - 1, -1, -1):
        cw = maps.get("w", j).apply(wide.w[:, :j + 1, :])
        ca = maps.get("treatment", j).apply(a_hist)
        cz = maps.get("z", j).apply(wide.z[:, :j + 1, :])
        cx = maps.get("x", j).apply(wide.x[:, :j + 1, :])
        tail = [x0] if j >= 1 else []

        design1 = np.hstack([ones, cz, ca, cx, *tail])
        restricted = np.hstack([ones, ca, cx, *tail])
        q_w = cw.shape[1]
        theta = np.empty((design1.shape[1], q_w))
        c_hat = np.empty_like(cw)
        is_weak = False
        d_z = cz.shape[1]
        for k in range(q_w):
            fit1 = ols(design1, cw[:, k])
            theta[:, k] = fit1.coefficients
            c_hat[:, k] = fit1.fitted_values
            rss_full = float(fit1.residuals @ fit1.residuals)
            rss_restr = float(np.sum(ols(restricted, cw[:, k]).residuals ** 2))
            dof = n - fit1.rank
            if d_z and dof > 0 and rss_full > 0:
                f = ((rss_restr - rss_full) / d_z) / (rss_full / dof)
                is_weak = is_weak or f < WEAK_FIRST_STAGE_F
        if is_weak:
            weak.append(j)

        design2 = np.hstack([ones, ca, c_hat, cx, *tail])
        fit2 = ols(design2, H)
        eta = fit2.coefficients
        q_a = ca.shape[1]
        eta_w = eta[1 + q_a:1 + q_a + q_w]

        # projection identity: the stage regressors are orthogonal in sample
        # to the part of the pseudo-outcome replaced by fitted proxies
        delta = (c_hat - cw) @ eta_w
        moment = design2.T @ delta / n
        scale = max(1.0, float(np.linalg.norm(design2) * np.linalg.norm(delta)) / n)
        ortho[j] = float(np.max(np.abs(moment))) / scale

        thetas[j] = theta
        etas[j] = eta
        etas_w[j] = eta_w
        w_feats[j] = cw
        x_feats[j] = cx
        H = np.hstack([ones, ca, cw, cx, *tail]) @ eta

    if regimes is None:
        regimes = _binary_regimes(J)
    if any(len(regime) != J for regime in regimes):
        raise DimensionMismatch(f"every regime must assign all {J} periods")
    cw0_mean = w_feats[0].mean(axis=0)
    cx0_mean = x_feats[0].mean(axis=0)
    beta = {}
    for regime in regimes:
        ca0 = maps.get("treatment", 0).apply(np.asarray(regime, dtype=float)[None, :, None])[0]
        row = np.concatenate([[1.0], ca0, cw0_mean, cx0_mean])
        beta[tuple(int(v) for v in regime)] = float(row @ etas[0])

    estimate = EffectEstimate(
        method="recursive_ls",
        beta=beta,
        eta_w=etas_w[0],
        diagnostics={
            "stage_eta_w": [v.tolist() for v in etas_w],
            "orthogonality": [float(v) for v in ortho],
            "weak_proxy_stages": sorted(weak),
        },
    )
    return RecursiveFit(
        n_periods=J, maps=maps,
        stage_first_stage=tuple(thetas), stage_eta=tuple(etas),
        stage_eta_w=tuple(etas_w), orthogonality=tuple(ortho),
        weak_proxy_stages=tuple(sorted(weak)), estimate=estimate,
        _w_feats=tuple(w_feats), _x_feats=tuple(x_feats), _x0=x0,
    )


def two_period_recursive_fit(data: Dataset, maps: StageMaps = DEFAULT_MAPS,
                             regimes: list[tuple[int, ...]] | None = None) -> RecursiveFit:
    """Literal two-period procedure (Steps 1-4), kept as an independent path.

    Step 1 projects the full proxy-history features on (1, z features,
    treatment features, covariate features, baseline covariates); Step 2
    regresses Y on the projections and re-evaluates at observed proxies;
    Step 3 repeats with the baseline proxies only; Step 4 plugs the regime
    and the baseline means into the final coefficients. The general
    recursion at J=2 must reproduce this bit for bit.
    """
    if data.layout.n_periods != 2:
        raise DimensionMismatch("two_period_recursive_fit requires J = 2")
    wide = data.to_wide()
    n = wide.y.size
    ones = np.ones((n, 1))
    x0 = wide.x[:, 0, :]
    a_hist = wide.a[:, :, None]

    # Step 1: project proxy-history features
    cw = maps.get("w", 1).apply(wide.w)
    ca = maps.get("treatment", 1).apply(a_hist)
    cz = maps.get("z", 1).apply(wide.z)
    cx = maps.get("x", 1).apply(wide.x)
    design1 = np.hstack([ones, cz, ca, cx, x0])
    theta1 = np.empty((design1.shape[1], cw.shape[1]))
    c_hat = np.empty_like(cw)
    for k in range(cw.shape[1]):
        fit = ols(design1, cw[:, k])
        theta1[:, k] = fit.coefficients
        c_hat[:, k] = fit.fitted_values

    # Step 2: outcome stage, then re-evaluate at observed proxies
    design2 = np.hstack([ones, ca, c_hat, cx, x0])
    eta1 = ols(design2, wide.y).coefficients
    h1 = np.hstack([ones, ca, cw, cx, x0]) @ eta1

    # Step 3: baseline stage
    ca0 = maps.get("treatment", 0).apply(a_hist)
    z0 = maps.get("z", 0).apply(wide.z[:, :1, :])
    w0 = maps.get("w", 0).apply(wide.w[:, :1, :])
    cx0 = maps.get("x", 0).apply(wide.x[:, :1, :])
    design3 = np.hstack([ones, z0, ca0, cx0])
    theta0 = np.empty((design3.shape[1], w0.shape[1]))
    w0_hat = np.empty_like(w0)
    for k in range(w0.shape[1]):
        fit = ols(design3, w0[:, k])
        theta0[:, k] = fit.coefficients
        w0_hat[:, k] = fit.fitted_values
    design4 = np.hstack([ones, ca0, w0_hat, cx0])
    eta0 = ols(design4, h1).coefficients

    # Step 4: regime evaluation at empirical baseline means
    if regimes is None:
        regimes = _binary_regimes(2)
    if any(len(regime) != 2 for regime in regimes):
        raise DimensionMismatch("every regime must assign both periods")
    beta = {}
    for regime in regimes:
        car = maps.get("treatment", 0).apply(np.asarray(regime, dtype=float)[None, :, None])[0]
        row = np.concatenate([[1.0], car, w0.mean(axis=0), cx0.mean(axis=0)])
        beta[tuple(int(v) for v in regime)] = float(row @ eta0)

    q_a1, q_w1 = ca.shape[1], cw.shape[1]
    q_a0, q_w0 = ca0.shape[1], w0.shape[1]
    estimate = EffectEstimate(
        method="recursive_ls", beta=beta, eta_w=eta0[1 + q_a0:1 + q_a0 + q_w0],
        diagnostics={"two_period_path": True},
    )
    return RecursiveFit(
        n_periods=2, maps=maps,
        stage_first_stage=(theta0, theta1),
        stage_eta=(eta0, eta1),
        stage_eta_w=(eta0[1 + q_a0:1 + q_a0 + q_w0], eta1[1 + q_a1:1 + q_a1 + q_w1]),
        orthogonality=(), weak_proxy_stages=(), estimate=estimate,
        _w_feats=(w0, cw), _x_feats=(cx0, cx), _x0=x0,
    )


def fit_longitudinal_g_computation(data: Dataset, maps: StageMaps = DEFAULT_MAPS
                                   ) -> EffectEstimate:
    """Two-period parametric g-computation through fitted Gaussian W laws.

    The follow-up proxy law conditions on the full raw history
    (1, Z(0), Z(1), A(0), A(1), X(0), X(1)); the baseline proxy law
    conditions on (1, Z(0), A(0), X(0)) as displayed. Correctness therefore
    leans on those laws: unlike the recursive projections, the baseline
    stage has no in-sample orthogonality shield when its law is wrong.
    """
    if data.layout.n_periods != 2:
        raise DimensionMismatch("fit_longitudinal_g_computation requires J = 2")
    wide = data.to_wide()
    n = wide.y.size
    ones = np.ones((n, 1))
    x0 = wide.x[:, 0, :]
    a_hist = wide.a[:, :, None]
    d_w = wide.w.shape[2]

    # follow-up W law on the raw history
    raw = np.hstack([ones,
                     wide.z.reshape(n, -1), wide.a,
                     wide.x.reshape(n, -1)])
    w_flat = wide.w.reshape(n, -1)
    w_hat_flat = np.empty_like(w_flat)
    for k in range(w_flat.shape[1]):
        w_hat_flat[:, k] = ols(raw, w_flat[:, k]).fitted_values
    w_hat_panel = w_hat_flat.reshape(wide.w.shape)

    ca = maps.get("treatment", 1).apply(a_hist)
    cx = maps.get("x", 1).apply(wide.x)
    cw_hat = maps.get("w", 1).apply(w_hat_panel)  # linear maps commute with the mean
    eta1 = ols(np.hstack([ones, ca, cw_hat, cx, x0]), wide.y).coefficients
    cw_obs = maps.get("w", 1).apply(wide.w)
    h1 = np.hstack([ones, ca, cw_obs, cx, x0]) @ eta1

    # baseline W law conditions on (Z(0), A(0), X(0)) only
    base_design = np.hstack([ones, wide.z[:, 0, :], wide.a[:, :1], x0])
    w0 = wide.w[:, 0, :]
    w0_hat = np.empty_like(w0)
    for k in range(d_w):
        w0_hat[:, k] = ols(base_design, w0[:, k]).fitted_values
    ca0 = maps.get("treatment", 0).apply(a_hist)
    eta0 = ols(np.hstack([ones, ca0, w0_hat, x0]), h1).coefficients

    q_a = ca0.shape[1]
    beta = {}
    for regime in _binary_regimes(2):
        car = maps.get("treatment", 0).apply(np.asarray(regime, dtype=float)[None, :, None])[0]
        row = np.concatenate([[1.0], car, w0.mean(axis=0), x0.mean(axis=0)])
        beta[regime] = float(row @ eta0)
    return EffectEstimate(
        method="proximal_g_computation",
        beta=beta,
        eta_w=eta0[1 + q_a:1 + q_a + d_w],
        diagnostics={"longitudinal": True,
                     "stage_eta_w": [eta0[1 + q_a:1 + q_a + d_w].tolist(),
                                     eta1[1 + q_a:1 + q_a + cw_obs.shape[1]].tolist()]},
    )


def fit_ipw_msm(data: Dataset) -> EffectEstimate:
    """Inverse-probability-weighted marginal structural model baseline.

    Stabilized weights from per-period logistic propensities on the full
    recorded history, then weighted least squares of Y on (1, cum(A)). The
    model assumes sequential randomization given the observed history, so it
    stays biased when the confounder is latent; it is the honesty benchmark,
    not a proximal method.
    """
    wide = data.to_wide()
    if not np.all(np.isin(wide.a, (0.0, 1.0))):
        raise ValueError("fit_ipw_msm requires binary treatments")
    n, J = wide.a.shape
    ones = np.ones((n, 1))

    weights = np.ones(n)
    for j in range(J):
        a_j = wide.a[:, j]
        past_a = wide.a[:, :j]
        hist = [ones, past_a,
                wide.z[:, :j + 1, :].reshape(n, -1),
                wide.w[:, :j + 1, :].reshape(n, -1),
                wide.x[:, :j + 1, :].reshape(n, -1)]
        denom_fit = logistic_irls(np.hstack(hist), a_j)
        p_den = denom_fit.predict_proba(np.hstack(hist))
        num_fit = logistic_irls(np.hstack([ones, past_a]), a_j)
        p_num = num_fit.predict_proba(np.hstack([ones, past_a]))
        weights *= np.where(a_j == 1, p_num, 1 - p_num) / np.where(a_j == 1, p_den, 1 - p_den)

    cum = wide.a.sum(axis=1)
    fit = ols(np.hstack([ones, cum[:, None]]), wide.y, weights=weights)
    slope = float(fit.coefficients[1])
    intercept = float(fit.coefficients[0])
    beta = {regime: intercept + slope * sum(regime) for regime in _binary_regimes(J)}
    return EffectEstimate(
        method="ipw_msm",
        beta=beta,
        contrast=slope,
        contrast_se=float(fit.standard_errors[1]),
        diagnostics={"max_weight": float(weights.max()),
                     "mean_weight": float(weights.mean()),
                     "extreme_weights": bool(weights.max() > EXTREME_WEIGHT)},
    )
