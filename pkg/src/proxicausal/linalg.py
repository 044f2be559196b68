"""Least-squares and logistic-regression primitives shared by every estimator.

All solves are rank-revealing: rank-deficient designs get the
minimum-Euclidean-norm coefficient vector instead of an error, so callers
(notably the two-stage estimators with dim(Z) < dim(W)) degrade gracefully.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import AllZeroWeights, DimensionMismatch, SingleClassResponse

# Relative singular-value cutoff used by every rank-revealing solve.
RANK_RCOND = 1e-10

# Coefficient norm beyond which a logistic fit is treated as separated.
SEPARATION_NORM = 1e4


@dataclass(frozen=True)
class LinearFit:
    """Result of a (weighted) least-squares solve.

    ``fitted_values + residuals == response`` holds exactly by construction.
    When ``rank < n_columns`` the coefficients are the minimum-norm solution,
    ``unique`` is False, and ``cov_coefficients`` uses a pseudo-inverse.
    """

    coefficients: NDArray
    fitted_values: NDArray
    residuals: NDArray
    rank: int
    sigma2_hat: float
    cov_coefficients: NDArray
    unique: bool

    @property
    def standard_errors(self) -> NDArray:
        return np.sqrt(np.clip(np.diag(self.cov_coefficients), 0.0, None))


def ols(
    design: NDArray,
    response: NDArray,
    weights: NDArray | None = None,
    rcond: float = RANK_RCOND,
) -> LinearFit:
    """Weighted least squares via SVD with a relative rank cutoff.

    Parameters
    ----------
    design : (n, p) array
        Regressor matrix. A 1-d input is treated as a single column.
    response : (n,) array
    weights : (n,) array, optional
        Nonnegative case weights with a positive sum.
    rcond : float
        Relative singular-value cutoff for the rank decision.

    Returns
    -------
    LinearFit
        Minimum-norm solution when the design is rank deficient;
        ``cov_coefficients = sigma2_hat * pinv(X'WX)``.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or y.ndim != 1:
        raise DimensionMismatch("design must be 2-d and response 1-d")
    n, p = X.shape
    if n < 1 or p < 1:
        raise DimensionMismatch("design must have at least one row and one column")
    if y.shape[0] != n:
        raise DimensionMismatch(
            f"design has {n} rows but response has {y.shape[0]} entries"
        )

    if weights is None:
        Xw, yw = X, y
        w = None
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise DimensionMismatch("weights must be a vector of length n")
        if np.any(w < 0):
            raise AllZeroWeights("weights must be nonnegative")
        if not np.sum(w) > 0:
            raise AllZeroWeights("weights must have a positive sum")
        sw = np.sqrt(w)
        Xw = X * sw[:, None]
        yw = y * sw

    beta, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=rcond)
    fitted = X @ beta
    residuals = y - fitted

    wres = residuals if w is None else w * residuals
    rss = float(residuals @ wres)
    dof = n - rank
    sigma2 = rss / dof if dof > 0 else 0.0

    xtwx = X.T @ (X if w is None else X * w[:, None])
    cov = sigma2 * np.linalg.pinv(xtwx, rcond=rcond, hermitian=True)
    return LinearFit(
        coefficients=beta,
        fitted_values=fitted,
        residuals=residuals,
        rank=int(rank),
        sigma2_hat=sigma2,
        cov_coefficients=cov,
        unique=int(rank) == p,
    )


@dataclass(frozen=True)
class LogisticFit:
    """Result of an IRLS logistic regression.

    ``converged=False`` with ``separation=False`` means the iteration budget
    ran out; it is reported, not raised. ``log_likelihood_path`` records the
    per-iteration likelihood (non-decreasing thanks to step halving).
    """

    coefficients: NDArray
    converged: bool
    n_iterations: int
    log_likelihood: float
    separation: bool
    cov_coefficients: NDArray
    log_likelihood_path: tuple[float, ...]

    @property
    def standard_errors(self) -> NDArray:
        return np.sqrt(np.clip(np.diag(self.cov_coefficients), 0.0, None))

    def predict_proba(self, design: NDArray) -> NDArray:
        return _expit(np.asarray(design, dtype=float) @ self.coefficients)


def _expit(t: NDArray) -> NDArray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _bernoulli_loglik(y: NDArray, eta: NDArray) -> float:
    # log p = y*eta - log(1 + exp(eta)), computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logistic_irls(
    design: NDArray,
    response: NDArray,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> LogisticFit:
    """Logistic regression by iteratively reweighted least squares.

    Starts at zero coefficients, halves the step whenever the likelihood
    would decrease, and stops when the largest relative coefficient change
    drops below ``tol``. Perfect separation is reported via the
    ``separation`` flag, detected either by the coefficient norm exceeding
    1e4 or by the log likelihood saturating at its supremum of zero (a
    perfect fit, reachable only when the optimum is at infinity; the norm
    alone grows too slowly under damped iterations to cross the threshold
    in a bounded iteration budget).
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch("design and response lengths differ")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise SingleClassResponse("response must be coded 0/1")
    if y.min() == y.max():
        raise SingleClassResponse("both response classes must be present")

    p = X.shape[1]
    beta = np.zeros(p)
    loglik = _bernoulli_loglik(y, X @ beta)
    path = [loglik]
    converged = False
    separation = False
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        eta = X @ beta
        prob = _expit(eta)
        w = np.clip(prob * (1.0 - prob), 1e-10, None)
        z = eta + (y - prob) / w
        sw = np.sqrt(w)
        proposal, _, _, _ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=RANK_RCOND)

        step = proposal - beta
        new_loglik = _bernoulli_loglik(y, X @ proposal)
        halvings = 0
        while new_loglik < loglik and halvings < 30:
            step *= 0.5
            proposal = beta + step
            new_loglik = _bernoulli_loglik(y, X @ proposal)
            halvings += 1

        change = np.max(np.abs(step) / (1.0 + np.abs(proposal)))
        beta = proposal
        loglik = new_loglik
        path.append(loglik)

        if np.max(np.abs(beta)) > SEPARATION_NORM or loglik > -1e-10 * y.size:
            separation = True
            break
        if change < tol:
            converged = True
            break

    prob = _expit(X @ beta)
    w = np.clip(prob * (1.0 - prob), 1e-10, None)
    cov = np.linalg.pinv(X.T @ (X * w[:, None]), rcond=RANK_RCOND, hermitian=True)
    return LogisticFit(
        coefficients=beta,
        converged=converged,
        n_iterations=n_iter,
        log_likelihood=loglik,
        separation=separation,
        cov_coefficients=cov,
        log_likelihood_path=tuple(path),
    )
