"""Outcome bridge solvers for the exactly solvable regimes.

The bridge function h(a, x, w) satisfies, for every z in the conditioning
cell,  E(Y | a, z, x) = sum_w h(a, x, w) P(w | a, z, x).  Averaging h against
the joint (w, x) law then yields the deconfounded counterfactual mean.
Only population (exact) discrete laws are accepted here; empirical estimation
goes through the two-stage and g-computation estimators instead, which
sidesteps the ill-posedness of inverting estimated conditional tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from numpy.typing import NDArray
from scipy.stats import norm

from .data import DiscreteJointLaw
from .errors import NoSolution, WeakProxy
from .linalg import RANK_RCOND

# |P(W=1|a,z=1,x) - P(W=1|a,z=0,x)| below this is treated as no W-Z association.
WEAK_PROXY_TOL = 1e-10

# Max bridge-equation residual accepted for a categorical solve.
SYSTEM_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class DiscreteBridge:
    """Bridge values over the W categories for one (treatment, covariate) cell."""

    treatment: int
    covariate: int | None
    h: NDArray
    residual: float
    rank_deficient: bool = False


def _cell(given_a: int, x: int | None) -> dict[str, int]:
    given = {"a": given_a}
    if x is not None:
        given["x"] = x
    return given


def solve_binary_bridge(law: DiscreteJointLaw, a: int, x: int | None = None,
                        z_reference: int = 0) -> DiscreteBridge:
    """Closed-form bridge for binary W and Z.

    The two bridge equations (one per z value) pin down an affine function
    of w:  h(w) = E(Y|a,z,x) + g(a,x) * [w - P(W=1|a,z,x)]  with
    g = [E(Y|a,1,x) - E(Y|a,0,x)] / [P(W=1|a,1,x) - P(W=1|a,0,x)].
    The result is the same whichever z slice is evaluated; ``z_reference``
    exists so tests can assert that identity.

    Raises WeakProxy when the W-Z association denominator vanishes.
    """
    obs = law.observable()
    if obs.n_categories("w") != 2 or obs.n_categories("z") != 2:
        raise ValueError("solve_binary_bridge requires binary W and Z")
    given = _cell(a, x)

    ey = [obs.expectation("y", {**given, "z": z}) for z in (0, 1)]
    pw = [obs.conditional("w", {**given, "z": z})[1] for z in (0, 1)]
    denom = pw[1] - pw[0]
    if abs(denom) < WEAK_PROXY_TOL:
        raise WeakProxy(
            f"P(W=1|a={a},z=1,x={x}) - P(W=1|a={a},z=0,x={x}) = {denom:.2e}; "
            "W carries no association with Z in this cell")
    g = (ey[1] - ey[0]) / denom

    zr = int(z_reference)
    h = np.array([ey[zr] + g * (w - pw[zr]) for w in (0, 1)])
    residual = _bridge_residual(obs, h, a, x)
    return DiscreteBridge(treatment=a, covariate=x, h=h, residual=residual)


def solve_categorical_bridge(law: DiscreteJointLaw, a: int, x: int | None = None,
                             residual_tol: float = SYSTEM_RESIDUAL_TOL) -> DiscreteBridge:
    """Minimum-norm solve of the d_z x d_w bridge system.

    Rank deficiency (multiple solutions) is flagged, not raised: every
    solution produces the same deconfounded mean. An inconsistent system
    (residual above ``residual_tol``) raises NoSolution.
    """
    obs = law.observable()
    given = _cell(a, x)
    d_z = obs.n_categories("z")
    mat = obs.conditional_matrix("w", "z", given).T  # rows: z, cols: w
    rhs = np.array([obs.expectation("y", {**given, "z": z}) for z in range(d_z)])
    h, _, rank, _ = np.linalg.lstsq(mat, rhs, rcond=RANK_RCOND)
    residual = float(np.max(np.abs(mat @ h - rhs)))
    if residual > residual_tol:
        raise NoSolution(
            f"bridge system residual {residual:.2e} exceeds {residual_tol:.0e}; "
            "no bridge function exists for this law")
    return DiscreteBridge(treatment=a, covariate=x, h=h, residual=residual,
                          rank_deficient=rank < mat.shape[1])


def _bridge_residual(obs: DiscreteJointLaw, h: NDArray, a: int, x: int | None) -> float:
    given = _cell(a, x)
    worst = 0.0
    for z in range(obs.n_categories("z")):
        lhs = obs.expectation("y", {**given, "z": z})
        rhs = float(h @ obs.conditional("w", {**given, "z": z}))
        worst = max(worst, abs(lhs - rhs))
    return worst


def proximal_g_formula(law: DiscreteJointLaw, a: int, solver: str = "categorical") -> float:
    """Deconfounded counterfactual mean: sum_{w,x} h(a,x,w) f(w,x).

    ``solver`` picks the bridge routine ("binary" or "categorical"); the
    covariate sum collapses when the law has no x variable.
    """
    solve = solve_binary_bridge if solver == "binary" else solve_categorical_bridge
    obs = law.observable()
    if obs.has("x"):
        fwx = obs.marginal(("w", "x"))
        total = 0.0
        for x in range(obs.n_categories("x")):
            bridge = solve(law, a, x)
            total += float(bridge.h @ fwx[:, x])
        return total
    fw = obs.marginal(("w",))
    return float(solve(law, a).h @ fw)


def bridge_values(law: DiscreteJointLaw, a: int, h: NDArray, x: int | None = None) -> dict:
    """Diagnostic view of one bridge table: values plus the equation residual."""
    obs = law.observable()
    return {
        "treatment": a,
        "covariate": x,
        "h": [float(v) for v in h],
        "residual": _bridge_residual(obs, h, a, x),
    }


# ---------------------------------------------------------------------------
# Parametric bridge functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BridgeFunction:
    """Parametric outcome bridge h(w, a, x; eta).

    ``eta`` is laid out as (intercept, treatment block, W block, X block).
    Linear form evaluates the inner product directly; the probit-linked form
    applies the normal CDF and carries the first-stage residual variance
    needed for its closed-form conditional mean.
    """

    form: str  # "linear" | "probit_linked"
    eta: NDArray
    d_a: int = 1
    d_w: int = 1
    d_x: int = 0
    sigma2: NDArray | float | None = None

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.size != 1 + self.d_a + self.d_w + self.d_x:
            raise ValueError("eta length must be 1 + d_a + d_w + d_x")
        object.__setattr__(self, "eta", eta)
        if self.form not in ("linear", "probit_linked"):
            raise ValueError(f"unknown bridge form {self.form!r}")

    @property
    def eta_w(self) -> NDArray:
        return self.eta[1 + self.d_a:1 + self.d_a + self.d_w]

    @property
    def phi(self) -> float:
        """Attenuation (1 + eta_w' Sigma eta_w)^(-1/2) from first-stage noise."""
        if self.form != "probit_linked":
            raise ValueError("phi is defined for the probit-linked form")
        sigma2 = np.asarray(self.sigma2, dtype=float)
        quad = float(self.eta_w @ (sigma2 @ self.eta_w)) if sigma2.ndim == 2 \
            else float(sigma2 * self.eta_w @ self.eta_w)
        return float(1.0 / np.sqrt(1.0 + quad))

    def linear_predictor(self, w, a, x=None) -> NDArray:
        w = np.atleast_2d(np.asarray(w, dtype=float))
        n = w.shape[0]
        a = np.asarray(a, dtype=float)
        if a.ndim < 2:
            a = a.reshape(-1, 1) if a.ndim == 1 else np.full((n, self.d_a), float(a))
        a = np.broadcast_to(a, (n, self.d_a))
        feats = [np.ones((n, 1)), a, w]
        if self.d_x:
            x = np.asarray(x, dtype=float)
            feats.append(np.broadcast_to(np.atleast_2d(x), (n, self.d_x)))
        return np.hstack(feats) @ self.eta

    def evaluate(self, w, a, x=None) -> NDArray:
        """h(w, a, x): identity link for linear, normal CDF for probit."""
        lin = self.linear_predictor(w, a, x)
        return lin if self.form == "linear" else norm.cdf(lin)


def probit_bridge_mean(bridge: BridgeFunction, first_stage: NDArray,
                       z, a, x=None) -> float:
    """Closed-form E[h(W, a, x) | z, a, x] under a Gaussian first stage.

    The first-stage coefficients map (1, z, a, x) to the conditional mean of
    W; integrating the probit bridge against that Gaussian contracts the
    linear predictor by phi = (1 + eta_w' Sigma eta_w)^(-1/2).
    """
    if bridge.form != "probit_linked":
        raise ValueError("probit_bridge_mean requires a probit-linked bridge")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    feats = [1.0, *z, float(a)]
    if x is not None:
        feats.extend(np.atleast_1d(np.asarray(x, dtype=float)))
    theta = np.asarray(first_stage, dtype=float)
    if theta.ndim == 1:
        theta = theta[:, None]
    w_mean = np.asarray(feats, dtype=float) @ theta  # (d_w,)
    lin = float(bridge.linear_predictor(w_mean[None, :], np.atleast_1d(float(a)),
                                        None if x is None else np.atleast_2d(x))[0])
    return float(norm.cdf(lin * bridge.phi))


def probit_bridge_mean_mc(bridge: BridgeFunction, first_stage: NDArray, z, a,
                          x=None, n_draws: int = 4096, seed: int = 0
                          ) -> tuple[float, float]:
    """Monte-Carlo quadrature of the probit bridge mean (fixed seeded draws).

    Fallback/oracle for the closed form: draws W around its first-stage mean
    with the stored sigma2 and averages the bridge. Returns (mean, mc_se).
    """
    rng = np.random.default_rng(seed)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    feats = [1.0, *z, float(a)]
    if x is not None:
        feats.extend(np.atleast_1d(np.asarray(x, dtype=float)))
    theta = np.asarray(first_stage, dtype=float)
    if theta.ndim == 1:
        theta = theta[:, None]
    w_mean = np.asarray(feats, dtype=float) @ theta
    sigma2 = np.asarray(bridge.sigma2, dtype=float)
    if sigma2.ndim == 2:
        draws = rng.multivariate_normal(w_mean, sigma2, size=n_draws)
    else:
        draws = w_mean[None, :] + np.sqrt(sigma2) * rng.standard_normal((n_draws, w_mean.size))
    vals = bridge.evaluate(draws, np.full(n_draws, float(a)),
                           None if x is None else np.tile(np.atleast_1d(x), (n_draws, 1)))
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_draws))
