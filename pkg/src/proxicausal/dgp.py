"""Synthetic structural models with a latent confounder, and their exact effects.

This is the only module where the latent variable U exists. Every generator
draws its noise in a fixed order so that re-simulating with a forced
treatment reuses the identical noise stream: forcing the observed treatment
reproduces the observed outcome exactly, and forcing a regime gives a
do-intervention oracle.

Every default parameterization here is a construction of this package (there
is no canonical benchmark design to inherit); defaults are chosen so that
exact linear (or probit-linked) bridge representations exist and the
estimators' consistency claims are testable at tight tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np
from numpy.typing import NDArray
from scipy.stats import norm

from .data import CategoricalVariable, Dataset, DiscreteJointLaw, Layout, POINT, validate_dataset
from .errors import DegenerateProbability, InvalidSpec


def _link(values: NDArray, name: str) -> NDArray:
    if name == "identity":
        return values
    if name == "tanh":
        return np.tanh(values)
    if name == "cubic":
        return values**3
    raise InvalidSpec(f"unknown z link {name!r}")


# ---------------------------------------------------------------------------
# Point-treatment model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointDgpSpec:
    """Linear structural model for a point treatment with latent confounder.

    Generation order is X, U, Z, W, A, Y. The W equations take no input from
    A or Z, and the Y equation takes no input from Z (the proxy exclusion
    restrictions hold structurally). ``z_link`` bends the Z equations'
    dependence on U, which makes the conditional mean of W given (Z, A, X)
    nonlinear while leaving every bridge representation exactly linear.
    """

    d_x: int = 1
    d_z: int = 1
    d_w: int = 1
    # outcome equation
    y_intercept: float = 1.0
    treatment_effect: float = -1.8
    confounder_effect: float = 2.0
    x_effects: tuple[float, ...] = (0.5,)
    noise_y: float = 1.0
    # W equations (one per proxy_w column)
    w_intercepts: tuple[float, ...] = (0.2,)
    w_u_loadings: tuple[float, ...] = (1.0,)
    w_x_loadings: tuple[tuple[float, ...], ...] = ((0.3,),)
    noise_w: tuple[float, ...] = (0.6,)
    # Z equations
    z_intercepts: tuple[float, ...] = (-0.1,)
    z_u_loadings: tuple[float, ...] = (1.0,)
    z_x_loadings: tuple[tuple[float, ...], ...] = ((0.2,),)
    noise_z: tuple[float, ...] = (0.7,)
    z_link: str = "identity"
    # U equation
    u_x_loadings: tuple[float, ...] = (0.0,)
    noise_u: float = 1.0
    # A equation
    a_intercept: float = 0.1
    a_u_loading: float = 1.0
    a_z_loadings: tuple[float, ...] = (0.6,)
    a_x_loadings: tuple[float, ...] = (0.4,)
    noise_a: float = 1.0
    treatment_type: str = "binary"  # binary | continuous
    outcome_type: str = "continuous"  # continuous | binary_probit
    seed: int = 0

    def __post_init__(self):
        dims = {
            "x_effects": (self.x_effects, self.d_x),
            "w_intercepts": (self.w_intercepts, self.d_w),
            "w_u_loadings": (self.w_u_loadings, self.d_w),
            "noise_w": (self.noise_w, self.d_w),
            "z_intercepts": (self.z_intercepts, self.d_z),
            "z_u_loadings": (self.z_u_loadings, self.d_z),
            "noise_z": (self.noise_z, self.d_z),
            "u_x_loadings": (self.u_x_loadings, self.d_x),
            "a_z_loadings": (self.a_z_loadings, self.d_z),
            "a_x_loadings": (self.a_x_loadings, self.d_x),
        }
        for name, (val, d) in dims.items():
            if len(val) != d:
                raise InvalidSpec(f"{name} must have length {d}, got {len(val)}")
        if len(self.w_x_loadings) != self.d_w or any(len(r) != self.d_x for r in self.w_x_loadings):
            raise InvalidSpec("w_x_loadings must be d_w rows of length d_x")
        if len(self.z_x_loadings) != self.d_z or any(len(r) != self.d_x for r in self.z_x_loadings):
            raise InvalidSpec("z_x_loadings must be d_z rows of length d_x")
        if any(v == 0.0 for v in self.w_u_loadings):
            raise InvalidSpec("every W equation must load on U (proxies must be U-relevant)")
        if self.a_u_loading == 0.0 and all(v == 0.0 for v in self.a_z_loadings):
            raise InvalidSpec("the A equation must load on Z or U")
        if self.treatment_type not in ("binary", "continuous"):
            raise InvalidSpec(f"unknown treatment_type {self.treatment_type!r}")
        if self.outcome_type not in ("continuous", "binary_probit"):
            raise InvalidSpec(f"unknown outcome_type {self.outcome_type!r}")


@dataclass(frozen=True)
class GroundTruth:
    """Closed-form counterfactual means implied by a synthetic spec.

    ``kind`` selects the formula: "linear_point" gives
    beta(a) = intercept + slope*a; "probit_point" gives
    beta(a) = Phi((intercept + slope*a)/scale); "longitudinal" stores the
    mean under every binary regime.
    """

    kind: str
    params: dict[str, float] = field(default_factory=dict)
    regime_means: dict[tuple[int, ...], float] = field(default_factory=dict)

    def beta(self, a) -> float:
        if self.kind == "linear_point":
            return self.params["intercept"] + self.params["slope"] * float(a)
        if self.kind == "probit_point":
            lin = self.params["intercept"] + self.params["slope"] * float(a)
            return float(norm.cdf(lin / self.params["scale"]))
        if self.kind == "longitudinal":
            return self.regime_means[tuple(int(v) for v in a)]
        raise ValueError(f"unknown ground-truth kind {self.kind!r}")

    @property
    def slope(self) -> float:
        """beta(a+1) - beta(a) for the linear point model."""
        if self.kind != "linear_point":
            raise ValueError("slope is only defined for the linear point model")
        return self.params["slope"]


def _simulate_point(spec: PointDgpSpec, n: int, rng: np.random.Generator,
                    forced_a: NDArray | None = None) -> dict[str, NDArray]:
    # noise draw order is part of the reproducibility contract
    x = rng.standard_normal((n, spec.d_x))
    eps_u = rng.standard_normal(n)
    eps_z = rng.standard_normal((n, spec.d_z))
    eps_w = rng.standard_normal((n, spec.d_w))
    eps_a = rng.standard_normal(n)
    eps_y = rng.standard_normal(n)

    u = x @ np.array(spec.u_x_loadings) + spec.noise_u * eps_u
    gu = _link(u, spec.z_link)
    z = (np.array(spec.z_intercepts)[None, :]
         + gu[:, None] * np.array(spec.z_u_loadings)[None, :]
         + x @ np.array(spec.z_x_loadings).T
         + eps_z * np.array(spec.noise_z)[None, :])
    w = (np.array(spec.w_intercepts)[None, :]
         + u[:, None] * np.array(spec.w_u_loadings)[None, :]
         + x @ np.array(spec.w_x_loadings).T
         + eps_w * np.array(spec.noise_w)[None, :])

    index = (spec.a_intercept + spec.a_u_loading * u
             + z @ np.array(spec.a_z_loadings) + x @ np.array(spec.a_x_loadings))
    if forced_a is not None:
        a = np.broadcast_to(np.asarray(forced_a, dtype=float), (n,)).copy()
    elif spec.treatment_type == "binary":
        a = (index + spec.noise_a * eps_a > 0).astype(float)
    else:
        a = index + spec.noise_a * eps_a

    lin = (spec.y_intercept + spec.treatment_effect * a
           + spec.confounder_effect * u + x @ np.array(spec.x_effects))
    if spec.outcome_type == "continuous":
        y = lin + spec.noise_y * eps_y
    else:
        y = (lin + spec.noise_y * eps_y > 0).astype(float)
    return {"y": y, "a": a, "x": x, "z": z, "w": w, "u": u}


def _point_truth(spec: PointDgpSpec) -> GroundTruth:
    # E[X] = 0 and E[U] = 0, so the counterfactual mean is linear in a.
    if spec.outcome_type == "continuous":
        return GroundTruth("linear_point",
                           {"intercept": spec.y_intercept, "slope": spec.treatment_effect})
    bx = np.array(spec.x_effects) + spec.confounder_effect * np.array(spec.u_x_loadings)
    var = (spec.noise_y**2
           + (spec.confounder_effect * spec.noise_u) ** 2
           + float(bx @ bx))
    return GroundTruth("probit_point",
                       {"intercept": spec.y_intercept, "slope": spec.treatment_effect,
                        "scale": float(np.sqrt(var))})


def generate_point(spec: PointDgpSpec, n: int, seed: int | None = None,
                   include_u: bool = False) -> tuple[Dataset, GroundTruth]:
    """Draw n observations; U stays internal unless include_u is set."""
    if n < 1:
        raise InvalidSpec("n must be >= 1")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    sim = _simulate_point(spec, n, rng)
    columns: dict[str, NDArray] = {"Y": sim["y"], "A": sim["a"]}
    roles = {"Y": "outcome", "A": "treatment"}
    for k in range(spec.d_x):
        columns[f"X{k + 1}"] = sim["x"][:, k]
        roles[f"X{k + 1}"] = "covariate_x"
    for k in range(spec.d_z):
        columns[f"Z{k + 1}"] = sim["z"][:, k]
        roles[f"Z{k + 1}"] = "proxy_z"
    for k in range(spec.d_w):
        columns[f"W{k + 1}"] = sim["w"][:, k]
        roles[f"W{k + 1}"] = "proxy_w"
    if include_u:
        columns["U"] = sim["u"]
        roles["U"] = "covariate_x"
    return validate_dataset(columns, roles, POINT), _point_truth(spec)


def point_do_mean_mc(spec: PointDgpSpec, a: float, n_draws: int = 10**6,
                     seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo interventional mean E[Y | do(A=a)] and its standard error."""
    rng = np.random.default_rng(seed)
    sim = _simulate_point(spec, n_draws, rng, forced_a=np.full(n_draws, float(a)))
    y = sim["y"]
    return float(y.mean()), float(y.std(ddof=1) / np.sqrt(n_draws))


# ---------------------------------------------------------------------------
# Longitudinal model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LongitudinalDgpSpec:
    """Per-period structural model with latent confounders U(j).

    Within each period the generation order is U(j), X(j), Z(j), W(j), then
    A(j); the outcome is generated last (covariates precede treatment at each
    visit). W(j) takes no input from any treatment or Z, and Y takes no input
    from any Z. Treatments are binary (probit threshold). All per-period
    parameter tuples have length J; autoregressive/feedback entries at j=0
    are ignored.
    """

    n_periods: int = 2
    # confounder process U(j) = autoreg*U(j-1) + feedback*A(j-1) + noise
    u_autoreg: tuple[float, ...] = (0.0, 0.0)
    u_treat_feedback: tuple[float, ...] = (0.0, 0.4)
    noise_u: tuple[float, ...] = (1.0, 1.0)
    # observed covariate process
    x_autoreg: tuple[float, ...] = (0.0, 0.5)
    x_treat_feedback: tuple[float, ...] = (0.0, 0.5)
    noise_x: tuple[float, ...] = (1.0, 1.0)
    # proxy equations
    z_intercepts: tuple[float, ...] = (0.0, 0.0)
    z_u_loadings: tuple[float, ...] = (1.0, 1.0)
    z_x_loadings: tuple[float, ...] = (0.2, 0.2)
    noise_z: tuple[float, ...] = (0.7, 0.7)
    z_link: str = "identity"
    w_intercepts: tuple[float, ...] = (0.1, 0.1)
    w_u_loadings: tuple[float, ...] = (1.0, 1.0)
    w_x_loadings: tuple[float, ...] = (0.3, 0.3)
    noise_w: tuple[float, ...] = (0.6, 0.6)
    w_noise_dist: str = "gaussian"  # gaussian | student_t (df 3)
    # treatment equations; the logit link keeps logistic propensity models
    # (the IPW baseline) exactly specified, and no bridge depends on it
    a_intercepts: tuple[float, ...] = (0.0, 0.0)
    a_u_loadings: tuple[float, ...] = (1.2, 1.0)
    a_z_loadings: tuple[float, ...] = (0.5, 0.5)
    a_x_loadings: tuple[float, ...] = (0.5, 0.0)
    a_prev_loadings: tuple[float, ...] = (0.0, 0.8)
    a_link: str = "logit"  # logit | probit
    # outcome equation
    y_intercept: float = 0.5
    treatment_effects: tuple[float, ...] = (-1.0, -1.0)
    y_u_loadings: tuple[float, ...] = (1.5, 0.0)
    y_x_loadings: tuple[float, ...] = (0.6, 0.0)
    noise_y: float = 1.0
    seed: int = 0

    def __post_init__(self):
        J = self.n_periods
        if J < 2:
            raise InvalidSpec("longitudinal specs need at least two periods")
        per_period = (
            "u_autoreg", "u_treat_feedback", "noise_u", "x_autoreg",
            "x_treat_feedback", "noise_x", "z_intercepts", "z_u_loadings",
            "z_x_loadings", "noise_z", "w_intercepts", "w_u_loadings",
            "w_x_loadings", "noise_w", "a_intercepts", "a_u_loadings",
            "a_z_loadings", "a_x_loadings", "a_prev_loadings",
            "treatment_effects", "y_u_loadings", "y_x_loadings",
        )
        for name in per_period:
            if len(getattr(self, name)) != J:
                raise InvalidSpec(f"{name} must have length J={J}")
        if any(v == 0.0 for v in self.w_u_loadings):
            raise InvalidSpec("every W(j) equation must load on U(j)")
        if self.w_noise_dist not in ("gaussian", "student_t"):
            raise InvalidSpec(f"unknown w_noise_dist {self.w_noise_dist!r}")
        if self.a_link not in ("logit", "probit"):
            raise InvalidSpec(f"unknown a_link {self.a_link!r}")


def _simulate_longitudinal(spec: LongitudinalDgpSpec, n: int, rng: np.random.Generator,
                           forced_a: NDArray | None = None) -> dict[str, NDArray]:
    J = spec.n_periods
    U = np.zeros((n, J)); X = np.zeros((n, J)); Z = np.zeros((n, J))
    W = np.zeros((n, J)); A = np.zeros((n, J))
    for j in range(J):
        eps_u = rng.standard_normal(n)
        eps_x = rng.standard_normal(n)
        eps_z = rng.standard_normal(n)
        if spec.w_noise_dist == "gaussian":
            eps_w = rng.standard_normal(n)
        else:
            eps_w = rng.standard_t(3, n) / np.sqrt(3.0)  # unit-variance heavy tails
        eps_a = rng.standard_normal(n)

        prev_u = U[:, j - 1] if j > 0 else 0.0
        prev_x = X[:, j - 1] if j > 0 else 0.0
        prev_a = A[:, j - 1] if j > 0 else 0.0
        U[:, j] = spec.u_autoreg[j] * prev_u + spec.u_treat_feedback[j] * prev_a \
            + spec.noise_u[j] * eps_u
        X[:, j] = spec.x_autoreg[j] * prev_x + spec.x_treat_feedback[j] * prev_a \
            + spec.noise_x[j] * eps_x
        Z[:, j] = spec.z_intercepts[j] + spec.z_u_loadings[j] * _link(U[:, j], spec.z_link) \
            + spec.z_x_loadings[j] * X[:, j] + spec.noise_z[j] * eps_z
        W[:, j] = spec.w_intercepts[j] + spec.w_u_loadings[j] * U[:, j] \
            + spec.w_x_loadings[j] * X[:, j] + spec.noise_w[j] * eps_w
        if forced_a is not None:
            A[:, j] = forced_a[:, j] if forced_a.ndim == 2 else forced_a[j]
        else:
            index = (spec.a_intercepts[j] + spec.a_u_loadings[j] * U[:, j]
                     + spec.a_z_loadings[j] * Z[:, j] + spec.a_x_loadings[j] * X[:, j]
                     + spec.a_prev_loadings[j] * prev_a)
            if spec.a_link == "probit":
                A[:, j] = (index + eps_a > 0).astype(float)
            else:
                # logistic threshold via the probability integral transform
                A[:, j] = (index > np.log(1.0 / norm.cdf(eps_a) - 1.0)).astype(float)

    eps_y = rng.standard_normal(n)
    Y = (spec.y_intercept + A @ np.array(spec.treatment_effects)
         + U @ np.array(spec.y_u_loadings) + X @ np.array(spec.y_x_loadings)
         + spec.noise_y * eps_y)
    return {"y": Y, "a": A, "x": X, "z": Z, "w": W, "u": U}


def longitudinal_do_mean(spec: LongitudinalDgpSpec, regime) -> float:
    """Closed-form E[Y | do(regime)] by forward substitution of means."""
    a = [float(v) for v in regime]
    if len(a) != spec.n_periods:
        raise InvalidSpec(f"regime must have length J={spec.n_periods}")
    mu_u = np.zeros(spec.n_periods)
    mu_x = np.zeros(spec.n_periods)
    for j in range(1, spec.n_periods):
        mu_u[j] = spec.u_autoreg[j] * mu_u[j - 1] + spec.u_treat_feedback[j] * a[j - 1]
        mu_x[j] = spec.x_autoreg[j] * mu_x[j - 1] + spec.x_treat_feedback[j] * a[j - 1]
    return float(spec.y_intercept
                 + np.dot(spec.treatment_effects, a)
                 + np.dot(spec.y_u_loadings, mu_u)
                 + np.dot(spec.y_x_loadings, mu_x))


def longitudinal_do_mean_mc(spec: LongitudinalDgpSpec, regime, n_draws: int = 10**6,
                            seed: int = 0) -> tuple[float, float]:
    """Interventional Monte-Carlo mean and standard error under a forced regime."""
    rng = np.random.default_rng(seed)
    forced = np.array([float(v) for v in regime])
    sim = _simulate_longitudinal(spec, n_draws, rng, forced_a=forced)
    y = sim["y"]
    return float(y.mean()), float(y.std(ddof=1) / np.sqrt(n_draws))


def _longitudinal_truth(spec: LongitudinalDgpSpec) -> GroundTruth:
    means = {
        regime: longitudinal_do_mean(spec, regime)
        for regime in product((0, 1), repeat=spec.n_periods)
    }
    return GroundTruth("longitudinal", regime_means=means)


def generate_longitudinal(spec: LongitudinalDgpSpec, n: int, seed: int | None = None,
                          include_u: bool = False) -> tuple[Dataset, GroundTruth]:
    """Draw n subjects in long format (one row per subject-period)."""
    if n < 1:
        raise InvalidSpec("n must be >= 1")
    J = spec.n_periods
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    sim = _simulate_longitudinal(spec, n, rng)
    columns = {
        "id": np.repeat(np.arange(n, dtype=float), J),
        "t": np.tile(np.arange(J, dtype=float), n),
        "Y": np.repeat(sim["y"], J),
        "A": sim["a"].reshape(-1),
        "Z": sim["z"].reshape(-1),
        "W": sim["w"].reshape(-1),
        "X": sim["x"].reshape(-1),
    }
    roles = {"id": "subject_id", "t": "time_index", "Y": "outcome",
             "A": "treatment", "Z": "proxy_z", "W": "proxy_w", "X": "covariate_x"}
    if include_u:
        columns["U"] = sim["u"].reshape(-1)
        roles["U"] = "covariate_x"
    dataset = validate_dataset(columns, roles, Layout("longitudinal", J))
    return dataset, _longitudinal_truth(spec)


def verify_ground_truth(spec, n_draws: int = 200_000, seed: int = 0,
                        se_multiple: float = 5.0) -> None:
    """Cross-check the closed-form effects against interventional simulation.

    Raises InvalidSpec when any regime/grid point disagrees beyond
    ``se_multiple`` Monte-Carlo standard errors.
    """
    if isinstance(spec, PointDgpSpec):
        truth = _point_truth(spec)
        for k, a in enumerate((0.0, 1.0)):
            mc, se = point_do_mean_mc(spec, a, n_draws, seed=seed + k)
            if abs(mc - truth.beta(a)) > se_multiple * se:
                raise InvalidSpec(
                    f"closed-form beta({a}) = {truth.beta(a):.5f} disagrees with "
                    f"Monte-Carlo {mc:.5f} (se {se:.5f})")
    elif isinstance(spec, LongitudinalDgpSpec):
        truth = _longitudinal_truth(spec)
        for k, regime in enumerate(sorted(truth.regime_means)):
            mc, se = longitudinal_do_mean_mc(spec, regime, n_draws, seed=seed + k)
            if abs(mc - truth.beta(regime)) > se_multiple * se:
                raise InvalidSpec(
                    f"closed-form beta({regime}) = {truth.beta(regime):.5f} disagrees "
                    f"with Monte-Carlo {mc:.5f} (se {se:.5f})")
    else:
        raise InvalidSpec(f"unsupported spec type {type(spec).__name__}")


# ---------------------------------------------------------------------------
# Default specifications
# ---------------------------------------------------------------------------


def default_point_spec(confounded: bool = True, treatment_type: str = "binary",
                       seed: int = 0) -> PointDgpSpec:
    """Shipped point-treatment default (treatment effect -1.8)."""
    return PointDgpSpec(
        confounder_effect=2.0 if confounded else 0.0,
        treatment_type=treatment_type,
        seed=seed,
    )


def misspec_point_spec(seed: int = 0) -> PointDgpSpec:
    """Point default with a tanh Z link: the W first-stage model is wrong,
    the linear bridge is still exactly correct."""
    return PointDgpSpec(z_link="tanh", z_u_loadings=(1.6,), seed=seed)


def probit_point_spec(seed: int = 0) -> PointDgpSpec:
    """Binary outcome generated through a probit threshold; an exact
    probit-linked bridge exists for this spec."""
    return PointDgpSpec(
        y_intercept=0.2,
        treatment_effect=0.8,
        confounder_effect=0.7,
        x_effects=(0.4,),
        noise_w=(0.8,),
        outcome_type="binary_probit",
        seed=seed,
    )


def _repeat(first: float, rest: float, J: int) -> tuple[float, ...]:
    return (first, *([rest] * (J - 1)))


def default_longitudinal_spec(n_periods: int = 2, confounded: bool = True,
                              seed: int = 0) -> LongitudinalDgpSpec:
    """Shipped longitudinal default.

    The outcome loads on U(0) and X(0) only and the per-period effects are
    equal, so exact linear bridges exist with cumulative treatment features;
    later treatments do not load on current X, keeping the displayed
    g-computation conditioning valid on this spec.
    """
    J = n_periods
    au = (1.2, *([1.0] * (J - 1))) if confounded else tuple([0.0] * J)
    return LongitudinalDgpSpec(
        n_periods=J,
        u_autoreg=tuple([0.0] * J),
        u_treat_feedback=_repeat(0.0, 0.4, J),
        noise_u=tuple([1.0] * J),
        x_autoreg=_repeat(0.0, 0.5, J),
        x_treat_feedback=_repeat(0.0, 0.5, J),
        noise_x=tuple([1.0] * J),
        z_intercepts=tuple([0.0] * J),
        z_u_loadings=tuple([1.0] * J),
        z_x_loadings=tuple([0.2] * J),
        noise_z=tuple([0.7] * J),
        w_intercepts=tuple([0.1] * J),
        w_u_loadings=tuple([1.0] * J),
        w_x_loadings=tuple([0.3] * J),
        noise_w=tuple([0.6] * J),
        a_intercepts=tuple([0.0] * J),
        a_u_loadings=au,
        a_z_loadings=tuple([0.5] * J),
        a_x_loadings=_repeat(0.5, 0.0, J),
        a_prev_loadings=_repeat(0.0, 0.8, J),
        treatment_effects=tuple([-1.0] * J),
        y_u_loadings=_repeat(1.5, 0.0, J),
        y_x_loadings=_repeat(0.6, 0.0, J),
        seed=seed,
    )


def misspec_longitudinal_spec(seed: int = 0) -> LongitudinalDgpSpec:
    """Two-period variant whose linear-Gaussian W laws are genuinely wrong.

    U autocorrelation makes the baseline-proxy residual predictive of A(1),
    tanh Z links bend the W first stages, and the W noise is heavy-tailed.
    Exact linear bridges still exist, so the recursive projections stay
    consistent while the displayed g-computation drifts.
    """
    base = default_longitudinal_spec(2, confounded=True, seed=seed)
    return replace(base, u_autoreg=(0.0, 0.7), z_link="tanh",
                   z_u_loadings=(1.6, 1.6), w_noise_dist="student_t")


# ---------------------------------------------------------------------------
# Discrete laws with known effects
# ---------------------------------------------------------------------------


def law_from_factors(p_u: NDArray, p_z_given_u: NDArray, p_w_given_u: NDArray,
                     p_a_given_uz: NDArray, p_y_given_ua: NDArray
                     ) -> tuple[DiscreteJointLaw, dict[int, float]]:
    """Assemble a joint law over (u, z, w, a, y) from its causal factors.

    Shapes: p_u (d_u,), p_z_given_u (d_z, d_u), p_w_given_u (d_w, d_u),
    p_a_given_uz (d_a, d_u, d_z), p_y_given_ua (d_y, d_u, d_a). The implied
    structure satisfies W independent of (Z, A) given U and Y independent of
    (Z, W) given (U, A). Also returns beta(a) = sum_u E(Y|a,u) P(u) with
    categories valued by index.
    """
    p_u = np.asarray(p_u, dtype=float)
    p_z = np.asarray(p_z_given_u, dtype=float)
    p_w = np.asarray(p_w_given_u, dtype=float)
    p_a = np.asarray(p_a_given_uz, dtype=float)
    p_y = np.asarray(p_y_given_ua, dtype=float)
    d_u, d_z, d_w, d_a, d_y = p_u.size, p_z.shape[0], p_w.shape[0], p_a.shape[0], p_y.shape[0]

    joint = np.einsum("u,zu,wu,auz,yua->uzway", p_u, p_z, p_w, p_a, p_y)
    law = DiscreteJointLaw(
        variables=(CategoricalVariable("u", d_u), CategoricalVariable("z", d_z),
                   CategoricalVariable("w", d_w), CategoricalVariable("a", d_a),
                   CategoricalVariable("y", d_y)),
        probabilities=joint,
    )
    values = np.arange(d_y, dtype=float)
    truth = {
        a: float(sum(p_u[u] * values @ p_y[:, u, a] for u in range(d_u)))
        for a in range(d_a)
    }
    return law, truth


def build_discrete_law(p_u: float, p_z_given_u, p_w_given_u, p_a_given_uz,
                       p_y_given_ua) -> tuple[DiscreteJointLaw, dict[int, float]]:
    """Binary-variable joint law over 2^5 cells with its exact beta(a).

    Parameters are success probabilities: P(U=1), P(Z=1|u) for u=0,1,
    P(W=1|u), P(A=1|u,z) as a 2x2 table, P(Y=1|u,a) as a 2x2 table. All
    must lie strictly inside (0, 1); a degenerate entry (which would break
    positivity) raises DegenerateProbability.
    """
    flat = [p_u, *np.ravel(p_z_given_u), *np.ravel(p_w_given_u),
            *np.ravel(p_a_given_uz), *np.ravel(p_y_given_ua)]
    if not all(0.0 < float(v) < 1.0 for v in flat):
        raise DegenerateProbability("all conditional probabilities must lie in (0, 1)")

    def bern(p):
        p = np.asarray(p, dtype=float)
        return np.stack([1.0 - p, p], axis=0)  # axis 0: value in {0, 1}

    return law_from_factors(
        p_u=np.array([1.0 - p_u, p_u]),
        p_z_given_u=bern(p_z_given_u),
        p_w_given_u=bern(p_w_given_u),
        p_a_given_uz=bern(p_a_given_uz),
        p_y_given_ua=bern(p_y_given_ua),
    )


def random_binary_law(rng: np.random.Generator, lo: float = 0.15, hi: float = 0.85
                      ) -> tuple[DiscreteJointLaw, dict[int, float]]:
    """A random well-separated confounded binary law (for oracle sweeps)."""
    def draw(shape=()):
        return rng.uniform(lo, hi, size=shape)

    # keep W-Z association away from zero by separating the U-conditionals
    p_w0 = rng.uniform(lo, 0.45)
    p_w1 = rng.uniform(0.55, hi)
    return build_discrete_law(
        p_u=float(draw()),
        p_z_given_u=np.array([rng.uniform(lo, 0.45), rng.uniform(0.55, hi)]),
        p_w_given_u=np.array([p_w0, p_w1]),
        p_a_given_uz=draw((2, 2)),
        p_y_given_ua=draw((2, 2)),
    )
