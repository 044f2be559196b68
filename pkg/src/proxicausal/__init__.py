"""Causal effect estimation with confounding proxies.

Estimators adjust for an unmeasured confounder through two buckets of
measured proxies: treatment-side (Z) and outcome-side (W). The package
covers point-treatment two-stage least squares and parametric g-computation,
discrete bridge solvers, a recursive least-squares procedure for
time-varying treatments, greedy proxy allocation, and bootstrap inference,
validated against synthetic generators with known ground truth.
"""

from .allocation import AllocationResult, allocate_proxies
from .bridge import (
    BridgeFunction,
    DiscreteBridge,
    probit_bridge_mean,
    probit_bridge_mean_mc,
    proximal_g_formula,
    solve_binary_bridge,
    solve_categorical_bridge,
)
from .data import (
    CategoricalVariable,
    Dataset,
    DiscreteJointLaw,
    Layout,
    POINT,
    completeness_rank_check,
    read_dataset,
    validate_dataset,
)
from .dgp import (
    GroundTruth,
    LongitudinalDgpSpec,
    PointDgpSpec,
    build_discrete_law,
    default_longitudinal_spec,
    default_point_spec,
    generate_longitudinal,
    generate_point,
    law_from_factors,
    longitudinal_do_mean_mc,
    misspec_longitudinal_spec,
    misspec_point_spec,
    point_do_mean_mc,
    probit_point_spec,
    random_binary_law,
    verify_ground_truth,
)
from .linalg import LinearFit, LogisticFit, logistic_irls, ols
from .longitudinal import (
    DEFAULT_MAPS,
    FeatureMap,
    RecursiveFit,
    StageMaps,
    fit_ipw_msm,
    fit_longitudinal_g_computation,
    fit_recursive_ls,
    two_period_recursive_fit,
)
from .point import (
    ConfoundingTest,
    EffectEstimate,
    fit_ols_baseline,
    fit_p2sls,
    fit_proximal_g_computation,
    fit_standard_g_formula,
    test_confounding,
)
from .resampling import (
    BootstrapResult,
    ReplicationStudy,
    bootstrap,
    run_replication_study,
    summarize_replicates,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationResult",
    "BootstrapResult",
    "BridgeFunction",
    "CategoricalVariable",
    "ConfoundingTest",
    "Dataset",
    "DEFAULT_MAPS",
    "DiscreteBridge",
    "DiscreteJointLaw",
    "EffectEstimate",
    "FeatureMap",
    "GroundTruth",
    "Layout",
    "LinearFit",
    "LogisticFit",
    "LongitudinalDgpSpec",
    "POINT",
    "PointDgpSpec",
    "RecursiveFit",
    "ReplicationStudy",
    "StageMaps",
    "allocate_proxies",
    "bootstrap",
    "build_discrete_law",
    "completeness_rank_check",
    "default_longitudinal_spec",
    "default_point_spec",
    "fit_ipw_msm",
    "fit_longitudinal_g_computation",
    "fit_ols_baseline",
    "fit_p2sls",
    "fit_proximal_g_computation",
    "fit_recursive_ls",
    "fit_standard_g_formula",
    "generate_longitudinal",
    "generate_point",
    "law_from_factors",
    "logistic_irls",
    "longitudinal_do_mean_mc",
    "misspec_longitudinal_spec",
    "misspec_point_spec",
    "ols",
    "point_do_mean_mc",
    "probit_bridge_mean",
    "probit_bridge_mean_mc",
    "probit_point_spec",
    "proximal_g_formula",
    "random_binary_law",
    "read_dataset",
    "run_replication_study",
    "solve_binary_bridge",
    "solve_categorical_bridge",
    "summarize_replicates",
    "test_confounding",
    "two_period_recursive_fit",
    "validate_dataset",
    "verify_ground_truth",
]
