"""Nonparametric bootstrap and replication-study drivers.

Replicates are independent, seeded by (seed, index), and aggregated in index
order, so results never depend on scheduling and parallel output equals the
serial output bit for bit. ``n_jobs > 1`` runs replicates on a thread pool;
that pays off only when each fit is large enough to spend its time inside
GIL-releasing LAPACK calls, so small fits should keep the serial default.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .data import Dataset
from .errors import ProxicausalError, TooManyFailedReplicates

MAX_FAILED_SHARE = 0.05


def _frozen(columns: dict[str, NDArray]) -> dict[str, NDArray]:
    for arr in columns.values():
        arr.flags.writeable = False
    return columns


@dataclass(frozen=True)
class BootstrapResult:
    """Replicate matrix plus percentile summaries.

    ``ci`` rows are the empirical (alpha/2, 1 - alpha/2) quantiles of the
    successful replicates. ``unreliable`` is set when more than 5% of
    replicates failed but ``force`` suppressed the error.
    """

    replicates: NDArray  # (successful, n_params)
    se: NDArray
    ci: NDArray  # (n_params, 2)
    B: int
    alpha: float
    seed: int
    n_failed: int
    unreliable: bool


def resample_dataset(data: Dataset, rng: np.random.Generator) -> Dataset:
    """One bootstrap resample: rows for point data, whole subjects otherwise.

    Longitudinal resamples keep each drawn subject's full trajectory and
    assign fresh subject ids. Resampling a validated dataset preserves every
    dataset invariant by construction (tested), so the hot path rebuilds the
    container directly instead of re-running the validator.
    """
    if data.layout.kind == "point":
        idx = rng.integers(0, data.n_rows, size=data.n_rows)
        columns = {c: arr[idx] for c, arr in data.columns.items()}
        return Dataset(columns=_frozen(columns), roles=dict(data.roles),
                       layout=data.layout, n_rows=data.n_rows)

    sid_col = data.names_for("subject_id")[0]
    tid_col = data.names_for("time_index")[0]
    sid = data.column(sid_col)
    tidx = data.column(tid_col)
    subjects = np.unique(sid)
    J = data.layout.n_periods
    order = np.lexsort((tidx, sid))           # rows grouped by subject, time-sorted
    drawn = rng.integers(0, subjects.size, size=subjects.size)
    row_blocks = order.reshape(subjects.size, J)[drawn]  # (n_subjects, J)
    rows = row_blocks.reshape(-1)
    columns = {c: arr[rows] for c, arr in data.columns.items()}
    columns[sid_col] = np.repeat(np.arange(subjects.size, dtype=float), J)
    return Dataset(columns=_frozen(columns), roles=dict(data.roles),
                   layout=data.layout, n_rows=data.n_rows)


def _as_vector(value) -> NDArray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    return arr.reshape(-1)


def bootstrap(estimator: Callable[[Dataset], NDArray | float], data: Dataset,
              B: int = 500, alpha: float = 0.05, seed: int = 0,
              n_jobs: int = 1, force: bool = False) -> BootstrapResult:
    """Percentile bootstrap of an estimator over resampled datasets.

    ``estimator`` maps a Dataset to a parameter vector (or scalar).
    Replicate r uses the generator seeded by (seed, r). Failing replicates
    (any package error or linear-algebra failure) are dropped and counted;
    more than 5% failures raises TooManyFailedReplicates unless ``force``.
    """
    if B < 50:
        raise ValueError("B must be at least 50")

    def one(r: int) -> NDArray | None:
        rng = np.random.default_rng([seed, r])
        try:
            return _as_vector(estimator(resample_dataset(data, rng)))
        except (ProxicausalError, np.linalg.LinAlgError, ValueError):
            return None

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(one, range(B)))
    else:
        results = [one(r) for r in range(B)]

    kept = [r for r in results if r is not None]
    n_failed = B - len(kept)
    unreliable = n_failed / B > MAX_FAILED_SHARE
    if unreliable and not force:
        raise TooManyFailedReplicates(
            f"{n_failed}/{B} bootstrap replicates failed (> {MAX_FAILED_SHARE:.0%})")
    replicates = np.vstack(kept)
    se = replicates.std(axis=0, ddof=1) if replicates.shape[0] > 1 \
        else np.zeros(replicates.shape[1])
    lo = np.quantile(replicates, alpha / 2, axis=0)
    hi = np.quantile(replicates, 1 - alpha / 2, axis=0)
    return BootstrapResult(
        replicates=replicates, se=se, ci=np.column_stack([lo, hi]),
        B=B, alpha=alpha, seed=seed, n_failed=n_failed, unreliable=unreliable,
    )


@dataclass(frozen=True)
class EstimatorSummary:
    name: str
    mean: NDArray
    bias: NDArray
    mc_se: NDArray
    sd: NDArray
    coverage: NDArray | None
    n_failed: int


@dataclass(frozen=True)
class ReplicationStudy:
    """Per-estimator bias/precision summary over simulated replications."""

    summaries: tuple[EstimatorSummary, ...]
    truth: NDArray
    reps: int
    n: int
    seed: int
    estimates: dict[str, NDArray] = field(repr=False, default_factory=dict)

    def table(self) -> list[dict]:
        rows = []
        for s in self.summaries:
            for k in range(s.mean.size):
                rows.append({
                    "estimator": s.name,
                    "component": k,
                    "truth": float(self.truth[k]),
                    "mean": float(s.mean[k]),
                    "bias": float(s.bias[k]),
                    "mc_se": float(s.mc_se[k]),
                    "sd": float(s.sd[k]),
                    "coverage": None if s.coverage is None else float(s.coverage[k]),
                    "n_failed": s.n_failed,
                })
        return rows


def summarize_replicates(estimates: dict[str, NDArray], truth: NDArray,
                         coverage: dict[str, NDArray] | None = None
                         ) -> list[EstimatorSummary]:
    """Aggregate per-replicate estimate matrices into study summaries."""
    truth = _as_vector(truth)
    out = []
    for name, mat in estimates.items():
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        ok = ~np.any(np.isnan(mat), axis=1)
        clean = mat[ok]
        mean = clean.mean(axis=0)
        sd = clean.std(axis=0, ddof=1)
        cov = None
        if coverage is not None and name in coverage:
            cov = np.asarray(coverage[name], dtype=float)[ok].mean(axis=0)
            cov = _as_vector(cov)
        out.append(EstimatorSummary(
            name=name, mean=mean, bias=mean - truth,
            mc_se=sd / np.sqrt(clean.shape[0]), sd=sd, coverage=cov,
            n_failed=int((~ok).sum()),
        ))
    return out


def run_replication_study(generate: Callable[[int, int], Dataset],
                          estimators: dict[str, Callable[[Dataset], NDArray | float]],
                          truth: NDArray | float, n: int, reps: int,
                          seed: int = 0, n_jobs: int = 1) -> ReplicationStudy:
    """Repeatedly simulate, fit every estimator, and summarize bias.

    ``generate(n, seed_r)`` builds replicate r's dataset with seed derived
    from (seed, r); failed fits turn into NaN rows that are dropped and
    counted per estimator. Deterministic given seed.
    """
    if reps < 50:
        raise ValueError("reps must be at least 50")
    truth_vec = _as_vector(truth)
    names = list(estimators)

    def one(r: int) -> dict[str, NDArray]:
        dataset = generate(n, int(np.random.default_rng([seed, r]).integers(2**31)))
        row = {}
        for name in names:
            try:
                row[name] = _as_vector(estimators[name](dataset))
            except (ProxicausalError, np.linalg.LinAlgError, ValueError):
                row[name] = np.full(truth_vec.size, np.nan)
        return row

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(one, range(reps)))
    else:
        rows = [one(r) for r in range(reps)]

    estimates = {name: np.vstack([row[name] for row in rows]) for name in names}
    summaries = summarize_replicates(estimates, truth_vec)
    return ReplicationStudy(summaries=tuple(summaries), truth=truth_vec,
                            reps=reps, n=n, seed=seed, estimates=estimates)
