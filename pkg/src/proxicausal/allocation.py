"""Greedy partition of candidate proxies into treatment- and outcome-side buckets.

Candidates are ranked once by their association strength in a treatment
model (logistic when the treatment is binary, linear otherwise) and in an
outcome model (linear, treatment included). Rounds then alternate: the
strongest remaining outcome-side candidate joins the W bucket, the strongest
remaining treatment-side candidate joins the Z bucket, each removed from
both rankings on allocation, until the candidate list is exhausted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import EmptyCandidates
from .linalg import logistic_irls, ols


@dataclass(frozen=True)
class CandidateScore:
    name: str
    outcome_stat: float
    treatment_stat: float


@dataclass(frozen=True)
class AllocationResult:
    z_set: tuple[str, ...]
    w_set: tuple[str, ...]
    ranking_table: tuple[CandidateScore, ...]
    tie_events: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "z_set": list(self.z_set),
            "w_set": list(self.w_set),
            "ranking_table": [
                {"candidate": s.name, "outcome_stat": s.outcome_stat,
                 "treatment_stat": s.treatment_stat}
                for s in self.ranking_table
            ],
            "tie_events": list(self.tie_events),
        }


def _association_scores(data: Dataset, candidates: list[str],
                        statistic: str) -> list[CandidateScore]:
    y = data.outcome
    a = data.treatment
    extra = [c for c in data.names_for("covariate_x") if c not in candidates]
    L = np.column_stack([data.column(c) for c in candidates]
                        + [data.column(c) for c in extra]) \
        if candidates + extra else np.empty((data.n_rows, 0))
    ones = np.ones((data.n_rows, 1))

    # treatment model: A on all measured covariates
    t_design = np.hstack([ones, L])
    binary_a = np.all(np.isin(a, (0.0, 1.0)))
    if binary_a:
        t_fit = logistic_irls(t_design, a)
        t_coef, t_se = t_fit.coefficients, t_fit.standard_errors
    else:
        lin = ols(t_design, a)
        t_coef, t_se = lin.coefficients, lin.standard_errors

    # outcome model: Y on treatment plus all measured covariates
    o_design = np.hstack([ones, a[:, None], L])
    o_fit = ols(o_design, y)
    o_coef, o_se = o_fit.coefficients, o_fit.standard_errors

    scores = []
    for i, name in enumerate(candidates):
        tc, ts = t_coef[1 + i], t_se[1 + i]
        oc, os_ = o_coef[2 + i], o_se[2 + i]
        if statistic == "wald":
            t_stat = abs(tc) / ts if ts > 0 else float("inf")
            o_stat = abs(oc) / os_ if os_ > 0 else float("inf")
        elif statistic == "coefficient":
            t_stat, o_stat = abs(tc), abs(oc)
        else:
            raise ValueError(f"unknown statistic {statistic!r}")
        scores.append(CandidateScore(name, float(o_stat), float(t_stat)))
    return scores


def _top(remaining: list[str], stats: dict[str, float]) -> str:
    # highest statistic wins; exact ties break lexicographically by name
    return min(remaining, key=lambda c: (-stats[c], c))


def allocate_proxies(data: Dataset, candidates: list[str],
                     tie_policy: str = "prioritize_w", seed: int = 0,
                     statistic: str = "wald") -> AllocationResult:
    """Partition candidate columns into Z and W buckets.

    ``tie_policy`` resolves the case where one variable simultaneously tops
    both rankings: "prioritize_w", "prioritize_z", or "randomize" (seeded).
    ``statistic`` is "wald" (absolute coefficient / SE, the scale-free
    default) or "coefficient" (raw absolute coefficients) for sensitivity
    analysis. The result is invariant to the input order of ``candidates``.
    """
    if not candidates:
        raise EmptyCandidates("no candidate proxies supplied")
    if tie_policy not in ("prioritize_w", "prioritize_z", "randomize"):
        raise ValueError(f"unknown tie policy {tie_policy!r}")
    ordered = sorted(set(candidates))
    if len(ordered) != len(candidates):
        raise ValueError("candidate names must be unique")
    missing = [c for c in ordered if c not in data.columns]
    if missing:
        raise ValueError(f"candidate columns not in dataset: {missing}")
    fixed_proxies = set(data.names_for("proxy_z")) | set(data.names_for("proxy_w"))
    clash = sorted(set(ordered) & fixed_proxies)
    if clash:
        raise ValueError(f"candidates already hold fixed proxy roles: {clash}")

    scores = _association_scores(data, ordered, statistic)
    o_stats = {s.name: s.outcome_stat for s in scores}
    t_stats = {s.name: s.treatment_stat for s in scores}
    rng = np.random.default_rng(seed)

    remaining = list(ordered)
    w_set: list[str] = []
    z_set: list[str] = []
    ties: list[str] = []
    while remaining:
        w_pick = _top(remaining, o_stats)
        z_pick = _top(remaining, t_stats)
        if w_pick == z_pick:
            to_w = {"prioritize_w": True, "prioritize_z": False}.get(
                tie_policy, None)
            if to_w is None:
                to_w = bool(rng.integers(0, 2))
            bucket = "W" if to_w else "Z"
            ties.append(f"{w_pick} topped both rankings; policy {tie_policy} -> {bucket}")
            (w_set if to_w else z_set).append(w_pick)
            remaining.remove(w_pick)
            continue
        w_set.append(w_pick)
        remaining.remove(w_pick)
        if remaining:
            z_pick = _top(remaining, t_stats)
            z_set.append(z_pick)
            remaining.remove(z_pick)

    ranking = tuple(sorted(scores, key=lambda s: (-s.outcome_stat, s.name)))
    return AllocationResult(tuple(z_set), tuple(w_set), ranking, tuple(ties))
