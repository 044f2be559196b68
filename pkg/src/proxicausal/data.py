"""Observational dataset abstraction: column roles, validation, discrete laws.

Datasets are immutable after construction (arrays are marked read-only) and
all operations here are pure functions, so sharing across threads is safe.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from .errors import DatasetValidationError, ValidationIssue, ZeroMassCell

ROLES = (
    "outcome",
    "treatment",
    "covariate_x",
    "proxy_z",
    "proxy_w",
    "subject_id",
    "time_index",
)

# Relative singular-value tolerance for the completeness rank decision;
# overridable per call for ill-conditioned studies.
COMPLETENESS_RCOND = 1e-10


@dataclass(frozen=True)
class Layout:
    """Point layout, or longitudinal with ``n_periods`` follow-up times."""

    kind: str  # "point" | "longitudinal"
    n_periods: int | None = None

    def __post_init__(self):
        if self.kind not in ("point", "longitudinal"):
            raise ValueError(f"unknown layout kind {self.kind!r}")
        if self.kind == "longitudinal" and (self.n_periods is None or self.n_periods < 2):
            raise ValueError("longitudinal layout requires n_periods >= 2")


POINT = Layout("point")


@dataclass(frozen=True)
class WideRecords:
    """Per-subject wide arrays pivoted from a longitudinal dataset.

    Shapes: ``y`` is (n,), ``a`` is (n, J), and each covariate panel is
    (n, J, d) with columns ordered as in the source dataset.
    """

    y: NDArray
    a: NDArray
    z: NDArray
    w: NDArray
    x: NDArray
    subject_ids: NDArray


@dataclass(frozen=True)
class Dataset:
    """Validated column table with role labels. Construct via validate_dataset."""

    columns: dict[str, NDArray]
    roles: dict[str, str]
    layout: Layout
    n_rows: int

    def column(self, name: str) -> NDArray:
        return self.columns[name]

    def names_for(self, role: str) -> list[str]:
        return [c for c, r in self.roles.items() if r == role]

    def matrix(self, role: str) -> NDArray:
        names = self.names_for(role)
        if not names:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self.columns[c] for c in names])

    @property
    def outcome(self) -> NDArray:
        return self.columns[self.names_for("outcome")[0]]

    @property
    def treatment(self) -> NDArray:
        names = self.names_for("treatment")
        if len(names) != 1:
            raise ValueError(f"expected a single treatment column, found {names}")
        return self.columns[names[0]]

    def to_wide(self) -> WideRecords:
        """Pivot long-format rows into per-subject wide records.

        Deterministic: subjects sorted by id, rows sorted by time within
        subject. Requires a validated longitudinal dataset.
        """
        if self.layout.kind != "longitudinal":
            raise ValueError("to_wide requires a longitudinal dataset")
        J = self.layout.n_periods
        sid = self.columns[self.names_for("subject_id")[0]]
        tidx = self.columns[self.names_for("time_index")[0]].astype(int)
        subjects = np.unique(sid)
        n = subjects.size
        order = np.lexsort((tidx, sid))

        def panel(role: str) -> NDArray:
            mat = self.matrix(role)
            return mat[order].reshape(n, J, mat.shape[1])

        y_long = self.outcome[order].reshape(n, J)
        a_long = self.treatment[order].reshape(n, J)
        return WideRecords(
            y=y_long[:, 0].copy(),
            a=a_long,
            z=panel("proxy_z"),
            w=panel("proxy_w"),
            x=panel("covariate_x"),
            subject_ids=subjects,
        )


def _freeze(arr: NDArray) -> NDArray:
    out = np.ascontiguousarray(arr, dtype=float)
    out.flags.writeable = False
    return out


def validate_dataset(
    raw: Mapping[str, Iterable[float]],
    roles: Mapping[str, str],
    layout: Layout,
) -> Dataset:
    """Check a raw column table against every dataset invariant.

    Returns a frozen Dataset, or raises DatasetValidationError listing
    every violation found (not just the first). Columns of ``raw`` that
    have no role are dropped. Missing data are rejected, never imputed.
    """
    issues: list[ValidationIssue] = []

    for col, role in roles.items():
        if role not in ROLES:
            issues.append(ValidationIssue("role_conflict", col, None, f"unknown role {role!r}"))
        if col not in raw:
            issues.append(ValidationIssue("missing_column", col, None, "column absent from table"))
    if issues:
        raise DatasetValidationError(issues)

    columns: dict[str, NDArray] = {}
    n_rows = None
    for col in roles:
        try:
            arr = np.asarray(list(raw[col]) if not isinstance(raw[col], np.ndarray) else raw[col], dtype=float)
        except (TypeError, ValueError):
            issues.append(ValidationIssue("non_finite", col, None, "column is not numeric"))
            continue
        if arr.ndim != 1:
            issues.append(ValidationIssue("role_conflict", col, None, "column must be 1-d"))
            continue
        if n_rows is None:
            n_rows = arr.shape[0]
        elif arr.shape[0] != n_rows:
            issues.append(
                ValidationIssue("role_conflict", col, None,
                                f"length {arr.shape[0]} != {n_rows} of other columns")
            )
            continue
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            issues.append(
                ValidationIssue("non_finite", col, int(bad[0]),
                                f"{bad.size} non-finite value(s), first at row {int(bad[0])}")
            )
        columns[col] = arr

    if n_rows is None or n_rows == 0:
        issues.append(ValidationIssue("missing_column", None, None, "table is empty"))
        raise DatasetValidationError(issues)

    outcome_cols = [c for c, r in roles.items() if r == "outcome"]
    treatment_cols = [c for c, r in roles.items() if r == "treatment"]
    if len(outcome_cols) != 1:
        issues.append(
            ValidationIssue("role_conflict", None, None,
                            f"exactly one outcome column required, found {outcome_cols}")
        )
    if not treatment_cols:
        issues.append(ValidationIssue("role_conflict", None, None, "at least one treatment column required"))

    sid_cols = [c for c, r in roles.items() if r == "subject_id"]
    time_cols = [c for c, r in roles.items() if r == "time_index"]
    if layout.kind == "point":
        for col in sid_cols + time_cols:
            issues.append(
                ValidationIssue("role_conflict", col, None,
                                "subject_id/time_index roles require longitudinal layout")
            )
    else:
        if len(sid_cols) != 1 or len(time_cols) != 1:
            issues.append(
                ValidationIssue("role_conflict", None, None,
                                "longitudinal layout requires exactly one subject_id and one time_index column")
            )
        if len(treatment_cols) > 1:
            issues.append(
                ValidationIssue("role_conflict", None, None,
                                "long-format longitudinal data carries exactly one treatment column")
            )

    if layout.kind == "longitudinal" and len(sid_cols) == 1 and len(time_cols) == 1 \
            and sid_cols[0] in columns and time_cols[0] in columns:
        J = layout.n_periods
        sid = columns[sid_cols[0]]
        tidx = columns[time_cols[0]]
        expected = set(range(J))
        for subject in np.unique(sid):
            times = tidx[sid == subject]
            seen = [int(t) for t in times]
            if sorted(seen) != sorted(set(seen)):
                issues.append(
                    ValidationIssue("duplicate_subject_time", time_cols[0], None,
                                    f"subject {subject:g} has duplicated time indices")
                )
            missing = expected - set(seen)
            extra = set(seen) - expected
            if missing or extra:
                issues.append(
                    ValidationIssue("duplicate_subject_time", time_cols[0], None,
                                    f"subject {subject:g}: missing periods {sorted(missing)}, "
                                    f"unexpected {sorted(extra)}")
                )
        if len(outcome_cols) == 1 and outcome_cols[0] in columns and not issues:
            yc = columns[outcome_cols[0]]
            for subject in np.unique(sid):
                vals = yc[sid == subject]
                if np.ptp(vals) != 0.0:
                    issues.append(
                        ValidationIssue("role_conflict", outcome_cols[0], None,
                                        f"outcome varies within subject {subject:g}; "
                                        "it must be constant across that subject's rows")
                    )

    if issues:
        raise DatasetValidationError(issues)

    return Dataset(
        columns={c: _freeze(columns[c]) for c in roles},
        roles=dict(roles),
        layout=layout,
        n_rows=n_rows,
    )


def load_table(path: str | Path, roles: Mapping[str, str]) -> tuple[dict[str, NDArray], dict[str, str]]:
    """Read a header-row CSV into numeric columns, one-hot encoding strings.

    Non-numeric columns are only accepted for covariate_x roles; each is
    expanded to indicator columns ``name=level`` with the first observed
    level as the dropped reference category.
    """
    # round_trip parsing: the written shortest-repr digits must come back as
    # the identical IEEE-754 double
    frame = pd.read_csv(path, float_precision="round_trip")
    columns: dict[str, NDArray] = {}
    out_roles = dict(roles)
    for name in frame.columns:
        series = frame[name]
        if series.dtype == object:
            if roles.get(name) != "covariate_x":
                # leave as-is; validate_dataset reports it if role-mapped
                columns[name] = series.to_numpy()
                continue
            levels = list(dict.fromkeys(series.tolist()))  # first-observed order
            del out_roles[name]
            for level in levels[1:]:
                new = f"{name}={level}"
                columns[new] = (series == level).to_numpy(dtype=float)
                out_roles[new] = "covariate_x"
        else:
            columns[name] = series.to_numpy(dtype=float)
    return columns, out_roles


def load_roles(path: str | Path) -> tuple[dict[str, str], Layout]:
    """Parse a roles config file: column->role map plus the layout block."""
    with open(path) as fh:
        cfg = json.load(fh)
    layout_cfg = cfg.get("layout", {"kind": "point"})
    if layout_cfg.get("kind") == "longitudinal":
        layout = Layout("longitudinal", int(layout_cfg["J"]))
    else:
        layout = POINT
    return dict(cfg["roles"]), layout


def read_dataset(data_path: str | Path, roles_path: str | Path) -> Dataset:
    """CSV + roles config -> validated Dataset."""
    roles, layout = load_roles(roles_path)
    columns, roles = load_table(data_path, roles)
    return validate_dataset(columns, roles, layout)


# ---------------------------------------------------------------------------
# Discrete joint laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CategoricalVariable:
    name: str
    n_categories: int


@dataclass(frozen=True)
class DiscreteJointLaw:
    """Full joint probability table over named categorical variables.

    Variable names follow the convention u/z/w/a/y (plus optional x); "u"
    marks the latent variable, which observable computations marginalize out.
    """

    variables: tuple[CategoricalVariable, ...]
    probabilities: NDArray

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        shape = tuple(v.n_categories for v in self.variables)
        if probs.shape != shape:
            raise ValueError(f"probability table shape {probs.shape} != {shape}")
        if np.any(probs < -1e-15):
            raise ValueError("probabilities must be nonnegative")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total}, not 1 within 1e-12")
        object.__setattr__(self, "probabilities", _freeze(probs))

    def axis(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)

    def has(self, name: str) -> bool:
        return any(v.name == name for v in self.variables)

    def n_categories(self, name: str) -> int:
        return self.variables[self.axis(name)].n_categories

    def marginal(self, names: tuple[str, ...]) -> NDArray:
        """Joint marginal over ``names``, axes in the given order."""
        keep = [self.axis(n) for n in names]
        drop = tuple(i for i in range(len(self.variables)) if i not in keep)
        table = self.probabilities.sum(axis=drop) if drop else self.probabilities
        # reorder remaining axes to match the requested order
        remaining = [i for i in range(len(self.variables)) if i not in drop]
        perm = [remaining.index(i) for i in keep]
        return np.transpose(table, perm)

    def conditional(self, target: str, given: Mapping[str, int]) -> NDArray:
        """P(target = . | given), raising ZeroMassCell on a null event."""
        names = (target, *given.keys())
        table = self.marginal(names)
        idx = (slice(None), *[int(v) for v in given.values()])
        slice_ = table[idx]
        mass = float(slice_.sum())
        if mass <= 0.0:
            raise ZeroMassCell(f"conditioning event {dict(given)} has zero probability")
        return slice_ / mass

    def conditional_matrix(self, row: str, col: str, given: Mapping[str, int]) -> NDArray:
        """Matrix M[r, c] = P(row=r | col=c, given)."""
        names = (row, col, *given.keys())
        table = self.marginal(names)
        idx = (slice(None), slice(None), *[int(v) for v in given.values()])
        block = table[idx]
        col_mass = block.sum(axis=0)
        if np.any(col_mass <= 0.0):
            bad = int(np.flatnonzero(col_mass <= 0.0)[0])
            raise ZeroMassCell(f"conditioning event {col}={bad}, {dict(given)} has zero probability")
        return block / col_mass[None, :]

    def expectation(self, target: str, given: Mapping[str, int]) -> float:
        """E[target | given] with categories valued by their index."""
        probs = self.conditional(target, given)
        return float(probs @ np.arange(probs.size))

    def observable(self) -> "DiscreteJointLaw":
        """The law with the latent variable (if any) marginalized out."""
        if not self.has("u"):
            return self
        keep = tuple(v.name for v in self.variables if v.name != "u")
        return DiscreteJointLaw(
            variables=tuple(v for v in self.variables if v.name != "u"),
            probabilities=self.marginal(keep),
        )


@dataclass(frozen=True)
class RankCheck:
    rank: int
    passes: bool
    singular_values: NDArray
    required_rank: int


def completeness_rank_check(
    law: DiscreteJointLaw,
    a: int,
    x: int | None = None,
    rcond: float = COMPLETENESS_RCOND,
) -> RankCheck:
    """Numerical rank of P(W=w | Z=z, A=a, X=x) and the pass decision.

    With a declared latent dimension d_u the check passes when
    rank >= d_u; otherwise it requires full rank min(d_w, d_z).
    """
    obs = law.observable()
    given = {"a": a}
    if x is not None:
        given["x"] = x
    mat = obs.conditional_matrix("w", "z", given)
    sv = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(sv > rcond * sv[0])) if sv.size and sv[0] > 0 else 0
    if law.has("u"):
        required = law.n_categories("u")
        passes = rank >= required
    else:
        required = min(mat.shape)
        passes = rank == required
    return RankCheck(rank=rank, passes=passes, singular_values=sv, required_rank=required)
