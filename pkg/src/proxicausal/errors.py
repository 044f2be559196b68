"""Exception types raised across the package."""

from __future__ import annotations

from dataclasses import dataclass


class ProxicausalError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ProxicausalError):
    """Design/response/weight shapes are incompatible."""


class AllZeroWeights(ProxicausalError):
    """Weights are negative, or do not have a positive sum."""


class SingleClassResponse(ProxicausalError):
    """Logistic regression response contains only one class."""


class ZeroMassCell(ProxicausalError):
    """A conditioning event has probability zero."""


class WeakProxy(ProxicausalError):
    """W carries no association with Z in the conditioning cell."""


class NoSolution(ProxicausalError):
    """The discrete bridge system is inconsistent beyond tolerance."""


class DegenerateProbability(ProxicausalError):
    """A conditional probability parameter is outside (0, 1)."""


class InvalidSpec(ProxicausalError):
    """A synthetic-model specification violates its structural requirements."""


class OptimizerNotConverged(ProxicausalError):
    """Likelihood optimization failed to reach the gradient tolerance."""

    def __init__(self, message: str, gradient_norm: float):
        super().__init__(f"{message} (gradient inf-norm {gradient_norm:.3e})")
        self.gradient_norm = gradient_norm


class TooManyFailedReplicates(ProxicausalError):
    """More than the tolerated share of bootstrap replicates errored."""


class EmptyCandidates(ProxicausalError):
    """Proxy allocation was called with no candidate columns."""


class ConfigSchemaError(ProxicausalError):
    """A run configuration does not validate against the expected schema."""


@dataclass(frozen=True)
class ValidationIssue:
    """One dataset violation: a spec error code plus the offending location."""

    code: str  # missing_column | non_finite | duplicate_subject_time | role_conflict
    column: str | None
    row: int | None
    message: str

    def __str__(self) -> str:
        loc = []
        if self.column is not None:
            loc.append(f"column {self.column!r}")
        if self.row is not None:
            loc.append(f"row {self.row}")
        where = " at " + ", ".join(loc) if loc else ""
        return f"[{self.code}]{where}: {self.message}"


class DatasetValidationError(ProxicausalError):
    """Carries every violation found while validating a dataset."""

    def __init__(self, issues: list[ValidationIssue]):
        self.issues = list(issues)
        super().__init__(
            "dataset validation failed:\n" + "\n".join(str(i) for i in self.issues)
        )
