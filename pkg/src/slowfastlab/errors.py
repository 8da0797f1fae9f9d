# Exception hierarchy shared by all modules.
from __future__ import annotations

__all__ = [
    "SlowFastError",
    "ContractViolationError",
    "NumericalOverflowError",
    "ConfigurationError",
    "UnsupportedOperationError",
    "ValidationError",
    "DomainError",
    "NonConvergenceError",
    "NearFoldError",
    "DegenerateProblemError",
    "PreconditionError",
    "StiffnessFailureError",
    "NoExitError",
    "StageError",
]


class SlowFastError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolationError(SlowFastError):
    """An input violates a declared shape/dimension contract."""


class NumericalOverflowError(SlowFastError):
    """A computation produced non-finite values; message names the offender."""


class ConfigurationError(SlowFastError):
    """Missing or inconsistent model/run configuration."""


class UnsupportedOperationError(SlowFastError):
    """Operation not defined for the given grid or system kind."""


class ValidationError(SlowFastError):
    """Input data fails a validation check (e.g. kernel symmetry)."""


class DomainError(SlowFastError):
    """Scalar argument outside the mathematical domain of an operation."""


class NonConvergenceError(SlowFastError):
    """An iterative method failed to converge; message carries diagnostics."""


class NearFoldError(NonConvergenceError):
    """Newton hit a (near-)singular Jacobian; arclength continuation advised."""


class DegenerateProblemError(SlowFastError):
    """Degenerate input (e.g. non-simple null eigenvalue, r = 0 parameter)."""


class PreconditionError(SlowFastError):
    """A documented precondition of an operation does not hold."""


class StiffnessFailureError(SlowFastError):
    """Adaptive step-size control underflowed; message carries the state."""


class NoExitError(SlowFastError):
    """Entry-exit integral never returns to zero inside the scan window."""


class StageError(SlowFastError):
    """Failure inside a named stage of a preset pipeline."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[stage:{stage}] {message}")
        self.stage = stage
