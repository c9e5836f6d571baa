"""Exception hierarchy shared by every module.

Each family carries the process exit code the CLI reports for it.
"""
from typing import Optional


class ToolkitError(Exception):
    """Base class for all errors raised by the toolkit."""

    exit_code: int = 1


class ConfigError(ToolkitError):
    """Invalid or inconsistent experiment / application configuration."""

    exit_code = 2


class HypothesisViolationError(ConfigError):
    """A regime was requested whose mathematical precondition does not hold."""


class DataError(ToolkitError):
    """Invalid input data or parameters that cannot be turned into a valid model."""

    exit_code = 3


class DataFormatError(DataError):
    """Malformed input file (empty, ragged, non-numeric, missing cells)."""


class InputError(DataError):
    """Arguments with inconsistent shapes or out-of-range labels."""


class DomainError(DataError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class DegenerateLevelError(DomainError):
    """A credibility level that produces an unbounded region."""


class UnattainableLevelError(DomainError):
    """A target value above the range of a monotone function."""


class DivisionDomainError(DomainError):
    """Relative deviation requested against a zero reference value."""

    def __init__(self, message: str, deviation: float):
        super().__init__(message)
        self.deviation = deviation


class BoundaryModeError(DataError):
    """The posterior mode is not interior, so no Laplace approximation exists."""


class InfeasibleRegionError(DataError):
    """A parameter region has no point on the probability simplex."""


class EmptySetError(DataError):
    """An intersection produced an empty uncertainty set."""


class DecompositionError(DataError):
    """A correlation matrix could not be factorized (not positive semidefinite)."""


class InstabilityError(DataError):
    """Queue statistics describe an unstable system (arrival rate >= service rate)."""


class SolverError(ToolkitError):
    """Numerical failure inside an optimization routine."""

    exit_code = 4


class ConvergenceError(SolverError):
    """An iterative method exhausted its budget; the best bound found is attached."""

    def __init__(self, message: str, best_bound: Optional[float] = None):
        super().__init__(message)
        self.best_bound = best_bound


class ContractViolationError(SolverError):
    """A user-supplied callable broke a documented monotonicity contract."""
