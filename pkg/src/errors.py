"""Exception hierarchy.

Every exception carries the process exit code the CLI reports for it, so
``main.py`` never has to guess how a failure should surface.
"""


class AnnealError(Exception):
    """Base class for all robust-anneal failures."""

    exit_code = 1


class ConfigError(AnnealError, ValueError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class DomainError(AnnealError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 2


class OutOfBandError(DomainError):
    """Subgradient target outside the singular band [M_lb, M_ub]."""

    def __init__(self, target: float, lower: float, upper: float):
        self.target = target
        self.lower = lower
        self.upper = upper
        super().__init__(
            f"target {target:.6g} lies outside the singular band [{lower:.6g}, {upper:.6g}]"
        )


class ZeroHamiltonianError(DomainError):
    """The Frobenius subdifferential at H(u) = 0 is a ball, not an interval."""


class NumericalError(AnnealError, ArithmeticError):
    """Non-finite values or loss of unitarity during a computation."""

    exit_code = 3


class OptimizationError(NumericalError):
    """No optimization start produced a finite result."""


class OutputError(AnnealError, OSError):
    """Reading or writing run artifacts failed."""

    exit_code = 4


class CorruptStateError(OutputError):
    """A persisted journal or store cannot be trusted for resuming."""
