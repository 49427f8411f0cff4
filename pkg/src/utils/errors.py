"""
Exception hierarchy shared by the solver library and the experiment CLI.
"""

from typing import Optional


class KacanovError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(KacanovError, ValueError):
    """Invalid configuration: unknown model id, bad level, bad strategy parameters."""


class ArgumentError(KacanovError, ValueError):
    """Invalid call arguments: length or mesh mismatch, parameter out of range."""


class CapabilityError(KacanovError, NotImplementedError):
    """The diffusion model lacks something the requested operation needs (e.g. mu')."""


class NumericalError(KacanovError, ArithmeticError):
    """A numerical procedure failed to deliver a trustworthy result."""


class SolverConvergenceError(NumericalError):
    """Conjugate gradients did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IndefiniteMatrixError(NumericalError):
    """A matrix assumed symmetric positive definite showed non-positive curvature."""


class RetryLimitError(NumericalError):
    """A step-size loop exceeded its hard retry cap."""

    def __init__(self, message: str, retries: int):
        super().__init__(message)
        self.retries = retries
