"""Exception types raised across the package."""


class StochSCLError(Exception):
    """Base class for all package errors."""


class InvalidDomain(StochSCLError, ValueError):
    pass


class AssumptionViolated(StochSCLError):
    """A coefficient model failed one of its declared structural bounds.

    ``sample`` holds the offending sample (a pair of points for Lipschitz
    failures, a single point for envelope failures).
    """

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


class DerivativeMismatch(StochSCLError):
    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


class SupportViolation(StochSCLError, ValueError):
    pass


class StabilityError(StochSCLError, ValueError):
    pass


class NumericalBlowup(StochSCLError, FloatingPointError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EnsembleMismatch(StochSCLError, ValueError):
    pass


class VGridOverflow(StochSCLError):
    pass


class A4Violation(StochSCLError):
    pass


class PostShock(StochSCLError, ValueError):
    pass


class ConfigError(StochSCLError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
