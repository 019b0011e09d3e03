"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """A documented precondition of an operation was not met."""


class ConvergenceError(RuntimeError):
    """An iterative procedure failed to reach its tolerance.

    Carries the last residual and iteration count so callers can report
    diagnostics instead of a bare failure.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConfigError(ValueError):
    """Invalid or malformed experiment configuration."""
