"""Exception hierarchy shared by the solver modules and the CLI."""


class ConfigError(ValueError):
    """Invalid run parameter or configuration file."""


class PreconditionError(ValueError):
    """Input violates a documented precondition (e.g. nonpositive density)."""


class ConvergenceError(RuntimeError):
    """The nonlinear iteration failed; ``residual`` holds the last value."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class InvariantViolation(AssertionError):
    """A verified discrete identity or estimate does not hold."""
