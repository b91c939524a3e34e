"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of an operation."""


class DegenerateTopologyError(DomainError):
    """The requested circuit operation is undefined for this topology
    (e.g. C_p = 0, where the algebraic free-running path must be used)."""


class NumericalInstabilityError(RuntimeError):
    """A simulation produced NaN or a non-physical value.  Carries step
    diagnostics in ``args[0]``."""


class ConfigError(ValueError):
    """A configuration file or parameter set is invalid."""


class TouchstoneError(ValueError):
    """A Touchstone file failed to parse.  ``line`` holds the 1-based
    offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SingularNetworkError(ValueError):
    """A two-port conversion is singular (e.g. |S21| = 0)."""
