"""Exception hierarchy shared by all modules."""


class HeatInvError(Exception):
    """Base class for every error raised by this package."""

    category = "error"


class InvalidGrid(HeatInvError, ValueError):
    category = "invalid-grid"


class EvaluationError(HeatInvError, ValueError):
    category = "evaluation"


class DomainError(HeatInvError, ValueError):
    category = "domain"


class OutOfRange(HeatInvError, ValueError):
    """Value outside the range of the flux kernel; usually inconsistent data."""

    category = "out-of-range"


class DegenerateKernel(HeatInvError, ValueError):
    category = "degenerate-kernel"


class CoefficientError(HeatInvError, ValueError):
    category = "coefficient"


class DataInconsistent(HeatInvError):
    """Flux data cannot be produced by the model for any admissible coefficient."""

    category = "data-inconsistent"

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class OracleFailure(HeatInvError, RuntimeError):
    category = "oracle-failure"


class ConfigError(HeatInvError):
    category = "config"

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        full = f"{message} ({', '.join(where)})" if where else message
        super().__init__(full)
        self.key = key
        self.line = line


class NotConverged(HeatInvError):
    """Raised by the CLI when a solve ends with ``converged=False``."""

    category = "not-converged"


class NotConvergedWarning(RuntimeWarning):
    """Fixed-point iteration hit its cap before meeting the tolerance."""
