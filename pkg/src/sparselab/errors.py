"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or malformed shapes."""


class ParameterError(ValueError):
    """A parameter is outside its documented domain."""


class ConfigError(ValueError):
    """A configuration is invalid or violates a precondition."""


class IntegrityError(RuntimeError):
    """An internal consistency check failed; results cannot be trusted."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss.  Carries the metrics trace
    collected up to the failure in .trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
