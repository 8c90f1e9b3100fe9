"""Exception types; each maps to one CLI exit code."""


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""

    exit_code = 2


class MissingStageError(RuntimeError):
    """A stage was requested before its prerequisites were computed (exit code 2)."""

    exit_code = 2


class NumericalError(RuntimeError):
    """A numeric failure: indefinite Gram, singular matrix, solver breakdown (exit code 3)."""

    exit_code = 3


class CheckFailure(AssertionError):
    """A hard assertion of the experiment failed (exit code 1)."""

    exit_code = 1
