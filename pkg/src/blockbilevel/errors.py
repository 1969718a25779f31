"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A hyperparameter or call argument violates its documented range."""


class InvariantViolation(RuntimeError):
    """An internal invariant that should hold by construction was broken."""


class OracleError(RuntimeError):
    """A reference computation failed to reach its requested accuracy."""


class ConfigError(ValueError):
    """A run configuration is malformed or internally inconsistent."""
