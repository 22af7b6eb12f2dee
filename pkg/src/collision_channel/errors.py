"""Exception types. Each carries a short machine-readable ``category``."""


class CollisionChannelError(Exception):
    category = "error"


class InvalidParameterError(CollisionChannelError, ValueError):
    category = "invalid-parameter"


class DomainError(CollisionChannelError, ValueError):
    category = "domain-error"


class NumericalFailureError(CollisionChannelError, ArithmeticError):
    category = "numerical-failure"


class GenerationFailureError(CollisionChannelError, RuntimeError):
    category = "generation-failure"


class NoConvergenceError(CollisionChannelError, ValueError):
    category = "no-convergence"


class ConfigurationError(CollisionChannelError, ValueError):
    category = "configuration-error"
