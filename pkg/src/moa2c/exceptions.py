"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Shapes, sizes or hyper-parameters that cannot work together."""


class InputError(ValueError):
    """Numerical input that violates a precondition (NaN, inf, ...)."""


class DivergenceError(RuntimeError):
    """Training or an SGD trace produced non-finite or exploding values."""
