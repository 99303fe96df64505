"""Multi-objective advantage actor-critic with min-norm gradient combination."""
from .exceptions import ConfigurationError, DivergenceError, InputError
from .minnorm import descent_certificate, solve_minnorm

__all__ = [
    "ConfigurationError",
    "DivergenceError",
    "InputError",
    "solve_minnorm",
    "descent_certificate",
]

__version__ = "0.1.0"
