class RkhsCalError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(RkhsCalError, ValueError):
    """Invalid configuration or input data."""


class NumericalError(RkhsCalError, ArithmeticError):
    """A factorization, quadrature or optimization step failed."""
