"""Exception types raised across the package."""


class ParameterError(ValueError):
    """A parameter lies outside its admissible set."""


class DomainError(ValueError):
    """A function was evaluated outside its domain."""


class MomentDivergenceError(ArithmeticError):
    """The requested moment does not exist for the given distribution."""


class FactorizationError(ArithmeticError):
    """A matrix factorization failed (singular or not positive definite)."""


class DegenerateSeriesError(ValueError):
    """A series is constant, so autocorrelations are undefined."""


class CaseMismatchError(ValueError):
    """The hypotheses of the requested drift case do not hold for the model."""


class ConfigError(ValueError):
    """Malformed configuration; carries the offending section and key."""

    def __init__(self, message, section=None, key=None):
        super().__init__(message)
        self.section = section
        self.key = key


class SgdDivergenceError(ArithmeticError):
    """Stochastic-gradient iterates left the admissible region."""

    def __init__(self, message, iteration=None, trajectory=None):
        super().__init__(message)
        self.iteration = iteration
        self.trajectory = trajectory
