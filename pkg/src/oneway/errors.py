"""Exception types raised by the library."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation (e.g. a negative price)."""


class UnsupportedModelError(ValueError):
    """The utility model cannot be used for the requested operation."""


class InfeasibleInstanceError(ValueError):
    """The allocation problem violates the capacity bounds sum(m) <= Q <= sum(M)."""


class InapplicableCertificateError(ValueError):
    """A convergence certificate was requested outside its hypotheses."""


class ConfigError(ValueError):
    """Experiment configuration could not be parsed or resolved."""
