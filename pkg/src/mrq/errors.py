"""Exception types shared across the package."""


class MRQError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MRQError):
    """Invalid configuration: bad shapes, unknown names, illegal values."""


class ContractViolation(MRQError):
    """A caller broke a documented precondition."""


class SamplingError(MRQError):
    """Sampling requested from an empty or unusable buffer."""


class NumericError(MRQError):
    """Non-finite values encountered where finite ones are required."""


class TheoryError(MRQError):
    """A linear-theory computation could not be carried out (e.g. singular system)."""


class AbstractionError(ContractViolation):
    """An abstraction fails the reward/transition aggregation precondition."""
