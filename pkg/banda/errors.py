"""Exception hierarchy for banda.

Input-validation errors also derive from ``ValueError`` so callers that only
know the builtin still catch them.
"""


class BandaError(Exception):
    """Base class for every error raised by banda."""


class ConfigError(BandaError, ValueError):
    """Configuration file or parameter set is invalid."""


class NotNeighborsError(BandaError, ValueError):
    """Two vertices were expected to be at Hamming distance one."""


class HorizonError(BandaError, ValueError):
    """A time horizon is non-positive or a query lies beyond the simulated one."""


class ScaleDomainError(BandaError, ValueError):
    """A scale quantity was requested outside its domain of definition."""


class QuadratureError(BandaError, RuntimeError):
    """Numerical integration did not reach the requested accuracy."""


class BudgetExceededError(BandaError, RuntimeError):
    """A run would exceed (or has exceeded) the configured event budget."""


class ExactComputationError(BandaError, RuntimeError):
    """A dense linear-algebra step failed or is too large."""


class BlockTooShortError(BandaError, ValueError):
    """Strong-stationary-time block does not bring separation below 1/e."""


class PathError(BandaError, ValueError):
    """A step path violates its structural contract."""


class DegenerateSampleError(BandaError, ValueError):
    """A statistical test received samples it cannot be applied to."""


class MarkError(BandaError, ValueError):
    """A trap mark cannot be extracted from the given Green estimate."""
