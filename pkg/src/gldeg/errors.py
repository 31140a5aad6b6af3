"""Exception hierarchy shared by all modules.

The CLI maps ``ConfigError`` to exit status 2 and every other ``GldegError``
to exit status 3.
"""


class GldegError(Exception):
    """Base class for all package errors."""


class ConfigError(GldegError):
    """Invalid or inconsistent configuration."""


class GeometryError(GldegError):
    """Domain specification violates a geometric invariant."""


class ResolutionError(GldegError):
    """Mesh too coarse for the requested operation."""


class DomainError(GldegError):
    """Point outside the domain of an analytic chart."""


class DegeneracyError(GldegError):
    """Modulus too close to zero for a phase to be defined."""


class TopologyError(GldegError):
    """Region is not simply connected."""


class NumericError(GldegError):
    """Solver failure (non-convergence, singular system)."""


class TruncationError(NumericError):
    """Series or spectral truncation too short."""


class ConstructionError(GldegError):
    """A constructive map could not be built within its tolerances."""


class ParameterError(GldegError):
    """Parameters violate a precondition of a bound."""


class PreconditionError(GldegError):
    """Input field violates an operation precondition."""
