"""Exception and warning types shared across the package.

Two families matter for the command line front end: configuration-type
errors (bad user input, geometry that the model cannot represent) and
numerical errors (quadrature that refuses to converge, ill-conditioned
systems).  The CLI maps the former to exit code 2 and the latter to 3.
"""


class SuperdipError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SuperdipError):
    """Invalid user-supplied configuration or parameters."""


class GeometryError(ConfigError):
    """Array geometry that is inconsistent or outside the model's scope."""


class ModelValidityError(ConfigError):
    """Parameters outside the validity range of the sinusoidal-current model."""


class DomainError(ConfigError):
    """Argument outside a function's mathematical domain."""


class NumericalError(SuperdipError):
    """A numerical procedure failed to produce a trustworthy result."""


class QuadratureError(NumericalError):
    """Non-finite integrand sample encountered during quadrature."""


class ResolutionError(NumericalError):
    """Quadrature did not converge under node doubling."""


class ConditioningError(NumericalError):
    """Linear system too ill-conditioned to solve reliably."""


class PassivityError(NumericalError):
    """A solution violates passivity (negative input power); indicates a solver bug."""


class UndefinedPortError(NumericalError):
    """Active impedance undefined because a port carries (numerically) zero current."""


class FarFieldWarning(UserWarning):
    """Receiver distance does not safely satisfy the far-field assumptions."""


class DiscretizationWarning(UserWarning):
    """Sample spacing below the wire radius; point-matched currents may oscillate."""
