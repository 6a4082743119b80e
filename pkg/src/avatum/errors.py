"""Exception hierarchy shared across the package."""
from __future__ import annotations


class AvatumError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AvatumError):
    """Invalid configuration, parameters, or an ill-posed problem setup."""


class NumericalError(AvatumError):
    """A numerical procedure failed to converge or produced non-finite values."""

    def __init__(self, message: str, residual: float | None = None):
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class GeometryError(AvatumError):
    """Degenerate geometric input (too few points, zero-length contour, ...)."""


class InfeasibleStateError(AvatumError):
    """A requested tumor state is outside the physically meaningful range."""


class NoEquilibriumError(AvatumError):
    """The reduced radial model has no stationary state in (0, 1)."""


class DomainExitError(AvatumError):
    """The tumor radius left (0, 1); the avascular model assumptions end here."""


class FittingError(AvatumError):
    """A calibration fit could not find the required trajectory phase."""


class RateConsistencyError(AvatumError):
    """An event rate came out negative; rates must be nonnegative by construction."""


class LimitCaseWarning(UserWarning):
    """A formula was evaluated at a removable singularity via its analytic limit."""


class ShapeFlagWarning(UserWarning):
    """A geometric measurement hit a flagged condition (self-intersection, ...)."""
