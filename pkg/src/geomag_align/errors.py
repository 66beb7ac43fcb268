"""Exception hierarchy shared by every module."""


class GeomagError(Exception):
    """Base class for all errors raised by geomag_align."""


class ContractViolation(GeomagError, ValueError):
    """An input broke a documented precondition."""


class InsufficientDataError(GeomagError):
    """Too few samples to perform the requested estimate."""


class FitDegenerateError(GeomagError):
    """The calibration sweep does not constrain the ellipsoid."""


class NotStaticError(GeomagError):
    """Accelerometer magnitude is too far from 1 g for a static reading."""


class DegenerateDipError(GeomagError):
    """Magnetic field is (nearly) parallel to gravity, heading undefined."""


class UnobservableDisplacementError(GeomagError):
    """Field gradient is singular, so displacement cannot be recovered."""


class IncompleteInitializationError(GeomagError):
    """A sensor is missing the data needed to join the world frame."""


class NumericalDegenerateError(GeomagError):
    """A matrix that must be invertible is (numerically) singular."""


class SingularPointError(GeomagError):
    """Field evaluated at a dipole's location."""


class FrameMismatchError(GeomagError, ValueError):
    """Two transforms were composed across mismatched frames."""


class TraceParseError(GeomagError, ValueError):
    """A trace file line is malformed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(GeomagError, ValueError):
    """A run configuration failed validation."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
