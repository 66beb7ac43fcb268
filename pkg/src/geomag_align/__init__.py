"""Multi-sensor IMU/magnetometer alignment in a magnetic-north world frame."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractViolation,
    DegenerateDipError,
    FitDegenerateError,
    FrameMismatchError,
    GeomagError,
    IncompleteInitializationError,
    InsufficientDataError,
    NotStaticError,
    NumericalDegenerateError,
    SingularPointError,
    TraceParseError,
    UnobservableDisplacementError,
)
from .magcal import MagCalibration, MagSweep, StabilityReport, apply_calibration, fit_calibration, stability_metrics
from .strapdown import (
    EnvironmentConstants,
    ImuSample,
    PoseState,
    SensorNoiseModel,
    correct_acceleration,
    dead_reckon,
    propagate_attitude,
    propagate_velocity_position,
)
from .wcs import (
    NorthReference,
    RelativeTransform,
    TransferFunctions,
    WcsAnchor,
    anchor_wcs,
    locomotion_update,
    north_reference,
    relative_displacement,
    transfer_functions,
)
from .cloud import PointCloud, merge_error, transform_cloud
