"""Ground-truth generator: field models, trajectories and sensor synthesis."""

from .fields import (
    CompositeField,
    DipoleField,
    LinearGradientField,
    MagneticFieldModel,
    UniformField,
    earth_field,
    field_at,
    field_from_dict,
)
from .synth import GroundTruth, eq4_consistency_check, field_kinematics_residual, synthesize_trace
from .trajectories import (
    TRAJECTORY_TYPES,
    Circle,
    Kinematics,
    Line,
    Stairs,
    Stationary,
    TrajectorySpec,
    Tumble,
    Waypoints,
)

__all__ = [
    "CompositeField",
    "DipoleField",
    "LinearGradientField",
    "MagneticFieldModel",
    "UniformField",
    "earth_field",
    "field_at",
    "field_from_dict",
    "GroundTruth",
    "eq4_consistency_check",
    "field_kinematics_residual",
    "synthesize_trace",
    "TRAJECTORY_TYPES",
    "Circle",
    "Kinematics",
    "Line",
    "Stairs",
    "Stationary",
    "TrajectorySpec",
    "Tumble",
    "Waypoints",
]
