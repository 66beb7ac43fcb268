"""Putting three sensors into one world frame from a single static reading each.

Three sensors rest near a magnetic anomaly. Each reads gravity and the local
field once. Gravity gives "up", the horizontal field gives "north", so every
sensor knows its own attitude relative to a shared north frame. The field
*difference* between two sensors, seen in that shared frame, then reveals
their separation, provided the field model has a usable gradient there.

Run with ``python demos/anchor_sensors.py``.
"""

import numpy as np

from geomag_align.errors import UnobservableDisplacementError
from geomag_align.geometry import EulerAngles, euler_to_rotation, rotation_angle_between
from geomag_align.sim import CompositeField, DipoleField, UniformField, earth_field
from geomag_align.strapdown import PoseState
from geomag_align.wcs import anchor_wcs, north_reference

UP = np.array([0.0, 0.0, 9.81])
field = CompositeField(earth_field(), (DipoleField([0.5, 0.0, -1.5], [0.0, 0.0, 100.0]),))

sensors = {
    "1": (np.array([0.0, 0.0, 0.0]), euler_to_rotation(EulerAngles(0.0, 0.0, 0.3))),
    "2": (np.array([1.0, 0.0, 0.0]), euler_to_rotation(EulerAngles(0.1, 0.0, -1.0))),
    "3": (np.array([0.3, 0.0, 0.6]), euler_to_rotation(EulerAngles(0.0, -0.2, 2.0))),
}


def readings(model):
    # what each sensor would measure: field and gravity reaction in its body axes
    return {sid: north_reference(R.T @ model.field(p), R.T @ UP) for sid, (p, R) in sensors.items()}


refs = readings(field)
for sid, ref in refs.items():
    print(f"sensor {sid}: heading {np.degrees(ref.heading):7.2f} deg")

anchor, transforms = anchor_wcs({sid: PoseState(0.0) for sid in sensors}, refs, field)
p1, R1 = sensors["1"]
print("\nWCS = sensor 1's body frame")
for sid, T in transforms.items():
    p, R = sensors[sid]
    truth = R1.T @ (p - p1)
    print(f"sensor {sid}: D_1n = {np.round(T.D_1n, 4)}  (true {np.round(truth, 4)}), "
          f"rotation error {np.degrees(rotation_angle_between(T.R_1n, R1.T @ R)):.1e} deg")

# In a perfectly uniform field every sensor reads the same vector: only headings survive.
try:
    anchor_wcs({sid: PoseState(0.0) for sid in sensors}, readings(UniformField(earth_field())), UniformField(earth_field()))
except UnobservableDisplacementError as exc:
    print("\nuniform field:", exc)
_, heading_only = anchor_wcs(
    {sid: PoseState(0.0) for sid in sensors},
    readings(UniformField(earth_field())),
    UniformField(earth_field()),
    require_displacement=False,
)
print("heading-only fallback for sensor 2, displacement observed:", heading_only["2"].displacement_observed)
