"""Anchoring several IMU+magnetometer rigs in one north-referenced world frame.

Each sensor's static accelerometer and calibrated magnetometer readings fix
a *north frame* (z up, x along the horizontal field). Sensor 1's initial
body frame becomes the world coordinate system (WCS). Every other sensor
gets a :class:`RelativeTransform` mapping its initial body frame into the
WCS: the rotation follows from the two north references, the displacement
from the difference of the two field vectors expressed in the shared north
frame, converted to metres through the field model's gradient.

Displacement is only observable where the field gradient is non-singular,
and the shared-north assumption only holds where the horizontal field
direction is common to the sensors (true for a uniform background with
weak anomalies, and exactly in a symmetry plane of the anomalies).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    ContractViolation,
    DegenerateDipError,
    IncompleteInitializationError,
    NotStaticError,
    NumericalDegenerateError,
    UnobservableDisplacementError,
)
from .filters import KalmanState, kalman_predict, kalman_update
from .geometry import is_rotation, quat_from_rotation, quat_multiply, quat_to_rotation, rot_z, vec3
from .sim.fields import MagneticFieldModel, UniformField
from .strapdown import GRAVITY, EnvironmentConstants, ImuSample, PoseState, propagate_attitude

STATIC_BAND = 0.2
MIN_DIP_CLEARANCE = np.radians(5.0)
EPOCH_WINDOW_S = 5.0
GRADIENT_RANK_TOL = 1e-9


@dataclass(frozen=True)
class NorthReference:
    """Rotation from a sensor's body axes into its north frame at initialisation."""

    R_toNp: NDArray[np.float64]
    B_at_init: NDArray[np.float64]
    t_init: float = 0.0

    def __post_init__(self):
        if not is_rotation(self.R_toNp, tol=1e-9):
            raise ContractViolation("R_toNp is not a rotation")
        object.__setattr__(self, "B_at_init", vec3(self.B_at_init))

    @property
    def heading(self) -> float:
        """Yaw of the body x axis from magnetic north (positive counter-clockwise seen from above)."""
        x = self.R_toNp[:, 0]
        return float(np.arctan2(x[1], x[0]))


def north_reference(mag_cal: ArrayLike, acc_static: ArrayLike, t_init: float = 0.0) -> NorthReference:
    """Tilt-compensated north frame from one static accelerometer/magnetometer pair.

    The frame's z axis is the measured gravity reaction (up), its x axis
    the component of the calibrated field perpendicular to it, y completes
    a right-handed triad (pointing west).

    Raises
    ------
    NotStaticError
        ``|acc|`` deviates from 1 g by more than 20 %.
    DegenerateDipError
        The field is within 5 degrees of the vertical.
    """
    B = vec3(mag_cal)
    a = vec3(acc_static)
    na = np.linalg.norm(a)
    if abs(na - GRAVITY) > STATIC_BAND * GRAVITY:
        raise NotStaticError(f"|acc| = {na:.3f} m/s² is outside {STATIC_BAND:.0%} of {GRAVITY} m/s²")
    nb = np.linalg.norm(B)
    if nb == 0:
        raise DegenerateDipError("magnetic field reading is zero")
    up = a / na
    cos_angle = abs(up @ B) / nb
    if cos_angle > np.cos(MIN_DIP_CLEARANCE):
        raise DegenerateDipError(
            f"field is {np.degrees(np.arccos(min(cos_angle, 1.0))):.2f} deg from vertical; heading undefined"
        )
    north = B - (B @ up) * up
    north /= np.linalg.norm(north)
    west = np.cross(up, north)
    R = np.vstack([north, west, up])
    return NorthReference(R_toNp=R, B_at_init=B, t_init=float(t_init))


@dataclass(frozen=True)
class RelativeTransform:
    """Maps sensor n's initial body frame into the WCS: ``x_wcs = R_1n @ x_n + D_1n``."""

    D_1n: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    R_1n: NDArray[np.float64] = field(default_factory=lambda: np.eye(3))
    displacement_observed: bool = True

    def __post_init__(self):
        if not is_rotation(self.R_1n, tol=1e-9):
            raise ContractViolation("R_1n is not a rotation")
        object.__setattr__(self, "D_1n", vec3(self.D_1n))

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(points, dtype=float) @ self.R_1n.T + self.D_1n

    def compose(self, other: "RelativeTransform") -> "RelativeTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RelativeTransform(
            D_1n=self.R_1n @ other.D_1n + self.D_1n,
            R_1n=self.R_1n @ other.R_1n,
            displacement_observed=self.displacement_observed and other.displacement_observed,
        )

    def inverse(self) -> "RelativeTransform":
        return RelativeTransform(-self.R_1n.T @ self.D_1n, self.R_1n.T, self.displacement_observed)


def north_to_model(field_model: MagneticFieldModel, p: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rotation taking north-frame vectors into the field model's axes at ``p``."""
    B = field_model.field(p)
    return rot_z(np.arctan2(B[1], B[0]))


def _gradient_rank(G: NDArray[np.float64]) -> int:
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > GRADIENT_RANK_TOL * max(sv[0], 1.0)))


def solve_field_displacement(
    field_model: MagneticFieldModel,
    origin: ArrayLike,
    delta_B: ArrayLike,
    max_iter: int = 50,
    tol: float = 1e-12,
) -> NDArray[np.float64]:
    """Find ``D`` with ``B(origin + D) - B(origin) = delta_B`` (model axes).

    Starts from the local-gradient solution ``∇B⁻¹ ΔB`` and refines it with
    damped Newton steps on the full model.
    """
    p0 = vec3(origin)
    dB = vec3(delta_B)
    G0 = field_model.gradient(p0)
    rank = _gradient_rank(G0)
    if rank < 3:
        raise UnobservableDisplacementError(
            f"field gradient at {p0.tolist()} has rank {rank} < 3; displacement cannot be recovered from the field"
        )
    B0 = field_model.field(p0)
    D = np.linalg.solve(G0, dB)
    resid = field_model.field(p0 + D) - B0 - dB
    for _ in range(max_iter):
        if np.linalg.norm(resid) <= tol * max(1.0, np.linalg.norm(B0)):
            break
        step = np.linalg.solve(field_model.gradient(p0 + D), -resid)
        lam = 1.0
        while lam > 1e-4:
            cand = D + lam * step
            r_new = field_model.field(p0 + cand) - B0 - dB
            if np.linalg.norm(r_new) < np.linalg.norm(resid):
                break
            lam *= 0.5
        else:
            break
        D, resid = cand, r_new
    return D


def relative_displacement(
    ref1: NorthReference,
    refn: NorthReference,
    B1: ArrayLike | None = None,
    Bn: ArrayLike | None = None,
    field_model: MagneticFieldModel | None = None,
    origin: ArrayLike = (0.0, 0.0, 0.0),
) -> RelativeTransform:
    """Transform of sensor n relative to sensor 1 from their field readings.

    Both readings are rotated into the shared north frame (applying the
    inverse of each body-from-north rotation), differenced, and converted
    to a displacement by solving ``B(p1 + D) - B(p1) = ΔB`` on the field
    model, with ``origin`` the position of sensor 1 in model coordinates.

    Raises
    ------
    UnobservableDisplacementError
        No field model, or the field gradient at ``origin`` is singular
        (e.g. a uniform field).
    """
    B1 = ref1.B_at_init if B1 is None else vec3(B1)
    Bn = refn.B_at_init if Bn is None else vec3(Bn)
    R1, Rn = ref1.R_toNp, refn.R_toNp
    R_1n = R1.T @ Rn
    dB_north = Rn @ Bn - R1 @ B1
    if field_model is None:
        raise UnobservableDisplacementError("no field model: gradient unknown, displacement unobservable")
    p1 = vec3(origin)
    to_model = north_to_model(field_model, p1)
    D_model = solve_field_displacement(field_model, p1, to_model @ dB_north)
    D_north = to_model.T @ D_model
    return RelativeTransform(D_1n=R1.T @ D_north, R_1n=R_1n)


@dataclass(frozen=True)
class WcsAnchor:
    """The shared world frame: sensor ``origin_sensor``'s initial body frame.

    ``R_world`` maps WCS vectors into the north frame; ``transforms`` holds
    one :class:`RelativeTransform` per sensor (identity for the origin).
    """

    origin_sensor: str
    R_world: NDArray[np.float64]
    t0: float
    transforms: Mapping[str, RelativeTransform] = field(default_factory=dict)
    epochs: Mapping[str, float] = field(default_factory=dict)
    origin_in_field: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def to_wcs(self, sensor_id: str, R_local: ArrayLike, p_local: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Express a pose given in a sensor's initial body frame in the WCS."""
        T = self.transforms[sensor_id]
        return T.R_1n @ np.asarray(R_local, dtype=float), T.R_1n @ vec3(p_local) + T.D_1n

    def to_dict(self) -> dict:
        return {
            "origin_sensor": self.origin_sensor,
            "R_world": np.asarray(self.R_world).tolist(),
            "t0": self.t0,
            "origin_in_field": np.asarray(self.origin_in_field).tolist(),
            "sensors": {
                sid: {
                    "R": T.R_1n.reshape(-1).tolist(),
                    "D_1n": T.D_1n.tolist(),
                    "displacement_observed": T.displacement_observed,
                    "epoch": self.epochs.get(sid),
                }
                for sid, T in self.transforms.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WcsAnchor":
        transforms = {}
        epochs = {}
        for sid, e in d["sensors"].items():
            transforms[sid] = RelativeTransform(
                D_1n=np.asarray(e["D_1n"], dtype=float),
                R_1n=np.asarray(e["R"], dtype=float).reshape(3, 3),
                displacement_observed=bool(e.get("displacement_observed", True)),
            )
            if e.get("epoch") is not None:
                epochs[sid] = float(e["epoch"])
        return cls(
            origin_sensor=d["origin_sensor"],
            R_world=np.asarray(d["R_world"], dtype=float),
            t0=float(d["t0"]),
            transforms=transforms,
            epochs=epochs,
            origin_in_field=np.asarray(d.get("origin_in_field", [0.0, 0.0, 0.0]), dtype=float),
        )


def anchor_wcs(
    states: Mapping[str, PoseState],
    refs: Mapping[str, NorthReference],
    field_model: MagneticFieldModel | None = None,
    origin_sensor: str | None = None,
    origin_in_field: ArrayLike = (0.0, 0.0, 0.0),
    require_displacement: bool = True,
    epoch_window_s: float = EPOCH_WINDOW_S,
) -> tuple[WcsAnchor, dict[str, RelativeTransform]]:
    """Fix the WCS at the origin sensor and assign every other sensor its transform.

    With ``require_displacement=False`` an unobservable displacement (no
    model, uniform field) degrades to heading-only alignment: the rotation
    is kept, ``D_1n`` is zero and ``displacement_observed`` is ``False``.
    """
    ids = list(states)
    if not ids:
        raise IncompleteInitializationError("no sensors to anchor")
    missing = [sid for sid in ids if sid not in refs]
    if missing:
        raise IncompleteInitializationError(f"missing north reference for sensor(s): {', '.join(map(str, missing))}")
    origin = ids[0] if origin_sensor is None else origin_sensor
    if origin not in refs:
        raise IncompleteInitializationError(f"origin sensor {origin!r} has no north reference")
    epochs = {sid: refs[sid].t_init for sid in ids}
    spread = max(epochs.values()) - min(epochs.values())
    if spread > epoch_window_s:
        raise IncompleteInitializationError(
            f"sensor initialisations span {spread:.2f} s, more than the {epoch_window_s:g} s epoch window"
        )
    ref1 = refs[origin]
    transforms: dict[str, RelativeTransform] = {origin: RelativeTransform()}
    for sid in ids:
        if sid == origin:
            continue
        try:
            T = relative_displacement(ref1, refs[sid], field_model=field_model, origin=origin_in_field)
        except UnobservableDisplacementError:
            if require_displacement:
                raise
            T = RelativeTransform(D_1n=np.zeros(3), R_1n=ref1.R_toNp.T @ refs[sid].R_toNp, displacement_observed=False)
        transforms[sid] = T
    anchor = WcsAnchor(
        origin_sensor=origin,
        R_world=ref1.R_toNp.copy(),
        t0=ref1.t_init,
        transforms=transforms,
        epochs=epochs,
        origin_in_field=vec3(origin_in_field),
    )
    return anchor, transforms


# --- transfer functions and locomotion -------------------------------------


@dataclass(frozen=True)
class TransferFunctions:
    """Scalar field-to-distance ratio ``F_s`` [m/uT] and initial rotation offset ``F_phi``.

    ``B_ref`` (navigation axes) and ``s_ref`` are the field and position at
    the end of the initialisation window; the magnetic position channel is
    ``s_ref + F_s (B_nav - B_ref)``.
    """

    F_s: float
    F_phi: NDArray[np.float64] = field(default_factory=lambda: np.eye(3))
    B_ref: NDArray[np.float64] | None = None
    s_ref: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not np.isfinite(self.F_s):
            raise ContractViolation("F_s must be finite")
        if not is_rotation(self.F_phi, tol=1e-6):
            raise ContractViolation("F_phi is not a rotation")

    def magnetic_position(self, B_nav: ArrayLike) -> NDArray[np.float64]:
        if self.B_ref is None:
            raise ContractViolation("transfer functions have no reference field")
        return self.s_ref + self.F_s * (vec3(B_nav) - self.B_ref)


def transfer_functions(
    init_window: Sequence[ImuSample],
    displacement: ArrayLike | float,
    rotation: ArrayLike | None = None,
    average: int = 1,
    B_ref: ArrayLike | None = None,
    s_ref: ArrayLike = (0.0, 0.0, 0.0),
) -> TransferFunctions:
    """Estimate ``F_s = |Δs| / |ΔB|`` from a window with known motion.

    ``displacement`` is the distance (or displacement vector) travelled over
    the window, ``rotation`` maps the end pose's body axes into the start
    pose's (``F_phi``). The field change is ``rotation @ B_end - B_start``,
    each end averaged over ``average`` samples.

    Raises
    ------
    ContractViolation
        The window has zero duration.
    UnobservableDisplacementError
        The field does not change over the window.
    """
    if len(init_window) < 2 or not init_window[-1].t > init_window[0].t:
        raise ContractViolation("initialisation window must span positive time")
    F_phi = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    k = max(1, min(int(average), len(init_window) // 2))
    B_start = np.mean([s.mag for s in init_window[:k]], axis=0)
    B_end = np.mean([s.mag for s in init_window[-k:]], axis=0)
    dB = F_phi @ B_end - B_start
    ds = float(np.linalg.norm(displacement)) if np.ndim(displacement) else abs(float(displacement))
    nB = float(np.linalg.norm(dB))
    if nB < 1e-12:
        raise UnobservableDisplacementError("field did not change over the initialisation window (∇B = 0)")
    return TransferFunctions(
        F_s=ds / nB,
        F_phi=F_phi,
        B_ref=None if B_ref is None else vec3(B_ref),
        s_ref=vec3(s_ref),
    )


def seed_attitude(state: PoseState, tf: TransferFunctions) -> PoseState:
    """Apply the rotation offset ``F_phi`` to a starting attitude."""
    return replace(state, q=quat_multiply(quat_from_rotation(tf.F_phi), state.q))


LOCOMOTION_MODES = ("inertial", "magnetic", "fused")


def locomotion_update(
    state: PoseState,
    tf: TransferFunctions | None,
    sample: ImuSample,
    dt: float,
    env: EnvironmentConstants = EnvironmentConstants(earth_rate_magnitude=0.0),
    mode: str = "fused",
    q_acc: float = 0.05,
    r_mag_pos: float | None = None,
    gate: float | None = None,
) -> PoseState:
    """One locomotion step: gyro-integrated attitude, fused position.

    ``mode`` selects the position channel:

    * ``"inertial"``: double integration of the corrected acceleration.
    * ``"magnetic"``: ``s_ref + F_s (R B_body - B_ref)``.
    * ``"fused"``: Kalman prediction with the acceleration, corrected by the
      magnetic position with standard deviation ``r_mag_pos`` (default
      ``F_s`` times 0.5 uT). The filter covariance lives in the velocity and
      position blocks of ``state.cov``. With ``gate`` set, a magnetic fix
      whose normalised innovation squared exceeds it is discarded (the
      scalar ``F_s`` model only holds where the gradient is uniform).
    """
    if tf is None or tf.B_ref is None:
        raise ContractViolation("locomotion needs initialised transfer functions (F_s, F_phi, B_ref)")
    if mode not in LOCOMOTION_MODES:
        raise ContractViolation(f"mode must be one of {LOCOMOTION_MODES}, got {mode!r}")
    att = propagate_attitude(state, sample.gyro, dt)
    R = quat_to_rotation(att.q)
    a = R @ sample.acc + env.gravity_nav
    if mode == "magnetic":
        s = tf.magnetic_position(R @ sample.mag)
        return replace(att, s=s, v=(s - state.s) / dt)
    kf = KalmanState(
        x=np.concatenate([state.s, state.v]),
        P=state.cov[3:9, 3:9][np.ix_([3, 4, 5, 0, 1, 2], [3, 4, 5, 0, 1, 2])],
        q_acc=q_acc,
    )
    kf = kalman_predict(kf, a, dt)
    if mode == "fused":
        sigma = tf.F_s * 0.5 if r_mag_pos is None else r_mag_pos
        try:
            upd = kalman_update(kf, tf.magnetic_position(R @ sample.mag), np.eye(3) * sigma**2)
        except NumericalDegenerateError:
            upd = None
        if upd is not None and (gate is None or upd.nis() <= gate):
            kf = upd
    cov = state.cov.copy()
    order = [3, 4, 5, 0, 1, 2]
    cov[3:9, 3:9] = kf.P[np.ix_(order, order)]
    return replace(att, s=kf.position.copy(), v=kf.velocity.copy(), cov=cov)
