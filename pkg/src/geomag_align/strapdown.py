"""Strapdown dead reckoning in an earth-fixed local tangent frame.

The navigation frame has z up and gravity ``(0, 0, -9.81)``; a level,
resting accelerometer therefore reads ``+9.81`` on its z axis. Attitude is
advanced with a first-order (Taylor) quaternion step and renormalised;
velocity and position use trapezoidal integration with the earth-rate
Coriolis correction ``-2 ω⊕ × v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ContractViolation, GeomagError
from .geometry import IDENTITY_QUAT, cross, quat_to_rotation, skew, vec3

GRAVITY = 9.81
EARTH_RATE = 7.29e-5
MAX_DT = 0.1


@dataclass(frozen=True)
class ImuSample:
    """One timestamped reading: specific force [m/s²], rate [rad/s], field [uT], all in body axes."""

    t: float
    acc: NDArray[np.float64]
    gyro: NDArray[np.float64]
    mag: NDArray[np.float64]
    sensor_id: str = "0"

    def __post_init__(self):
        if not np.isfinite(self.t):
            raise ContractViolation("sample timestamp must be finite")
        for name in ("acc", "gyro", "mag"):
            object.__setattr__(self, name, vec3(getattr(self, name)))


@dataclass(frozen=True)
class SensorNoiseModel:
    """White Gaussian noise (per-sample standard deviations) and constant biases."""

    gyro_sigma: float = 0.0
    gyro_bias: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    acc_sigma: float = 0.0
    acc_bias: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    mag_sigma: float = 0.0

    def __post_init__(self):
        if min(self.gyro_sigma, self.acc_sigma, self.mag_sigma) < 0:
            raise ContractViolation("noise standard deviations must be non-negative")
        object.__setattr__(self, "gyro_bias", vec3(self.gyro_bias))
        object.__setattr__(self, "acc_bias", vec3(self.acc_bias))


@dataclass(frozen=True)
class EnvironmentConstants:
    """Gravity and earth rotation expressed in the navigation frame.

    With the default frame (x north, z up) the earth rate is
    ``|ω⊕| (cos φ, 0, sin φ)`` at latitude ``φ``. ``nav_rotation`` re-expresses
    both vectors in another frame, e.g. a sensor's initial body axes.
    """

    gravity: NDArray[np.float64] = field(default_factory=lambda: np.array([0.0, 0.0, -GRAVITY]))
    earth_rate_magnitude: float = EARTH_RATE
    latitude: float = 0.0
    nav_rotation: NDArray[np.float64] = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "gravity", vec3(self.gravity))
        object.__setattr__(self, "nav_rotation", np.asarray(self.nav_rotation, dtype=float))

    @property
    def earth_rate(self) -> NDArray[np.float64]:
        w = self.earth_rate_magnitude * np.array([np.cos(self.latitude), 0.0, np.sin(self.latitude)])
        return self.nav_rotation @ w

    @property
    def gravity_nav(self) -> NDArray[np.float64]:
        return self.nav_rotation @ self.gravity

    def expressed_in(self, R_frame_from_world: ArrayLike) -> "EnvironmentConstants":
        """Same physical environment with vectors expressed in another frame."""
        return replace(self, nav_rotation=np.asarray(R_frame_from_world, dtype=float) @ self.nav_rotation)


@dataclass(frozen=True)
class PoseState:
    """Attitude (body to navigation), velocity and position, with a 9x9 covariance."""

    t: float
    q: NDArray[np.float64] = field(default_factory=lambda: IDENTITY_QUAT.copy())
    v: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    s: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    cov: NDArray[np.float64] = field(default_factory=lambda: np.zeros((9, 9)))

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ContractViolation("PoseState.q must be a unit quaternion")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", vec3(self.v))
        object.__setattr__(self, "s", vec3(self.s))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float).reshape(9, 9))

    @property
    def R(self) -> NDArray[np.float64]:
        return quat_to_rotation(self.q)

    def _evolve(self, **changes) -> "PoseState":
        # Internal copy without re-validation; callers pass already-valid arrays.
        new = object.__new__(PoseState)
        for name in ("t", "q", "v", "s", "cov"):
            object.__setattr__(new, name, changes.get(name, getattr(self, name)))
        return new


def propagate_attitude(state: PoseState, gyro: ArrayLike, dt: float) -> PoseState:
    """Advance the attitude by one step of ``q̇ = ½ q ⊗ [0, ω]``.

    Uses the first-order update ``q + ½ q ⊗ [0, ω] dt`` followed by
    renormalisation, so the angle error per step is ``O((|ω| dt)³)``.
    """
    if not dt > 0:
        raise ContractViolation(f"dt must be positive, got {dt!r}")
    if dt > MAX_DT:
        raise ContractViolation(f"dt = {dt:g} s exceeds the {MAX_DT:g} s integration limit")
    wx, wy, wz = (float(c) for c in gyro) if len(gyro) == 3 else vec3(gyro)
    if not (math.isfinite(wx) and math.isfinite(wy) and math.isfinite(wz)):
        raise ContractViolation("gyro has non-finite components")
    qw, qx, qy, qz = state.q.tolist()
    h = 0.5 * dt
    q = np.array(
        [
            qw - h * (qx * wx + qy * wy + qz * wz),
            qx + h * (qw * wx + qy * wz - qz * wy),
            qy + h * (qw * wy - qx * wz + qz * wx),
            qz + h * (qw * wz + qx * wy - qy * wx),
        ]
    )
    q /= math.sqrt(q @ q)
    return state._evolve(t=state.t + dt, q=q)


def coriolis_term(omega: ArrayLike, v: ArrayLike) -> NDArray[np.float64]:
    """Transport term ``ω × v`` for velocity expressed in a frame rotating at ``ω``."""
    return cross(omega, v)


def centrifugal_term(omega: ArrayLike, r: ArrayLike) -> NDArray[np.float64]:
    """``-ω × (ω × r)``; absorbed into local gravity for an earth-fixed frame."""
    return -cross(omega, cross(omega, r))


def correct_acceleration(
    state: PoseState,
    acc_body: ArrayLike,
    env: EnvironmentConstants,
    omega: ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Kinematic acceleration in the navigation frame.

    ``a = R f_b + g + ω × v``: specific force rotated by the current
    attitude, gravity added back, and the transport term for a velocity
    expressed in a frame turning at ``omega`` (navigation axes). The
    earth-fixed navigation frame passes ``omega=None``; earth rotation enters
    through the Coriolis velocity correction instead.
    """
    a = state.R @ vec3(acc_body) + env.gravity_nav
    if omega is not None:
        a = a + coriolis_term(vec3(omega), state.v)
    return a


def _check_window(samples: Sequence[ImuSample]) -> NDArray[np.float64]:
    t = np.array([s.t for s in samples], dtype=float)
    dts = np.diff(t)
    if np.any(dts <= 0):
        k = int(np.argmax(dts <= 0))
        raise ContractViolation(f"samples not strictly time-ordered at t = {t[k + 1]:.6f} s")
    if np.any(dts > MAX_DT):
        k = int(np.argmax(dts > MAX_DT))
        raise ContractViolation(f"gap of {dts[k]:.3f} s at t = {t[k]:.6f} s exceeds {MAX_DT:g} s")
    return t


def propagate_velocity_position(
    state: PoseState,
    samples: Sequence[ImuSample],
    env: EnvironmentConstants,
    attitudes: Sequence[ArrayLike] | None = None,
) -> PoseState:
    """Integrate velocity and position across a window of samples.

    ``state`` must be valid at ``samples[0].t``. ``attitudes`` gives the
    body-to-navigation quaternion at each sample; when omitted the state's
    attitude is held over the window. For each interval::

        Δv_I   = ½ (a_k + a_k+1) Δt
        Δv_cor = Δv_I - 2 ω⊕ × v_k Δt
        v_k+1  = v_k + Δv_cor
        s_k+1  = s_k + v_k Δt + ½ Δt Δv_cor
    """
    if len(samples) == 0:
        raise ContractViolation("empty sample window")
    t = _check_window(samples)
    if attitudes is None:
        attitudes = [state.q] * len(samples)
    if len(attitudes) != len(samples):
        raise ContractViolation("attitudes must align with samples")
    g = env.gravity_nav
    w_e2 = 2.0 * env.earth_rate
    Rs = [quat_to_rotation(q) for q in attitudes]
    a_prev = Rs[0] @ samples[0].acc + g
    v = state.v.copy()
    s = state.s.copy()
    for k in range(1, len(samples)):
        dt = t[k] - t[k - 1]
        a_next = Rs[k] @ samples[k].acc + g
        dv_i = 0.5 * (a_prev + a_next) * dt
        dv_cor = dv_i - cross(w_e2, v) * dt
        s = s + v * dt + 0.5 * dt * dv_cor
        v = v + dv_cor
        a_prev = a_next
    return state._evolve(t=float(t[-1]), q=np.asarray(attitudes[-1], dtype=float), v=v, s=s)


def _error_transition(f_nav: NDArray[np.float64], dt: float) -> NDArray[np.float64]:
    F = np.eye(9)
    F[3:6, 0:3] = -skew(f_nav) * dt
    F[6:9, 3:6] = np.eye(3) * dt
    return F


def dead_reckon(
    trace: Sequence[ImuSample],
    initial: PoseState,
    env: EnvironmentConstants = EnvironmentConstants(),
    noise: SensorNoiseModel | None = None,
) -> list[PoseState]:
    """Propagate ``initial`` (valid at ``trace[0].t``) through the whole trace.

    Each step advances the attitude with the mean gyro rate of the interval
    (earth rate removed), then velocity and position with
    :func:`propagate_velocity_position`. Returns one state per sample. With a
    ``noise`` model the 9x9 error covariance (attitude, velocity, position)
    is propagated as well.
    """
    if len(trace) == 0:
        raise ContractViolation("trace is empty")
    _check_window(trace)
    w_earth = env.earth_rate
    out = [replace(initial, t=float(trace[0].t))]
    state = out[0]
    for k in range(1, len(trace)):
        prev, cur = trace[k - 1], trace[k]
        dt = cur.t - prev.t
        try:
            w_body = 0.5 * (prev.gyro + cur.gyro) - state.R.T @ w_earth
            q_new = propagate_attitude(state, w_body, dt).q
            nxt = propagate_velocity_position(state, (prev, cur), env, attitudes=(state.q, q_new))
        except GeomagError as exc:
            raise type(exc)(f"at t = {cur.t:.6f} s: {exc}") from exc
        if noise is not None:
            f_nav = quat_to_rotation(q_new) @ cur.acc
            F = _error_transition(f_nav, dt)
            Q = np.zeros((9, 9))
            Q[0:3, 0:3] = np.eye(3) * (noise.gyro_sigma * dt) ** 2
            Q[3:6, 3:6] = np.eye(3) * (noise.acc_sigma * dt) ** 2
            P = F @ state.cov @ F.T + Q
            nxt = nxt._evolve(cov=0.5 * (P + P.T))
        state = nxt
        out.append(state)
    return out
