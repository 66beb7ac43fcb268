"""Analytic ground-truth trajectories.

Every trajectory evaluates position, velocity, acceleration (navigation
frame), body-to-navigation attitude and body angular rate in closed form at
any array of times. ``hold_s`` prepends a motionless dwell; it is only
seamless for trajectories that start at rest. Line, circle and tumble
continue analytically past their nominal duration; stairs and waypoints
come to rest at their last point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import ContractViolation
from ..geometry import euler_to_rotation, EulerAngles, is_rotation, vec3


class Kinematics(NamedTuple):
    t: NDArray[np.float64]
    position: NDArray[np.float64]  # (N, 3) m
    velocity: NDArray[np.float64]  # (N, 3) m/s
    acceleration: NDArray[np.float64]  # (N, 3) m/s²
    rotation: NDArray[np.float64]  # (N, 3, 3) body -> nav
    omega_body: NDArray[np.float64]  # (N, 3) rad/s


def _rotation(att) -> NDArray[np.float64]:
    if att is None:
        return np.eye(3)
    R = np.asarray(att, dtype=float)
    if R.shape == (3,):
        R = euler_to_rotation(EulerAngles(*R))
    if not is_rotation(R, tol=1e-6):
        raise ContractViolation("attitude must be a rotation matrix or (roll, pitch, yaw)")
    return R


@dataclass(frozen=True, kw_only=True)
class TrajectorySpec:
    sample_rate_hz: float = 100.0
    hold_s: float = 0.0

    @property
    def motion_duration(self) -> float:
        raise NotImplementedError

    @property
    def duration(self) -> float:
        return self.hold_s + self.motion_duration

    def _motion(self, tau: NDArray[np.float64]) -> Kinematics:
        raise NotImplementedError

    def validate(self) -> None:
        if not self.sample_rate_hz >= 10.0:
            raise ContractViolation(f"sample_rate_hz must be >= 10, got {self.sample_rate_hz!r}")
        if self.hold_s < 0:
            raise ContractViolation("hold_s must be non-negative")
        if not self.motion_duration > 0:
            raise ContractViolation("trajectory duration must be positive")

    def times(self) -> NDArray[np.float64]:
        n = int(round(self.duration * self.sample_rate_hz)) + 1
        return np.arange(n) / self.sample_rate_hz

    def evaluate(self, t: ArrayLike) -> Kinematics:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tau = np.maximum(t - self.hold_s, 0.0)
        k = self._motion(tau)
        moving = (t >= self.hold_s)[:, None]
        return Kinematics(
            t=t,
            position=k.position,
            velocity=np.where(moving, k.velocity, 0.0),
            acceleration=np.where(moving, k.acceleration, 0.0),
            rotation=k.rotation,
            omega_body=np.where(moving, k.omega_body, 0.0),
        )


def _const_rotation(R, n):
    return np.broadcast_to(R, (n, 3, 3)).copy()


@dataclass(frozen=True, kw_only=True)
class Stationary(TrajectorySpec):
    position: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    attitude: object = None
    length_s: float = 10.0

    @property
    def motion_duration(self):
        return self.length_s

    def _motion(self, tau):
        n = len(tau)
        z = np.zeros((n, 3))
        return Kinematics(tau, np.tile(vec3(self.position), (n, 1)), z, z.copy(), _const_rotation(_rotation(self.attitude), n), z.copy())


@dataclass(frozen=True, kw_only=True)
class Line(TrajectorySpec):
    start: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    velocity: NDArray[np.float64] = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    length_s: float = 10.0
    attitude: object = None

    @property
    def motion_duration(self):
        return self.length_s

    def _motion(self, tau):
        n = len(tau)
        v = vec3(self.velocity)
        z = np.zeros((n, 3))
        return Kinematics(
            tau, vec3(self.start) + tau[:, None] * v, np.tile(v, (n, 1)), z, _const_rotation(_rotation(self.attitude), n), z.copy()
        )


@dataclass(frozen=True, kw_only=True)
class Circle(TrajectorySpec):
    """Constant-speed circle with the body x axis along the direction of travel.

    ``ramp_s`` eases the angular rate in from zero with a half-cosine so the
    motion can start from rest.
    """

    center: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    radius: float = 2.0
    speed: float = 0.5
    length_s: float | None = None
    normal: NDArray[np.float64] = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    ramp_s: float = 0.0
    phase: float = 0.0

    @property
    def lap_time(self) -> float:
        return 2 * np.pi * self.radius / self.speed

    @property
    def motion_duration(self):
        return self.length_s if self.length_s is not None else self.ramp_s + self.lap_time

    def _basis(self):
        n = vec3(self.normal)
        n = n / np.linalg.norm(n)
        helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = helper - (helper @ n) * n
        e1 /= np.linalg.norm(e1)
        return e1, np.cross(n, e1), n

    def angle(self, tau):
        W = self.speed / self.radius
        T = self.ramp_s
        tau = np.asarray(tau, dtype=float)
        if T > 0:
            inramp = tau < T
            x = np.pi * np.minimum(tau, T) / T
            th = np.where(inramp, W * (tau / 2 - T / (2 * np.pi) * np.sin(x)), W * T / 2 + W * (tau - T))
            thd = np.where(inramp, W * (1 - np.cos(x)) / 2, W)
            thdd = np.where(inramp, W * np.pi / (2 * T) * np.sin(x), 0.0)
        else:
            th, thd, thdd = W * tau, np.full_like(tau, W), np.zeros_like(tau)
        return th + self.phase, thd, thdd

    def _motion(self, tau):
        e1, e2, n = self._basis()
        th, thd, thdd = self.angle(tau)
        c, s = np.cos(th)[:, None], np.sin(th)[:, None]
        radial = c * e1 + s * e2
        tangent = -s * e1 + c * e2
        r = self.radius
        pos = vec3(self.center) + r * radial
        vel = r * thd[:, None] * tangent
        acc = r * thdd[:, None] * tangent - r * (thd**2)[:, None] * radial
        left = np.cross(n, tangent)
        R = np.stack([tangent, left, np.broadcast_to(n, tangent.shape)], axis=-1)
        omega = np.zeros((len(tau), 3))
        omega[:, 2] = thd
        return Kinematics(tau, pos, vel, acc, R, omega)


@dataclass(frozen=True, kw_only=True)
class Stairs(TrajectorySpec):
    """Stop-and-go stair climb.

    Each step advances ``step_length`` along ``heading`` and rises
    ``step_height`` following ``f(φ) = φ - sin(2πφ)/(2π)`` over one cadence
    period, so velocity and acceleration vanish at every footfall.
    """

    start: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    step_length: float = 0.3
    step_height: float = 0.17
    cadence: float = 1.5
    count: int = 10
    heading: float = 0.0

    @property
    def motion_duration(self):
        return self.count / self.cadence

    def _motion(self, tau):
        c = self.cadence
        u = np.minimum(tau * c, self.count)
        k = np.floor(u)
        k = np.where(k >= self.count, self.count - 1, k)
        ph = u - k
        two_pi = 2 * np.pi
        f = k + ph - np.sin(two_pi * ph) / two_pi
        fd = c * (1 - np.cos(two_pi * ph))
        fdd = c * c * two_pi * np.sin(two_pi * ph)
        d = np.array([np.cos(self.heading), np.sin(self.heading), 0.0])
        step = self.step_length * d + np.array([0.0, 0.0, self.step_height])
        pos = vec3(self.start) + f[:, None] * step
        vel = fd[:, None] * step
        acc = fdd[:, None] * step
        R = euler_to_rotation(EulerAngles(0.0, 0.0, self.heading))
        return Kinematics(tau, pos, vel, acc, _const_rotation(R, len(tau)), np.zeros((len(tau), 3)))


@dataclass(frozen=True, kw_only=True)
class Waypoints(TrajectorySpec):
    """Minimum-jerk segments between consecutive points, at rest at each point."""

    points: NDArray[np.float64] = field(default_factory=lambda: np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
    segment_s: float = 2.0
    attitude: object = None

    @property
    def motion_duration(self):
        return (len(np.asarray(self.points)) - 1) * self.segment_s

    def _motion(self, tau):
        P = np.asarray(self.points, dtype=float).reshape(-1, 3)
        T = self.segment_s
        nseg = len(P) - 1
        i = np.minimum((tau // T).astype(int), nseg - 1)
        x = np.clip((tau - i * T) / T, 0.0, 1.0)
        D = P[i + 1] - P[i]
        s = 10 * x**3 - 15 * x**4 + 6 * x**5
        sd = (30 * x**2 - 60 * x**3 + 30 * x**4) / T
        sdd = (60 * x - 180 * x**2 + 120 * x**3) / T**2
        n = len(tau)
        return Kinematics(
            tau, P[i] + s[:, None] * D, sd[:, None] * D, sdd[:, None] * D, _const_rotation(_rotation(self.attitude), n), np.zeros((n, 3))
        )


@dataclass(frozen=True, kw_only=True)
class Tumble(TrajectorySpec):
    """Fixed position, attitude ``R_z(a t) R_x(b t)``: a calibration sweep covering all directions."""

    position: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    yaw_rate: float = 0.7
    roll_rate: float = 0.7 * (np.sqrt(5) - 1) / 2
    length_s: float = 60.0

    @property
    def motion_duration(self):
        return self.length_s

    def _motion(self, tau):
        a, b = self.yaw_rate, self.roll_rate
        cz, sz = np.cos(a * tau), np.sin(a * tau)
        cx, sx = np.cos(b * tau), np.sin(b * tau)
        n = len(tau)
        Rz = np.zeros((n, 3, 3))
        Rz[:, 0, 0], Rz[:, 0, 1], Rz[:, 1, 0], Rz[:, 1, 1], Rz[:, 2, 2] = cz, -sz, sz, cz, 1.0
        Rx = np.zeros((n, 3, 3))
        Rx[:, 0, 0], Rx[:, 1, 1], Rx[:, 1, 2], Rx[:, 2, 1], Rx[:, 2, 2] = 1.0, cx, -sx, sx, cx
        R = Rz @ Rx
        # ω_b = R_x(bt)ᵀ (0, 0, a) + (b, 0, 0)
        omega = np.column_stack([np.full(n, b), a * sx, a * cx])
        z = np.zeros((n, 3))
        return Kinematics(tau, np.tile(vec3(self.position), (n, 1)), z, z.copy(), R, omega)


TRAJECTORY_TYPES = {
    "stationary": Stationary,
    "line": Line,
    "circle": Circle,
    "stairs": Stairs,
    "waypoints": Waypoints,
    "tumble": Tumble,
}
