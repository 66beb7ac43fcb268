"""Vectors, quaternions, rotations and frame bookkeeping.

Conventions
-----------
* Vectors are ``(3,)`` float arrays.
* Quaternions are ``(4,)`` arrays stored scalar first, ``[w, x, y, z]``,
  composed with the Hamilton product.
* ``quat_to_rotation(q)`` returns the matrix ``R`` with ``v_dst = R @ v_src``;
  for a body attitude quaternion this maps body vectors into the world.
* Euler angles are intrinsic z-y-x (yaw, pitch, roll):
  ``R = R_z(yaw) @ R_y(pitch) @ R_x(roll)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ContractViolation, FrameMismatchError

UNIT_TOL = 1e-9
GIMBAL_TOL = 1e-6

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def vec3(v: ArrayLike) -> NDArray[np.float64]:
    """Coerce to a finite (3,) float array."""
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ContractViolation(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation("vector has non-finite components")
    return a


def cross(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    """Cross product of two 3-vectors; cheaper than ``np.cross`` for single vectors."""
    a0, a1, a2 = a
    b0, b1, b2 = b
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def skew(v: ArrayLike) -> NDArray[np.float64]:
    """Cross-product matrix: ``skew(a) @ b == np.cross(a, b)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


# --- quaternions -------------------------------------------------------------


def quat_normalize(q: ArrayLike) -> NDArray[np.float64]:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ContractViolation("cannot normalize a zero or non-finite quaternion")
    return q / n


def _check_unit_quat(q: NDArray[np.float64]) -> None:
    if q.shape != (4,):
        raise ContractViolation(f"expected a quaternion of shape (4,), got {q.shape}")
    if abs(np.linalg.norm(q) - 1.0) > UNIT_TOL:
        raise ContractViolation(f"quaternion is not unit norm (|q| = {np.linalg.norm(q)!r})")


def quat_multiply(p: ArrayLike, q: ArrayLike) -> NDArray[np.float64]:
    """Hamilton product ``p ⊗ q``."""
    pw, px, py, pz = np.asarray(p, dtype=float)
    qw, qx, qy, qz = np.asarray(q, dtype=float)
    return np.array(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ]
    )


def quat_conjugate(q: ArrayLike) -> NDArray[np.float64]:
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis: ArrayLike, angle: float) -> NDArray[np.float64]:
    """Rotation of ``angle`` radians about the unit vector ``axis``."""
    axis = vec3(axis)
    if abs(np.linalg.norm(axis) - 1.0) > UNIT_TOL:
        raise ContractViolation(f"rotation axis must be unit length, |axis| = {np.linalg.norm(axis)!r}")
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], axis * np.sin(half)))


def quat_from_rotvec(rv: ArrayLike) -> NDArray[np.float64]:
    """Exponential map of a rotation vector (axis times angle)."""
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv)
    if angle < 1e-12:
        q = np.concatenate(([1.0], 0.5 * rv))
        return q / np.linalg.norm(q)
    return np.concatenate(([np.cos(0.5 * angle)], rv / angle * np.sin(0.5 * angle)))


def quat_to_rotation(q: ArrayLike) -> NDArray[np.float64]:
    q = np.asarray(q, dtype=float)
    _check_unit_quat(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_rotation(R: ArrayLike) -> NDArray[np.float64]:
    """Inverse of :func:`quat_to_rotation`; returns the ``w >= 0`` representative."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    # Shepperd's method: branch on the largest diagonal term for stability.
    if tr > max(R[0, 0], R[1, 1], R[2, 2]):
        s = 2.0 * np.sqrt(1.0 + tr)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] >= R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q = q / np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def quat_rotate(q: ArrayLike, v: ArrayLike) -> NDArray[np.float64]:
    """Rotate ``v`` by ``q`` via the conjugation ``q ⊗ v ⊗ q⁻¹``."""
    qv = np.concatenate(([0.0], np.asarray(v, dtype=float)))
    return quat_multiply(quat_multiply(q, qv), quat_conjugate(q))[1:]


# --- rotation matrices -------------------------------------------------------


def rot_x(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(R: ArrayLike, tol: float = UNIT_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=tol) and abs(np.linalg.det(R) - 1.0) <= tol)


def rotation_angle_between(R1: ArrayLike, R2: ArrayLike) -> float:
    """Geodesic distance (radians) between two rotations: the angle of ``R1ᵀ R2``."""
    M = np.asarray(R1, dtype=float).T @ np.asarray(R2, dtype=float)
    # The skew part is better conditioned than the trace for small angles.
    s = 0.5 * np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    c = 0.5 * (np.trace(M) - 1.0)
    return float(np.arctan2(s, c))


def orthonormalize(R: ArrayLike) -> NDArray[np.float64]:
    """Nearest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True)
class EulerAngles:
    """Intrinsic z-y-x angles in radians.

    ``degenerate`` is set by :func:`rotation_to_euler` at gimbal lock, where
    yaw is fixed to zero and the whole heading is folded into roll.
    """

    roll: float
    pitch: float
    yaw: float
    degenerate: bool = False

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.roll, self.pitch, self.yaw])


def euler_to_rotation(e: EulerAngles) -> NDArray[np.float64]:
    angles = np.array([e.roll, e.pitch, e.yaw], dtype=float)
    if not np.all(np.isfinite(angles)):
        raise ContractViolation("Euler angles must be finite")
    return rot_z(e.yaw) @ rot_y(e.pitch) @ rot_x(e.roll)


def _wrap(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    a = float(np.arctan2(np.sin(angle), np.cos(angle)))
    return np.pi if a == -np.pi else a


def rotation_to_euler(R: ArrayLike) -> EulerAngles:
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol=1e-6):
        raise ContractViolation("matrix is not a rotation")
    pitch = float(np.arcsin(np.clip(-R[2, 0], -1.0, 1.0)))
    if abs(abs(pitch) - np.pi / 2) < GIMBAL_TOL:
        pitch = float(np.copysign(np.pi / 2, pitch))
        roll = _wrap(np.arctan2(-R[1, 2], R[1, 1]))
        return EulerAngles(roll=roll, pitch=pitch, yaw=0.0, degenerate=True)
    roll = _wrap(np.arctan2(R[2, 1], R[2, 2]))
    yaw = _wrap(np.arctan2(R[1, 0], R[0, 0]))
    return EulerAngles(roll=roll, pitch=pitch, yaw=yaw)


def dcm_small_angle(e: EulerAngles) -> NDArray[np.float64]:
    """First-order direction cosine matrix for small roll/pitch/yaw.

    Rows are ``[1, yaw, -pitch]``, ``[-yaw, 1, roll]``, ``[pitch, -roll, 1]``.
    Not orthonormal; the error against the exact transform grows with the
    square of the angles.
    """
    r, p, y = e.roll, e.pitch, e.yaw
    return np.array([[1.0, y, -p], [-y, 1.0, r], [p, -r, 1.0]])


# --- frames ------------------------------------------------------------------


class FrameTag(enum.Enum):
    BODY = "body"
    CAMERA = "camera"
    INERTIAL = "inertial"
    WORLD = "world"


@dataclass(frozen=True)
class FramedTransform:
    """Rigid transform ``x_dst = R @ x_src + t`` carrying its frame tags."""

    src: FrameTag
    dst: FrameTag
    R: NDArray[np.float64] = field(default_factory=lambda: np.eye(3))
    t: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not is_rotation(self.R, tol=1e-6):
            raise ContractViolation("FramedTransform.R is not a rotation")
        object.__setattr__(self, "t", vec3(self.t))

    def __matmul__(self, other: "FramedTransform") -> "FramedTransform":
        """``self @ other`` applies ``other`` first."""
        if other.dst is not self.src:
            raise FrameMismatchError(
                f"cannot compose {other.src.value}->{other.dst.value} with {self.src.value}->{self.dst.value}"
            )
        return FramedTransform(other.src, self.dst, self.R @ other.R, self.R @ other.t + self.t)

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(points, dtype=float) @ self.R.T + self.t

    def inverse(self) -> "FramedTransform":
        return FramedTransform(self.dst, self.src, self.R.T, -self.R.T @ self.t)
