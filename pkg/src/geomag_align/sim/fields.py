"""Analytic magnetic environments with exact gradients.

Positions are metres in a local tangent frame, fields are microtesla, and
``gradient(p)[i, j] = ∂B_i/∂x_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import SingularPointError
from ..geometry import vec3

# mu0 / 4pi in T·m/A, expressed in uT·m/A.
MU0_4PI_UT = 1e-7 * 1e6
SINGULAR_RADIUS = 1e-9


class MagneticFieldModel:
    """Base class: subclasses provide ``field`` and ``gradient`` at points (N, 3) or (3,)."""

    epoch: float = 0.0

    def field(self, p: ArrayLike) -> NDArray[np.float64]:
        raise NotImplementedError

    def gradient(self, p: ArrayLike) -> NDArray[np.float64]:
        raise NotImplementedError

    def rotated(self, R: ArrayLike) -> "MagneticFieldModel":
        """The same environment after rotating space by ``R`` about the origin."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def field_at(model: MagneticFieldModel, p: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Field [uT] and 3x3 gradient [uT/m] at a single point."""
    p = vec3(p)
    return model.field(p), model.gradient(p)


@dataclass(frozen=True)
class UniformField(MagneticFieldModel):
    B0: NDArray[np.float64]
    epoch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "B0", vec3(self.B0))

    def field(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(self.B0, p.shape).copy()

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        return np.zeros(p.shape[:-1] + (3, 3))

    def rotated(self, R):
        return UniformField(np.asarray(R) @ self.B0, self.epoch)

    def to_dict(self):
        return {"type": "uniform", "B0": self.B0.tolist()}


@dataclass(frozen=True)
class LinearGradientField(MagneticFieldModel):
    """``B(p) = B0 + G (p - origin)``.

    A source-free field needs ``G`` symmetric and traceless; this is not
    enforced so test scenes can use idealised gradients.
    """

    B0: NDArray[np.float64]
    G: NDArray[np.float64]
    origin: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    epoch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "B0", vec3(self.B0))
        object.__setattr__(self, "G", np.asarray(self.G, dtype=float).reshape(3, 3))
        object.__setattr__(self, "origin", vec3(self.origin))

    def field(self, p):
        p = np.asarray(p, dtype=float)
        return self.B0 + (p - self.origin) @ self.G.T

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(self.G, p.shape[:-1] + (3, 3)).copy()

    def rotated(self, R):
        R = np.asarray(R, dtype=float)
        return LinearGradientField(R @ self.B0, R @ self.G @ R.T, R @ self.origin, self.epoch)

    def to_dict(self):
        return {"type": "linear_gradient", "B0": self.B0.tolist(), "G": self.G.tolist(), "origin": self.origin.tolist()}


@dataclass(frozen=True)
class DipoleField(MagneticFieldModel):
    """Point dipole of ``moment`` [A·m²] located at ``location`` [m]."""

    location: NDArray[np.float64]
    moment: NDArray[np.float64]
    epoch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "location", vec3(self.location))
        object.__setattr__(self, "moment", vec3(self.moment))

    def _offsets(self, p):
        r = np.asarray(p, dtype=float) - self.location
        d = np.linalg.norm(r, axis=-1)
        if np.any(d < SINGULAR_RADIUS):
            raise SingularPointError(f"field evaluated at the dipole location {self.location.tolist()}")
        return r, d

    def field(self, p):
        r, d = self._offsets(p)
        m = self.moment
        mr = r @ m
        d = d[..., None]
        return MU0_4PI_UT * (3.0 * mr[..., None] * r / d**5 - m / d**3)

    def gradient(self, p):
        r, d = self._offsets(p)
        m = self.moment
        mr = (r @ m)[..., None, None]
        d = d[..., None, None]
        I = np.eye(3)
        rr = r[..., :, None] * r[..., None, :]
        mr_outer = m[:, None] * r[..., None, :] + r[..., :, None] * m[None, :]
        return MU0_4PI_UT * (3.0 * (mr_outer + mr * I) / d**5 - 15.0 * mr * rr / d**7)

    def rotated(self, R):
        R = np.asarray(R, dtype=float)
        return DipoleField(R @ self.location, R @ self.moment, self.epoch)

    def to_dict(self):
        return {"type": "dipole", "location": self.location.tolist(), "moment": self.moment.tolist()}


@dataclass(frozen=True)
class CompositeField(MagneticFieldModel):
    """Uniform background plus any number of dipole anomalies."""

    B0: NDArray[np.float64]
    anomalies: tuple[DipoleField, ...] = ()
    epoch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "B0", vec3(self.B0))
        object.__setattr__(self, "anomalies", tuple(self.anomalies))

    def field(self, p):
        p = np.asarray(p, dtype=float)
        B = np.broadcast_to(self.B0, p.shape).copy()
        for a in self.anomalies:
            B = B + a.field(p)
        return B

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        G = np.zeros(p.shape[:-1] + (3, 3))
        for a in self.anomalies:
            G = G + a.gradient(p)
        return G

    def rotated(self, R):
        R = np.asarray(R, dtype=float)
        return CompositeField(R @ self.B0, tuple(a.rotated(R) for a in self.anomalies), self.epoch)

    def to_dict(self):
        return {
            "type": "uniform_plus_anomalies",
            "B0": self.B0.tolist(),
            "anomalies": [{"location": a.location.tolist(), "moment": a.moment.tolist()} for a in self.anomalies],
        }


def earth_field(magnitude: float = 50.0, dip: float = np.radians(60.0), declination: float = 0.0) -> NDArray[np.float64]:
    """Background field vector in an x-north, y-west, z-up frame.

    ``dip`` is positive downwards (northern hemisphere). ``declination`` turns
    the horizontal component east of the x axis.
    """
    h = magnitude * np.cos(dip)
    return np.array([h * np.cos(declination), -h * np.sin(declination), -magnitude * np.sin(dip)])


def field_from_dict(d: dict) -> MagneticFieldModel:
    kind = d.get("type")
    if kind == "uniform":
        return UniformField(d["B0"])
    if kind == "linear_gradient":
        return LinearGradientField(d["B0"], d["G"], d.get("origin", [0.0, 0.0, 0.0]))
    if kind == "dipole":
        return DipoleField(d["location"], d["moment"])
    if kind == "uniform_plus_anomalies":
        return CompositeField(d["B0"], tuple(DipoleField(a["location"], a["moment"]) for a in d.get("anomalies", [])))
    raise ValueError(f"unknown field model type {kind!r}")


