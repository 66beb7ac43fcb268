"""Hard/soft-iron magnetometer calibration.

The correction has the form ``B_c = C @ (B_raw - b_H)`` where ``b_H`` is the
hard-iron offset and ``C`` a symmetric positive-definite soft-iron matrix.
Both are obtained from a rotation sweep by fitting a general quadric to the
raw samples and whitening the resulting ellipsoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ContractViolation, FitDegenerateError, InsufficientDataError

MIN_SWEEP_SAMPLES = 12
COPLANAR_RATIO = 1e-6
# Below this, a magnitude spread is treated as exactly zero (uT).
ZERO_SIGMA = 1e-9


@dataclass(frozen=True)
class MagCalibration:
    """Soft-iron matrix ``C``, hard-iron bias ``b_H`` [uT] and fit diagnostics."""

    C: NDArray[np.float64]
    b_H: NDArray[np.float64]
    field_magnitude: float = float("nan")
    fit_residual: float = 0.0

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        b = np.asarray(self.b_H, dtype=float).reshape(-1)
        if C.shape != (3, 3) or b.shape != (3,):
            raise ContractViolation("MagCalibration needs a 3x3 C and a 3-vector b_H")
        if self.fit_residual < 0:
            raise ContractViolation("fit_residual must be non-negative")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "b_H", b)

    @classmethod
    def identity(cls) -> "MagCalibration":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, raw: ArrayLike) -> NDArray[np.float64]:
        return apply_calibration(self, raw)

    def distort(self, true_field: ArrayLike) -> NDArray[np.float64]:
        """Inverse correction: the raw reading that calibrates to ``true_field``."""
        B = np.asarray(true_field, dtype=float)
        return np.linalg.solve(self.C, B.T).T + self.b_H

    def to_dict(self) -> dict:
        return {
            "C": self.C.tolist(),
            "b_H": self.b_H.tolist(),
            "field_magnitude": float(self.field_magnitude),
            "fit_residual": float(self.fit_residual),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MagCalibration":
        return cls(
            C=np.asarray(d["C"], dtype=float),
            b_H=np.asarray(d["b_H"], dtype=float),
            field_magnitude=float(d.get("field_magnitude", float("nan"))),
            fit_residual=float(d.get("fit_residual", 0.0)),
        )


@dataclass(frozen=True)
class MagSweep:
    """Raw magnetometer samples [uT] with strictly increasing timestamps [s]."""

    t: NDArray[np.float64]
    B: NDArray[np.float64]

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        B = np.asarray(self.B, dtype=float).reshape(-1, 3)
        if len(t) != len(B):
            raise ContractViolation("sweep timestamps and samples differ in length")
        if np.any(np.diff(t) <= 0):
            raise ContractViolation("sweep timestamps must be strictly increasing")
        if not np.all(np.isfinite(B)):
            raise ContractViolation("sweep contains non-finite samples")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "B", B)

    @classmethod
    def from_samples(cls, B: ArrayLike, rate_hz: float = 100.0) -> "MagSweep":
        B = np.asarray(B, dtype=float).reshape(-1, 3)
        return cls(np.arange(len(B)) / rate_hz, B)

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class StabilityReport:
    sigma_nc: float
    sigma_c: float
    epsilon: float
    sample_count: int

    @classmethod
    def from_sigmas(cls, sigma_nc: float, sigma_c: float, sample_count: int = 0) -> "StabilityReport":
        if sigma_nc < 0 or sigma_c < 0:
            raise ContractViolation("standard deviations must be non-negative")
        eps = 0.0 if sigma_nc <= ZERO_SIGMA else 100.0 * (sigma_nc - sigma_c) / sigma_nc
        return cls(float(sigma_nc), float(sigma_c), float(eps), int(sample_count))

    def to_dict(self) -> dict:
        return {
            "sigma_nc": self.sigma_nc,
            "sigma_c": self.sigma_c,
            "epsilon": self.epsilon,
            "sample_count": self.sample_count,
        }


def apply_calibration(cal: MagCalibration, raw: ArrayLike) -> NDArray[np.float64]:
    """``C @ (raw - b_H)``; accepts one vector or an (N, 3) array."""
    raw = np.asarray(raw, dtype=float)
    return (raw - cal.b_H) @ cal.C.T


def _sqrtm_spd(M: NDArray[np.float64]) -> NDArray[np.float64]:
    w, V = np.linalg.eigh(M)
    return (V * np.sqrt(w)) @ V.T


def fit_calibration(sweep: MagSweep | ArrayLike, reference_magnitude: float | None = None) -> MagCalibration:
    """Fit hard- and soft-iron parameters to a rotation sweep.

    Solves the algebraic least-squares problem for the quadric
    ``A x² + B y² + C z² + 2D xy + 2E xz + 2F yz + 2G x + 2H y + 2I z = 1``
    on centred and scaled samples, extracts the ellipsoid centre (hard iron)
    and whitens the shape matrix with its symmetric square root (soft iron).
    A sweep only determines the soft-iron matrix up to a global scale. By
    default corrected samples keep the mean magnitude of the offset-free raw
    samples; pass ``reference_magnitude`` (e.g. the local background field
    strength in uT) to pin the scale to a known value instead.

    Raises
    ------
    InsufficientDataError
        Fewer than 12 samples.
    FitDegenerateError
        Samples are (nearly) coplanar or the quadric is not an ellipsoid.
    """
    B = sweep.B if isinstance(sweep, MagSweep) else np.asarray(sweep, dtype=float).reshape(-1, 3)
    n = len(B)
    if n < MIN_SWEEP_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_SWEEP_SAMPLES} samples for an ellipsoid fit, got {n}")

    mean = B.mean(axis=0)
    X = B - mean
    scatter = X.T @ X / n
    ev = np.linalg.eigvalsh(scatter)
    if ev[-1] <= 0 or ev[0] < COPLANAR_RATIO * ev[-1]:
        rank = int(np.sum(ev > COPLANAR_RATIO * max(ev[-1], 0.0)))
        raise FitDegenerateError(
            f"sweep scatter matrix has rank {rank} < 3 (eigenvalue ratio {ev[0] / max(ev[-1], 1e-300):.3g}); "
            "rotate the sensor through more orientations"
        )
    scale = np.sqrt(ev[-1])
    X = X / scale

    x, y, z = X.T
    D = np.column_stack([x * x, y * y, z * z, 2 * x * y, 2 * x * z, 2 * y * z, 2 * x, 2 * y, 2 * z])
    p, *_ = np.linalg.lstsq(D, np.ones(n), rcond=None)
    M = np.array([[p[0], p[3], p[4]], [p[3], p[1], p[5]], [p[4], p[5], p[2]]])
    g = p[6:9]
    try:
        center = -np.linalg.solve(M, g)
    except np.linalg.LinAlgError as exc:
        raise FitDegenerateError(f"quadric shape matrix is singular: {exc}") from exc
    k = 1.0 + center @ M @ center
    shape = M / k
    w = np.linalg.eigvalsh(shape)
    if k <= 0 or w[0] <= 0:
        raise FitDegenerateError("fitted quadric is not an ellipsoid (shape matrix not positive definite)")

    # (x - c)ᵀ shape (x - c) = 1 in scaled units; undo the scaling.
    b_H = mean + scale * center
    W = _sqrtm_spd(shape) / scale
    unit = (B - b_H) @ W.T
    if reference_magnitude is None:
        radius = float(np.mean(np.linalg.norm(B - b_H, axis=1)))
    elif not reference_magnitude > 0:
        raise ContractViolation(f"reference_magnitude must be positive, got {reference_magnitude!r}")
    else:
        radius = float(reference_magnitude)
    C = radius * W
    C = 0.5 * (C + C.T)
    corrected = unit * radius
    residual = float(np.sqrt(np.mean((np.linalg.norm(corrected, axis=1) - radius) ** 2)))
    return MagCalibration(C=C, b_H=b_H, field_magnitude=radius, fit_residual=residual)


def stability_metrics(raw_window: MagSweep | ArrayLike, cal: MagCalibration | None = None) -> StabilityReport:
    """Spread of the field magnitude over a static window, before and after correction.

    ``sigma_nc`` is the standard deviation of ``|B|`` on raw samples and
    ``sigma_c`` on calibrated ones (equal to ``sigma_nc`` without a
    calibration). ``epsilon`` is the relative improvement in percent, defined
    as 0 when the raw spread vanishes.
    """
    B = raw_window.B if isinstance(raw_window, MagSweep) else np.asarray(raw_window, dtype=float).reshape(-1, 3)
    if len(B) == 0:
        raise InsufficientDataError("stability metrics need at least one sample")
    sigma_nc = float(np.std(np.linalg.norm(B, axis=1)))
    if cal is None:
        sigma_c = sigma_nc
    else:
        sigma_c = float(np.std(np.linalg.norm(apply_calibration(cal, B), axis=1)))
    return StabilityReport.from_sigmas(sigma_nc, sigma_c, len(B))


def sphere_coverage(raw: ArrayLike, cal: MagCalibration | None = None, n_azimuth: int = 8, n_bands: int = 4) -> float:
    """Fraction of equal-area direction bins hit by the (offset-corrected) samples.

    A full tumble approaches 1.0; rotating only about the vertical axis with a
    few degrees of tilt covers a thin belt and scores far lower.
    """
    B = np.asarray(raw, dtype=float).reshape(-1, 3)
    if cal is not None:
        B = apply_calibration(cal, B)
    else:
        B = B - B.mean(axis=0)
    norms = np.linalg.norm(B, axis=1)
    u = B[norms > 0] / norms[norms > 0, None]
    if len(u) == 0:
        return 0.0
    az = (np.arctan2(u[:, 1], u[:, 0]) + np.pi) / (2 * np.pi)
    band = (u[:, 2] + 1.0) / 2.0
    ia = np.minimum((az * n_azimuth).astype(int), n_azimuth - 1)
    ib = np.minimum((band * n_bands).astype(int), n_bands - 1)
    hit = np.zeros((n_azimuth, n_bands), dtype=bool)
    hit[ia, ib] = True
    return float(hit.mean())
