"""Low-pass prefiltering and a linear position/velocity Kalman filter."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ContractViolation, NumericalDegenerateError
from .geometry import vec3


@dataclass(frozen=True)
class LowPassState:
    """First-order IIR smoother; ``last_output`` is ``None`` until the first sample."""

    cutoff_hz: float
    alpha: float = 1.0
    last_output: NDArray[np.float64] | None = None


def lowpass_alpha(cutoff_hz: float, dt: float) -> float:
    if not dt > 0:
        raise ContractViolation(f"dt must be positive, got {dt!r}")
    if not cutoff_hz > 0:
        raise ContractViolation(f"cutoff_hz must be positive, got {cutoff_hz!r}")
    return dt / (dt + 1.0 / (2.0 * np.pi * cutoff_hz))


def lowpass_step(state: LowPassState, sample: ArrayLike, dt: float) -> tuple[LowPassState, NDArray[np.float64]]:
    """``y = y_prev + α (x - y_prev)`` with ``α = dt / (dt + 1/(2π f_c))``.

    The first call passes the sample through (warm start).
    """
    alpha = lowpass_alpha(state.cutoff_hz, dt)
    x = vec3(sample)
    if state.last_output is None:
        y = x
    else:
        y = state.last_output + alpha * (x - state.last_output)
    return LowPassState(state.cutoff_hz, alpha, y), y


def lowpass_filter(x: ArrayLike, dt: float, cutoff_hz: float) -> NDArray[np.float64]:
    """Filter an (N, 3) series sampled uniformly at ``dt``."""
    x = np.asarray(x, dtype=float)
    alpha = lowpass_alpha(cutoff_hz, dt)
    y = np.empty_like(x)
    y[0] = x[0]
    for i in range(1, len(x)):
        y[i] = y[i - 1] + alpha * (x[i] - y[i - 1])
    return y


def ema_variance_ratio(alpha: float) -> float:
    """Steady-state output/input variance of the smoother on white noise."""
    return alpha / (2.0 - alpha)


def remove_offset(
    t: ArrayLike, x: ArrayLike, window_s: float = 2.0, reference: ArrayLike | None = None
) -> NDArray[np.float64]:
    """Subtract the mean of the leading static window, optionally keeping ``reference``.

    ``reference`` is the value the window should read (e.g. the gravity
    reaction for an accelerometer), so only the residual offset is removed.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    mask = t <= t[0] + window_s
    offset = x[mask].mean(axis=0)
    if reference is not None:
        offset = offset - np.asarray(reference, dtype=float)
    return x - offset


@dataclass(frozen=True)
class KalmanState:
    """Position/velocity filter state ``x = [p (3), v (3)]``.

    ``q_acc`` is the per-sample standard deviation of the acceleration input
    [m/s²]; the process noise is ``Q = q_acc² Γ Γᵀ`` with
    ``Γ = [½ dt² I; dt I]``. ``innovation``, ``S`` and ``K`` keep the values
    of the last update for diagnostics.
    """

    x: NDArray[np.float64] = field(default_factory=lambda: np.zeros(6))
    P: NDArray[np.float64] = field(default_factory=lambda: np.zeros((6, 6)))
    q_acc: float = 0.05
    R_meas: NDArray[np.float64] = field(default_factory=lambda: np.eye(3) * 0.25)
    innovation: NDArray[np.float64] | None = None
    S: NDArray[np.float64] | None = None
    K: NDArray[np.float64] | None = None

    @property
    def position(self) -> NDArray[np.float64]:
        return self.x[:3]

    @property
    def velocity(self) -> NDArray[np.float64]:
        return self.x[3:]

    def nis(self) -> float:
        """Normalised innovation squared of the last update."""
        if self.innovation is None:
            raise ContractViolation("no update has been applied yet")
        return float(self.innovation @ np.linalg.solve(self.S, self.innovation))


H_POS = np.hstack([np.eye(3), np.zeros((3, 3))])


def transition(dt: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    F = np.eye(6)
    F[:3, 3:] = np.eye(3) * dt
    G = np.vstack([0.5 * dt * dt * np.eye(3), dt * np.eye(3)])
    return F, G


def kalman_predict(state: KalmanState, acc_world: ArrayLike, dt: float) -> KalmanState:
    """Constant-acceleration step with ``acc_world`` (gravity removed) as the control input."""
    if not dt > 0:
        raise ContractViolation(f"dt must be positive, got {dt!r}")
    F, G = transition(dt)
    x = F @ state.x + G @ vec3(acc_world)
    Q = state.q_acc**2 * (G @ G.T)
    P = F @ state.P @ F.T + Q
    return replace(state, x=x, P=0.5 * (P + P.T))


def kalman_update(state: KalmanState, pos_meas: ArrayLike, R_meas: ArrayLike | None = None) -> KalmanState:
    """Position measurement update in Joseph form."""
    z = vec3(pos_meas)
    R = state.R_meas if R_meas is None else np.asarray(R_meas, dtype=float)
    if R.shape != (3, 3) or not np.allclose(R, R.T):
        raise ContractViolation("R_meas must be a symmetric 3x3 matrix")
    y = z - H_POS @ state.x
    S = H_POS @ state.P @ H_POS.T + R
    S = 0.5 * (S + S.T)
    if np.linalg.cond(S) > 1e14 or not np.all(np.isfinite(S)):
        raise NumericalDegenerateError("innovation covariance is singular")
    try:
        K = np.linalg.solve(S, H_POS @ state.P).T
    except np.linalg.LinAlgError as exc:
        raise NumericalDegenerateError(f"innovation covariance is singular: {exc}") from exc
    x = state.x + K @ y
    A = np.eye(6) - K @ H_POS
    P = A @ state.P @ A.T + K @ R @ K.T
    return replace(state, x=x, P=0.5 * (P + P.T), innovation=y, S=S, K=K)


def is_psd(P: ArrayLike, tol: float = 1e-9) -> bool:
    P = np.asarray(P, dtype=float)
    return bool(np.allclose(P, P.T, atol=tol) and np.linalg.eigvalsh(0.5 * (P + P.T)).min() >= -tol)
