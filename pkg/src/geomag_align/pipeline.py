"""The end-to-end processing chain behind the command line.

calibrate → initialise (static window, north reference) → anchor the WCS →
navigate each sensor (strapdown, optionally filtered) → merge point clouds.
Each stage is a plain function so it can be used without the CLI.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .cloud import MergeError, PointCloud, grid_scene, merge_clouds, merge_error, observe_scene, transform_cloud
from .config import RunConfig
from .errors import ContractViolation, GeomagError, NotStaticError
from .filters import lowpass_filter
from .geometry import quat_from_rotation, quat_to_rotation
from .magcal import MagCalibration, StabilityReport, fit_calibration, sphere_coverage, stability_metrics
from .sim.synth import GroundTruth, synthesize_trace
from .strapdown import ImuSample, PoseState, dead_reckon
from .wcs import (
    NorthReference,
    TransferFunctions,
    WcsAnchor,
    anchor_wcs,
    locomotion_update,
    north_reference,
    north_to_model,
)

log = logging.getLogger("geomag_align")


# --- simulate ---------------------------------------------------------------


def simulate(cfg: RunConfig, seed: int | None = None) -> dict[str, tuple[list[ImuSample], GroundTruth]]:
    """Synthesise every configured sensor; sensor ``i`` draws from the stream ``(seed, i)``."""
    seed = cfg.seed if seed is None else seed
    out = {}
    for i, s in enumerate(cfg.sensors):
        out[s.id] = synthesize_trace(
            s.trajectory, cfg.field, cfg.noise, cfg.distortion, seed=[seed, i], env=cfg.env, sensor_id=s.id
        )
    return out


def simulate_clouds(
    cfg: RunConfig, truths: Mapping[str, GroundTruth], seed: int | None = None
) -> dict[str, PointCloud]:
    """Each sensor's view of the landmark grid at the capture time, in its body axes."""
    seed = cfg.seed if seed is None else seed
    a = cfg.align
    world = grid_scene(a["cloud_extent"], a["cloud_spacing"])
    rng = np.random.default_rng([seed, 1 << 20])
    out = {}
    for sid, tr in truths.items():
        k = len(tr) - 1 if a["capture_t"] < 0 else int(np.clip(np.searchsorted(tr.t, a["capture_t"]), 0, len(tr) - 1))
        c = observe_scene(world, (tr.rotation[k], tr.position[k]), a["cloud_sigma"], rng, sid)
        out[sid] = replace(c, t=float(tr.t[k]))
    return out


# --- calibrate --------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    cal: MagCalibration
    stability: StabilityReport
    coverage: float
    raw: NDArray[np.float64]


def calibrate(samples: Sequence[ImuSample], reference_magnitude: float | None = None) -> CalibrationResult:
    raw = np.array([s.mag for s in samples])
    cal = fit_calibration(raw, reference_magnitude)
    return CalibrationResult(cal, stability_metrics(raw, cal), sphere_coverage(raw, cal), raw)


def calibrations_from_dict(d: dict, sensor_ids: Sequence[str]) -> dict[str, MagCalibration]:
    """Accept either ``{"sensors": {id: cal}}`` or a single calibration applied to every sensor."""
    if "sensors" in d:
        return {sid: MagCalibration.from_dict(c) for sid, c in d["sensors"].items()}
    cal = MagCalibration.from_dict(d)
    return {sid: cal for sid in sensor_ids}


# --- initialise -------------------------------------------------------------


def find_static_window(
    samples: Sequence[ImuSample], window_s: float = 2.0, acc_tol: float = 0.3, gyro_tol: float = 0.05, g: float = 9.81
) -> tuple[int, int]:
    """First run of samples lasting ``window_s`` with ``||acc| - g| <= acc_tol`` and ``|gyro| < gyro_tol``.

    Returns inclusive indices ``(start, end)``.
    """
    t = np.array([s.t for s in samples])
    acc = np.linalg.norm([s.acc for s in samples], axis=1)
    gyr = np.linalg.norm([s.gyro for s in samples], axis=1)
    ok = (np.abs(acc - g) <= acc_tol) & (gyr < gyro_tol)
    start = None
    for i, good in enumerate(ok):
        if not good:
            start = None
            continue
        if start is None:
            start = i
        if t[i] - t[start] >= window_s - 1e-9:
            return start, i
    raise NotStaticError(f"no {window_s:g} s static window (|acc| within {acc_tol} of {g}, |gyro| < {gyro_tol})")


@dataclass(frozen=True)
class SensorInit:
    sensor_id: str
    ref: NorthReference
    start: int
    end: int
    acc_mean: NDArray[np.float64]
    mag_mean: NDArray[np.float64]
    gyro_mean: NDArray[np.float64]


def initialise(samples: Sequence[ImuSample], cfg: RunConfig) -> SensorInit:
    c = cfg.init
    g = float(-cfg.env.gravity[2])
    i0, i1 = find_static_window(samples, c["static_window_s"], c["acc_tol"], c["gyro_tol"], g)
    acc = np.mean([s.acc for s in samples[i0 : i1 + 1]], axis=0)
    mag = np.mean([s.mag for s in samples[i0 : i1 + 1]], axis=0)
    gyr = np.mean([s.gyro for s in samples[i0 : i1 + 1]], axis=0)
    ref = north_reference(mag, acc, t_init=samples[i1].t)
    return SensorInit(samples[0].sensor_id, ref, i0, i1, acc, mag, gyr)


def apply_calibration_to_trace(samples: Sequence[ImuSample], cal: MagCalibration | None) -> list[ImuSample]:
    if cal is None:
        return list(samples)
    B = cal.apply(np.array([s.mag for s in samples]))
    return [replace(s, mag=B[i]) for i, s in enumerate(samples)]


def _prefilter(samples: Sequence[ImuSample], init: SensorInit, cfg: RunConfig) -> list[ImuSample]:
    """Offset removal over the static window and optional low-pass on acc/gyro."""
    f = cfg.filters
    acc = np.array([s.acc for s in samples])
    gyr = np.array([s.gyro for s in samples])
    if f["offset_window_s"] > 0:
        # Only the part of the static mean that is not gravity / earth rate is an offset.
        g = float(np.linalg.norm(cfg.env.gravity))
        acc = acc - (init.acc_mean - g * init.acc_mean / np.linalg.norm(init.acc_mean))
        w_ref = init.ref.R_toNp.T @ cfg.env.earth_rate
        gyr = gyr - (init.gyro_mean - w_ref)
    if f["cutoff_hz"] > 0:
        dt = float(np.median(np.diff([s.t for s in samples])))
        acc = lowpass_filter(acc, dt, f["cutoff_hz"])
        gyr = lowpass_filter(gyr, dt, f["cutoff_hz"])
    return [replace(s, acc=acc[i], gyro=gyr[i]) for i, s in enumerate(samples)]


# --- navigate ---------------------------------------------------------------


def _dedupe(samples: Sequence[ImuSample]) -> list[ImuSample]:
    out = [samples[0]]
    for s in samples[1:]:
        if s.t > out[-1].t:
            out.append(s)
    return out


def navigate(
    samples: Sequence[ImuSample],
    init: SensorInit,
    cfg: RunConfig,
    tf: TransferFunctions | None = None,
    filtered: bool | None = None,
) -> list[PoseState]:
    """Poses from the end of the static window on, in the sensor's initial body frame.

    With filtering on and transfer functions available the position is a
    Kalman fusion of the strapdown acceleration and the magnetic position
    channel; otherwise plain strapdown dead reckoning is used.
    """
    filtered = cfg.filters["enabled"] if filtered is None else filtered
    env = cfg.env.expressed_in(init.ref.R_toNp.T)
    data = _dedupe(samples[init.end :])
    initial = PoseState(t=data[0].t)
    if not filtered:
        return dead_reckon(data, initial, env)
    data = _prefilter(_dedupe(samples), init, cfg)
    data = data[next(i for i, s in enumerate(data) if s.t >= samples[init.end].t) :]
    if tf is None:
        return dead_reckon(data, initial, env)
    f = cfg.filters
    r = f["r_mag_pos"] if f["r_mag_pos"] > 0 else tf.F_s * f["mag_sigma"]
    gate = f["gate"] if f["gate"] > 0 else None
    state = initial
    out = [state]
    for k in range(1, len(data)):
        dt = data[k].t - data[k - 1].t
        state = locomotion_update(state, tf, data[k], dt, env=env, mode="fused", q_acc=f["q_acc"], r_mag_pos=r, gate=gate)
        out.append(state)
    return out


def transfer_from_model(cfg: RunConfig, init: SensorInit, p_field: NDArray[np.float64] | None) -> TransferFunctions | None:
    """``F_s`` from the config, or the reciprocal spectral norm of the model gradient at the sensor."""
    F_s = cfg.align["F_s"]
    if F_s <= 0:
        if p_field is None:
            return None
        G = cfg.field.gradient(p_field)
        n = float(np.linalg.norm(G, 2))
        if n < 1e-12:
            return None
        F_s = 1.0 / n
    return TransferFunctions(F_s=F_s, B_ref=init.mag_mean, s_ref=np.zeros(3))


# --- fuse -------------------------------------------------------------------


@dataclass
class FuseResult:
    anchor: WcsAnchor | None
    poses: dict[str, list[PoseState]] = field(default_factory=dict)
    local_poses: dict[str, list[PoseState]] = field(default_factory=dict)
    inits: dict[str, SensorInit] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    transfer: dict[str, TransferFunctions | None] = field(default_factory=dict)


def origin_in_field(cfg: RunConfig, sensor_id: str, t: float) -> NDArray[np.float64]:
    o = cfg.align["origin_in_field"]
    if o:
        return np.asarray(o, dtype=float)
    for s in cfg.sensors:
        if s.id == sensor_id:
            return s.trajectory.evaluate(np.array([t])).position[0]
    return np.zeros(3)


def sensor_position_in_field(anchor: WcsAnchor, sensor_id: str, cfg: RunConfig) -> NDArray[np.float64]:
    """Model-frame position of a sensor implied by its WCS displacement."""
    p1 = anchor.origin_in_field
    T = anchor.transforms[sensor_id]
    return p1 + north_to_model(cfg.field, p1) @ anchor.R_world @ T.D_1n


def fuse(
    traces: Mapping[str, Sequence[ImuSample]],
    cals: Mapping[str, MagCalibration],
    cfg: RunConfig,
    filtered: bool | None = None,
) -> FuseResult:
    res = FuseResult(anchor=None)
    calibrated = {}
    for sid, samples in traces.items():
        try:
            calibrated[sid] = apply_calibration_to_trace(samples, cals.get(sid))
            res.inits[sid] = initialise(calibrated[sid], cfg)
        except GeomagError as exc:
            res.failures[sid] = f"{type(exc).__name__}: {exc}"
            log.warning("sensor %s not initialised: %s", sid, exc)
    if not res.inits:
        return res
    ids = list(res.inits)
    origin = ids[0]
    p1 = origin_in_field(cfg, origin, res.inits[origin].ref.t_init)
    states = {sid: PoseState(t=res.inits[sid].ref.t_init) for sid in ids}
    refs = {sid: res.inits[sid].ref for sid in ids}
    anchor, _ = anchor_wcs(
        states, refs, cfg.field, origin_in_field=p1, require_displacement=cfg.align["require_displacement"]
    )
    res.anchor = anchor
    for sid in ids:
        try:
            p_field = sensor_position_in_field(anchor, sid, cfg)
            tf = transfer_from_model(cfg, res.inits[sid], p_field)
            res.transfer[sid] = tf
            local = navigate(calibrated[sid], res.inits[sid], cfg, tf, filtered)
        except GeomagError as exc:
            res.failures[sid] = f"{type(exc).__name__}: {exc}"
            log.warning("sensor %s navigation failed: %s", sid, exc)
            continue
        res.local_poses[sid] = local
        res.poses[sid] = [to_wcs_state(anchor, sid, st) for st in local]
    return res


def to_wcs_state(anchor: WcsAnchor, sensor_id: str, st: PoseState) -> PoseState:
    R, s = anchor.to_wcs(sensor_id, st.R, st.s)
    return replace(st, q=quat_from_rotation(R), s=s, v=anchor.transforms[sensor_id].R_1n @ st.v)


# --- truth in the WCS ---------------------------------------------------------


def truth_in_wcs(
    truth: Mapping[str, Mapping[str, NDArray[np.float64]]], anchor: WcsAnchor
) -> dict[str, dict[str, NDArray[np.float64]]]:
    """Ground truth re-expressed in the WCS (the origin sensor's body frame at its initialisation)."""
    o = truth[anchor.origin_sensor]
    k = int(np.argmin(np.abs(o["t"] - anchor.t0)))
    R1 = quat_to_rotation(o["q"][k])
    p1 = o["position"][k]
    out = {}
    for sid, d in truth.items():
        R = np.array([R1.T @ quat_to_rotation(q) for q in d["q"]])
        out[sid] = {"t": d["t"], "position": (d["position"] - p1) @ R1, "rotation": R}
    return out


def position_rmse(poses: Sequence[PoseState], truth_t: NDArray[np.float64], truth_p: NDArray[np.float64]) -> float:
    t = np.array([p.t for p in poses])
    s = np.array([p.s for p in poses])
    ref = np.column_stack([np.interp(t, truth_t, truth_p[:, j]) for j in range(3)])
    return float(np.sqrt(np.mean(np.sum((s - ref) ** 2, axis=1))))


# --- align ------------------------------------------------------------------


def pose_at(poses: Sequence[PoseState], t: float) -> PoseState:
    ts = np.array([p.t for p in poses])
    return poses[int(np.argmin(np.abs(ts - t)))]


@dataclass
class AlignResult:
    merged: PointCloud
    clouds_wcs: dict[str, PointCloud]
    pairs: dict[str, MergeError]


def align(poses: Mapping[str, Sequence[PoseState]], clouds: Mapping[str, PointCloud]) -> AlignResult:
    """Move every cloud into the WCS with its sensor's pose at capture time and score each pair."""
    missing_pose = sorted(set(clouds) - set(poses))
    missing_cloud = sorted(set(poses) - set(clouds))
    if missing_pose or missing_cloud:
        parts = []
        if missing_pose:
            parts.append(f"clouds without poses: {', '.join(missing_pose)}")
        if missing_cloud:
            parts.append(f"poses without clouds: {', '.join(missing_cloud)}")
        raise ContractViolation("unmatched sensor ids; " + "; ".join(parts))
    ids = list(poses)
    wcs = {}
    for sid in ids:
        st = pose_at(poses[sid], clouds[sid].t)
        wcs[sid] = transform_cloud(clouds[sid], (st.R, st.s))
    pairs = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            pairs[f"{a}-{b}"] = merge_error(wcs[a], wcs[b])
    return AlignResult(merge_clouds([wcs[s] for s in ids]), wcs, pairs)
