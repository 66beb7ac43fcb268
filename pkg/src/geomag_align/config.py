"""Run configuration: defaults, TOML/JSON loading and validation.

Every field is optional. Unknown keys are rejected so typos surface as a
schema error naming the offending path, e.g. ``filters.q_accc``.

Defaults::

    seed = 0

    [environment]
    gravity = 9.81            # m/s²
    earth_rate = 7.29e-5      # rad/s
    latitude_deg = 0.0
    earth_rotation = false    # include earth rate in simulation and navigation

    [noise]                   # per-sample standard deviations and constant biases
    gyro_sigma = 0.0
    gyro_bias = [0, 0, 0]
    acc_sigma = 0.0
    acc_bias = [0, 0, 0]
    mag_sigma = 0.0

    [distortion]              # optional; raw = soft_iron @ B + hard_iron
    hard_iron = [0, 0, 0]
    soft_iron = [[1,0,0],[0,1,0],[0,0,1]]

    [field]                   # see geomag_align.sim.fields.field_from_dict
    type = "uniform"
    B0 = [25.0, 0.0, -43.30127018922193]

    [[sensors]]
    id = "1"
    trajectory = { type = "stationary", length_s = 10.0 }

    [filters]
    enabled = true
    cutoff_hz = 0             # low-pass on acc/gyro; 0 disables it
    q_acc = 0.05              # m/s², process noise of the position filter
    r_mag_pos = 0             # m, magnetic position noise; 0 derives it from F_s
    mag_sigma = 0.5           # uT, used to derive r_mag_pos
    gate = 16.27              # NIS threshold for magnetic fixes (chi² 3 dof, 0.999); 0 disables
    offset_window_s = 2.0

    [init]
    static_window_s = 2.0
    acc_tol = 0.3             # m/s² around 9.81
    gyro_tol = 0.05           # rad/s

    [align]
    F_s = 0                   # m/uT; 0 derives it from the field model gradient
    origin_in_field = []      # sensor 1 position in field coordinates; [] = from its trajectory
    require_displacement = false
    cloud_extent = 8.0
    cloud_spacing = 1.0
    cloud_sigma = 0.02        # m, RMS point displacement
    capture_t = -1            # s; negative = last sample
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .magcal import MagCalibration
from .sim.fields import MagneticFieldModel, earth_field, field_from_dict
from .sim.trajectories import TRAJECTORY_TYPES, TrajectorySpec
from .strapdown import EnvironmentConstants, SensorNoiseModel

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "environment": {"gravity": 9.81, "earth_rate": 7.29e-5, "latitude_deg": 0.0, "earth_rotation": False},
    "noise": {"gyro_sigma": 0.0, "gyro_bias": [0.0, 0.0, 0.0], "acc_sigma": 0.0, "acc_bias": [0.0, 0.0, 0.0], "mag_sigma": 0.0},
    "distortion": None,
    "field": {"type": "uniform", "B0": earth_field().tolist()},
    "sensors": [{"id": "1", "trajectory": {"type": "stationary", "length_s": 10.0}}],
    "filters": {
        "enabled": True,
        "cutoff_hz": 0.0,
        "q_acc": 0.05,
        "r_mag_pos": 0.0,
        "mag_sigma": 0.5,
        "gate": 16.27,
        "offset_window_s": 2.0,
    },
    "init": {"static_window_s": 2.0, "acc_tol": 0.3, "gyro_tol": 0.05},
    "align": {
        "F_s": 0.0,
        "origin_in_field": [],
        "require_displacement": False,
        "cloud_extent": 8.0,
        "cloud_spacing": 1.0,
        "cloud_sigma": 0.02,
        "capture_t": -1.0,
    },
}

_FREE_FORM = {"distortion", "field", "sensors"}


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _merge(default: dict, user: dict, path: str) -> dict:
    if not isinstance(user, dict):
        raise ConfigError(path or "<root>", "expected a table/object")
    out = copy.deepcopy(default)
    for key, val in user.items():
        p = f"{path}.{key}" if path else key
        if key not in default:
            raise ConfigError(p, "unknown key")
        d = default[key]
        if key in _FREE_FORM and not path:
            out[key] = val
        elif isinstance(d, dict):
            out[key] = _merge(d, val, p)
        elif isinstance(d, bool):
            if not isinstance(val, bool):
                raise ConfigError(p, f"expected a boolean, got {val!r}")
            out[key] = val
        elif _is_number(d):
            if not _is_number(val):
                raise ConfigError(p, f"expected a number, got {val!r}")
            out[key] = float(val) if isinstance(d, float) else int(val)
        elif isinstance(d, list):
            if not isinstance(val, list) or not all(_is_number(v) for v in val):
                raise ConfigError(p, f"expected a list of numbers, got {val!r}")
            if d and len(val) != len(d):
                raise ConfigError(p, f"expected {len(d)} numbers, got {len(val)}")
            out[key] = [float(v) for v in val]
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class SensorSpec:
    id: str
    trajectory: TrajectorySpec


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``raw`` is the fully defaulted dictionary echoed into reports."""

    raw: dict
    seed: int
    env: EnvironmentConstants
    noise: SensorNoiseModel
    distortion: MagCalibration | None
    field: MagneticFieldModel
    sensors: tuple[SensorSpec, ...]

    @property
    def filters(self) -> dict:
        return self.raw["filters"]

    @property
    def init(self) -> dict:
        return self.raw["init"]

    @property
    def align(self) -> dict:
        return self.raw["align"]


def _vector(val, path: str) -> np.ndarray:
    a = np.asarray(val, dtype=float) if isinstance(val, list) else None
    if a is None or a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ConfigError(path, f"expected a list of 3 numbers, got {val!r}")
    return a


def _trajectory(d, path: str) -> TrajectorySpec:
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError(path, "expected a table with a 'type' key")
    kind = d["type"]
    cls = TRAJECTORY_TYPES.get(kind)
    if cls is None:
        raise ConfigError(f"{path}.type", f"unknown trajectory type {kind!r}; choose from {sorted(TRAJECTORY_TYPES)}")
    params = {}
    fields = cls.__dataclass_fields__
    for k, v in d.items():
        if k == "type":
            continue
        if k not in fields:
            raise ConfigError(f"{path}.{k}", f"unknown parameter for trajectory {kind!r}")
        params[k] = np.asarray(v, dtype=float) if isinstance(v, list) else v
    try:
        spec = cls(**params)
        spec.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None
    return spec


def build_config(user: dict | None = None) -> RunConfig:
    raw = _merge(DEFAULTS, user or {}, "")
    if not isinstance(raw["seed"], int) or raw["seed"] < 0:
        raise ConfigError("seed", "expected a non-negative integer")
    e = raw["environment"]
    env = EnvironmentConstants(
        gravity=np.array([0.0, 0.0, -e["gravity"]]),
        earth_rate_magnitude=e["earth_rate"] if e["earth_rotation"] else 0.0,
        latitude=np.radians(e["latitude_deg"]),
    )
    n = raw["noise"]
    try:
        noise = SensorNoiseModel(
            gyro_sigma=n["gyro_sigma"],
            gyro_bias=np.asarray(n["gyro_bias"]),
            acc_sigma=n["acc_sigma"],
            acc_bias=np.asarray(n["acc_bias"]),
            mag_sigma=n["mag_sigma"],
        )
    except ValueError as exc:
        raise ConfigError("noise", str(exc)) from None

    distortion = None
    if raw["distortion"] is not None:
        d = raw["distortion"]
        if not isinstance(d, dict) or set(d) - {"hard_iron", "soft_iron"}:
            raise ConfigError("distortion", "expected a table with 'hard_iron' and/or 'soft_iron'")
        b = _vector(d.get("hard_iron", [0.0, 0.0, 0.0]), "distortion.hard_iron")
        S = np.asarray(d.get("soft_iron", np.eye(3).tolist()), dtype=float)
        if S.shape != (3, 3) or abs(np.linalg.det(S)) < 1e-9:
            raise ConfigError("distortion.soft_iron", "expected an invertible 3x3 matrix")
        distortion = MagCalibration(np.linalg.inv(S), b)

    if not isinstance(raw["field"], dict):
        raise ConfigError("field", "expected a table")
    try:
        field = field_from_dict(raw["field"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("field", f"invalid field model: {exc}") from None

    sensors_raw = raw["sensors"]
    if not isinstance(sensors_raw, list) or not sensors_raw:
        raise ConfigError("sensors", "expected a non-empty list of sensors")
    sensors = []
    seen = set()
    for i, s in enumerate(sensors_raw):
        p = f"sensors[{i}]"
        if not isinstance(s, dict) or set(s) - {"id", "trajectory"}:
            raise ConfigError(p, "expected a table with 'id' and 'trajectory'")
        sid = str(s.get("id", i + 1))
        if sid in seen:
            raise ConfigError(f"{p}.id", f"duplicate sensor id {sid!r}")
        seen.add(sid)
        sensors.append(SensorSpec(sid, _trajectory(s.get("trajectory", {"type": "stationary"}), f"{p}.trajectory")))

    f = raw["filters"]
    for key in ("cutoff_hz", "q_acc", "r_mag_pos", "mag_sigma", "gate", "offset_window_s"):
        if f[key] < 0:
            raise ConfigError(f"filters.{key}", "must be non-negative")
    if raw["init"]["static_window_s"] <= 0:
        raise ConfigError("init.static_window_s", "must be positive")
    if raw["align"]["origin_in_field"] and len(raw["align"]["origin_in_field"]) != 3:
        raise ConfigError("align.origin_in_field", "expected [] or 3 numbers")
    return RunConfig(raw, raw["seed"], env, noise, distortion, field, tuple(sensors))


def load_config(path: str | Path | None) -> RunConfig:
    """Read a ``.toml`` or ``.json`` file (``None`` gives the defaults)."""
    if path is None:
        return build_config({})
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".toml":
            user = tomllib.loads(text)
        else:
            user = json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(str(path), f"parse error: {exc}") from None
    return build_config(user)
