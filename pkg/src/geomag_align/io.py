"""File formats: IMU trace and ground-truth JSON Lines, pose streams, JSON documents.

All writers are atomic: content goes to a temporary file in the target
directory which is then renamed over the destination.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import TraceParseError
from .sim.synth import GroundTruth
from .strapdown import ImuSample, PoseState

TRACE_KEYS = ("t", "sensor", "acc", "gyro", "mag")


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def read_json(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_jsonl(path: str | Path, rows: Iterable[Mapping]) -> None:
    atomic_write_text(path, "".join(json.dumps(r, separators=(",", ":"), default=_json_default) + "\n" for r in rows))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default).encode()).hexdigest()


# --- traces -----------------------------------------------------------------


def _vec(row: dict, key: str, lineno: int) -> list[float]:
    v = row[key]
    if not isinstance(v, list) or len(v) != 3:
        raise TraceParseError(f"{key!r} must be a list of 3 numbers", lineno)
    try:
        out = [float(x) for x in v]
    except (TypeError, ValueError):
        raise TraceParseError(f"{key!r} must be a list of 3 numbers", lineno) from None
    if not all(math.isfinite(x) for x in out):
        raise TraceParseError(f"{key!r} contains a non-finite value", lineno)
    return out


def parse_trace_lines(lines: Iterable[str]) -> dict[str, list[ImuSample]]:
    """Parse trace JSONL into per-sensor sample lists (sensors in order of first appearance).

    Unknown keys are ignored and blank lines skipped. Timestamps must not
    decrease within a sensor.
    """
    out: dict[str, list[ImuSample]] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"invalid JSON: {exc.msg}", lineno) from None
        if not isinstance(row, dict):
            raise TraceParseError("each line must be a JSON object", lineno)
        missing = [k for k in TRACE_KEYS if k not in row]
        if missing:
            raise TraceParseError(f"missing required key(s): {', '.join(missing)}", lineno)
        try:
            t = float(row["t"])
        except (TypeError, ValueError):
            raise TraceParseError("'t' must be a number", lineno) from None
        if not math.isfinite(t):
            raise TraceParseError("'t' must be finite", lineno)
        sid = str(row["sensor"])
        samples = out.setdefault(sid, [])
        if samples and t < samples[-1].t:
            raise TraceParseError(f"timestamp {t} decreases for sensor {sid!r} (previous {samples[-1].t})", lineno)
        samples.append(ImuSample(t, _vec(row, "acc", lineno), _vec(row, "gyro", lineno), _vec(row, "mag", lineno), sid))
    return out


def read_trace(path: str | Path) -> dict[str, list[ImuSample]]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace_lines(fh)


def trace_rows(samples: Iterable[ImuSample]) -> Iterable[dict]:
    for s in samples:
        yield {"t": s.t, "sensor": s.sensor_id, "acc": s.acc.tolist(), "gyro": s.gyro.tolist(), "mag": s.mag.tolist()}


def write_trace(path: str | Path, samples: Iterable[ImuSample]) -> None:
    write_jsonl(path, trace_rows(samples))


def truth_rows(truth: GroundTruth) -> Iterable[dict]:
    from .geometry import quat_from_rotation

    for i in range(len(truth)):
        yield {
            "t": float(truth.t[i]),
            "sensor": truth.sensor_id,
            "position": truth.position[i].tolist(),
            "velocity": truth.velocity[i].tolist(),
            "q": quat_from_rotation(truth.rotation[i]).tolist(),
            "B": truth.field_nav[i].tolist(),
        }


def read_truth(path: str | Path) -> dict[str, dict[str, np.ndarray]]:
    """Ground-truth JSONL as per-sensor arrays ``t``, ``position``, ``velocity``, ``q``, ``B``."""
    acc: dict[str, dict[str, list]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                d = acc.setdefault(str(row["sensor"]), {k: [] for k in ("t", "position", "velocity", "q", "B")})
                for k in d:
                    d[k].append(row[k])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise TraceParseError(f"bad truth record: {exc}", lineno) from None
    return {sid: {k: np.asarray(v, dtype=float) for k, v in d.items()} for sid, d in acc.items()}


# --- poses ------------------------------------------------------------------


def pose_row(sensor_id: str, state: PoseState) -> dict:
    return {"t": state.t, "sensor": sensor_id, "q": state.q.tolist(), "v": state.v.tolist(), "s": state.s.tolist()}


def read_poses(path: str | Path) -> dict[str, list[PoseState]]:
    out: dict[str, list[PoseState]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                st = PoseState(t=float(row["t"]), q=row["q"], v=row.get("v", [0.0, 0.0, 0.0]), s=row["s"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise TraceParseError(f"bad pose record: {exc}", lineno) from None
            out.setdefault(str(row["sensor"]), []).append(st)
    return out
