"""``geomag-align``: calibrate, simulate, fuse, align and report from the shell.

Exit codes: 0 success, 2 input or schema error, 3 numerical/degenerate
error, 4 partial failure (some sensors failed). The log level comes from
``GEOMAG_ALIGN_LOG`` (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cloud import read_cloud, write_cloud
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    ContractViolation,
    GeomagError,
    InsufficientDataError,
    TraceParseError,
)
from .io import (
    atomic_write_text,
    pose_row,
    read_json,
    read_poses,
    read_trace,
    read_truth,
    sha256_file,
    sha256_json,
    truth_rows,
    write_json,
    write_jsonl,
    write_trace,
)
from .geometry import quat_from_rotation
from .strapdown import PoseState
from .wcs import WcsAnchor
from . import pipeline

log = logging.getLogger("geomag_align")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4


def _report_header(cfg: RunConfig | None, inputs: list[str | Path], command: str, seed: int | None = None) -> dict:
    h = {"tool": "geomag-align", "version": __version__, "command": command}
    if cfg is not None:
        h["config"] = cfg.raw
        h["config_sha256"] = sha256_json(cfg.raw)
    if seed is not None:
        h["seed"] = seed
    h["inputs"] = {str(p): sha256_file(p) for p in inputs}
    return h


def _csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(repr(float(v)) for v in r) for r in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


# --- commands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    sims = pipeline.simulate(cfg, seed)
    out = Path(args.out)
    samples = sorted((s for smp, _ in sims.values() for s in smp), key=lambda s: s.t)
    write_trace(out, samples)
    truth_path = Path(args.truth) if args.truth else _sibling(out, "_truth.jsonl")
    rows = [r for _, tr in sims.values() for r in truth_rows(tr)]
    rows.sort(key=lambda r: r["t"])
    write_jsonl(truth_path, rows)
    written = [out, truth_path]
    if args.clouds:
        cdir = Path(args.clouds)
        clouds = pipeline.simulate_clouds(cfg, {sid: tr for sid, (_, tr) in sims.items()}, seed)
        manifest = []
        for sid, c in clouds.items():
            p = cdir / f"cloud_{sid}.xyz"
            write_cloud(p, c)
            manifest.append({"sensor": sid, "path": p.name, "t": c.t})
            written.append(p)
        write_json(cdir / "clouds.json", {"clouds": manifest})
        written.append(cdir / "clouds.json")
    log.info("simulated %d sensors, %d samples", len(sims), len(samples))
    print("\n".join(str(p) for p in written))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config) if args.config else None
    traces = read_trace(args.trace)
    if not traces:
        raise InsufficientDataError("trace contains no samples")
    out = Path(args.out)
    report_path = Path(args.report) if args.report else _sibling(out, "_report.json")
    ref = args.field_magnitude
    if ref is None and cfg is not None:
        ref = float(np.linalg.norm(cfg.field.field(np.zeros(3))))
    cals, per_sensor = {}, {}
    for sid, samples in traces.items():
        r = pipeline.calibrate(samples, ref)
        cals[sid] = r.cal.to_dict()
        per_sensor[sid] = {**r.stability.to_dict(), "sphere_coverage": r.coverage, "field_magnitude": r.cal.field_magnitude,
                           "fit_residual": r.cal.fit_residual}
        corrected = r.cal.apply(r.raw)
        _csv(
            _sibling(report_path, f"_sphere_{sid}.csv"),
            ["raw_x", "raw_y", "raw_z", "cal_x", "cal_y", "cal_z"],
            np.hstack([r.raw, corrected]),
        )
        print(f"sensor {sid}: sigma_nc={r.stability.sigma_nc:.4f} uT sigma_c={r.stability.sigma_c:.4g} uT "
              f"epsilon={r.stability.epsilon:.2f} % coverage={r.coverage:.2f}")
    write_json(out, {"sensors": cals})
    write_json(report_path, {**_report_header(cfg, [args.trace], "calibrate"), "sensors": per_sensor})
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = load_config(args.config)
    traces = read_trace(args.trace)
    if not traces:
        raise InsufficientDataError("trace contains no samples")
    cals = pipeline.calibrations_from_dict(read_json(args.cal), list(traces)) if args.cal else {}
    out = Path(args.out)
    res = pipeline.fuse(traces, cals, cfg)
    inputs = [args.trace] + ([args.cal] if args.cal else []) + ([args.truth] if args.truth else [])
    report = _report_header(cfg, inputs, "fuse")
    sensors = {}
    for sid in traces:
        entry = {"status": "ok" if sid in res.poses else "failed"}
        if sid in res.failures:
            entry["error"] = res.failures[sid]
        if sid in res.inits:
            ini = res.inits[sid]
            entry["t_init"] = ini.ref.t_init
            entry["heading_deg"] = float(np.degrees(ini.ref.heading))
        if res.anchor is not None and sid in res.anchor.transforms:
            T = res.anchor.transforms[sid]
            entry["D_1n"] = T.D_1n.tolist()
            entry["displacement_observed"] = T.displacement_observed
        tf = res.transfer.get(sid)
        entry["F_s"] = None if tf is None else tf.F_s
        if sid in res.poses:
            entry["final_position"] = res.poses[sid][-1].s.tolist()
            entry["n_poses"] = len(res.poses[sid])
        sensors[sid] = entry
    report["sensors"] = sensors
    report["filters_enabled"] = bool(cfg.filters["enabled"])

    if res.anchor is not None:
        write_json(_sibling(out, "_anchor.json"), res.anchor.to_dict())
        rows = [pose_row(sid, st) for sid, poses in res.poses.items() for st in poses]
        rows.sort(key=lambda r: r["t"])
        write_jsonl(out, rows)
        for sid, poses in res.poses.items():
            _csv(_sibling(out, f"_track_{sid}.csv"), ["t", "x", "y", "z"], [[p.t, *p.s] for p in poses])
        if args.truth:
            truth = pipeline.truth_in_wcs(read_truth(args.truth), res.anchor)
            other = pipeline.fuse(traces, cals, cfg, filtered=not cfg.filters["enabled"])
            on, off = (res, other) if cfg.filters["enabled"] else (other, res)
            for sid in res.poses:
                if sid not in truth:
                    continue
                tr = truth[sid]
                e_on = pipeline.position_rmse(on.poses[sid], tr["t"], tr["position"]) if sid in on.poses else None
                e_off = pipeline.position_rmse(off.poses[sid], tr["t"], tr["position"]) if sid in off.poses else None
                sensors[sid]["rmse_filtered"] = e_on
                sensors[sid]["rmse_unfiltered"] = e_off
                if e_on is not None and e_off:
                    sensors[sid]["rmse_ratio"] = e_on / e_off
    write_json(_sibling(out, "_report.json"), report)
    for sid, e in sensors.items():
        msg = f"sensor {sid}: {e['status']}"
        if "rmse_ratio" in e:
            msg += f" rmse filtered/unfiltered = {e['rmse_filtered']:.4g}/{e['rmse_unfiltered']:.4g} m"
        if "error" in e:
            msg += f" ({e['error']})"
        print(msg)
    if not res.poses:
        log.error("no sensor could be initialised")
        return EXIT_NUMERIC
    if res.failures:
        return EXIT_PARTIAL
    return EXIT_OK


def _load_clouds(args) -> dict:
    clouds = {}
    if args.clouds:
        manifest = Path(args.clouds)
        for e in read_json(manifest)["clouds"]:
            c = read_cloud(manifest.parent / e["path"], str(e["sensor"]))
            clouds[c.sensor_id] = replace(c, t=float(e.get("t", 0.0)))
    for spec in args.cloud or []:
        sid, _, rest = spec.partition("=")
        path, _, t = rest.partition("@")
        if not sid or not path:
            raise ContractViolation(f"--cloud expects ID=PATH[@T], got {spec!r}")
        c = read_cloud(path, sid)
        clouds[sid] = replace(c, t=float(t) if t else 0.0)
    if not clouds:
        raise ContractViolation("no clouds given (use --clouds MANIFEST or --cloud ID=PATH[@T])")
    return clouds


def cmd_align(args) -> int:
    poses = read_poses(args.poses)
    clouds = _load_clouds(args)
    out = Path(args.out)
    res = pipeline.align(poses, clouds)
    write_cloud(out, res.merged)
    report = _report_header(None, [args.poses] + ([args.clouds] if args.clouds else []), "align")
    report["pairs"] = {k: {"rmse": m.rmse, "n": int(len(m.distances))} for k, m in res.pairs.items()}
    for k, m in res.pairs.items():
        counts, edges = m.histogram()
        _csv(_sibling(out, f"_hist_{k}.csv"), ["lo", "hi", "count"], zip(edges[:-1], edges[1:], counts))
    if args.truth:
        anchor_path = Path(args.anchor) if args.anchor else _sibling(Path(args.poses), "_anchor.json")
        anchor = WcsAnchor.from_dict(read_json(anchor_path))
        truth = pipeline.truth_in_wcs(read_truth(args.truth), anchor)
        tposes = {}
        for sid in poses:
            tr = truth[sid]
            tposes[sid] = [
                PoseState(t=float(tr["t"][i]), q=quat_from_rotation(tr["rotation"][i]), s=tr["position"][i])
                for i in range(len(tr["t"]))
            ]
        ref = pipeline.align(tposes, clouds)
        for k, m in ref.pairs.items():
            report["pairs"][k]["rmse_truth_poses"] = m.rmse
    write_json(Path(args.report) if args.report else _sibling(out, "_report.json"), report)
    for k, v in report["pairs"].items():
        extra = f" (ground-truth poses: {v['rmse_truth_poses']:.4g} m)" if "rmse_truth_poses" in v else ""
        print(f"pair {k}: merge RMSE {v['rmse']:.4g} m{extra}")
    return EXIT_OK


def cmd_report(args) -> int:
    summary = {"tool": "geomag-align", "version": __version__, "reports": {}}
    for p in args.reports:
        d = read_json(p)
        summary["reports"][str(p)] = {
            "command": d.get("command"),
            "sha256": sha256_file(p),
            "sensors": d.get("sensors"),
            "pairs": d.get("pairs"),
        }
        print(f"{p}: {d.get('command', '?')}")
        for sid, e in (d.get("sensors") or {}).items():
            keys = [k for k in ("epsilon", "sphere_coverage", "status", "rmse_ratio", "final_position") if k in e]
            print("  sensor " + sid + ": " + ", ".join(f"{k}={e[k]}" for k in keys))
        for k, e in (d.get("pairs") or {}).items():
            print(f"  pair {k}: rmse={e['rmse']:.4g} m")
    if args.out:
        write_json(args.out, summary)
    return EXIT_OK


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geomag-align", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesise an IMU trace and ground truth from a config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="trace JSONL")
    s.add_argument("--truth", help="ground-truth JSONL (default: <out>_truth.jsonl)")
    s.add_argument("--clouds", help="directory for per-sensor point clouds and clouds.json")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="fit hard/soft-iron calibration per sensor")
    c.add_argument("trace")
    c.add_argument("--config", help="run config; its field strength at the origin fixes the calibration scale")
    c.add_argument("--field-magnitude", type=float, help="known field strength [uT] (overrides --config)")
    c.add_argument("--seed", type=int)
    c.add_argument("--out", required=True, help="calibration JSON")
    c.add_argument("--report", help="report JSON (default: <out>_report.json)")
    c.set_defaults(func=cmd_calibrate)

    f = sub.add_parser("fuse", help="initialise, anchor in the WCS and navigate every sensor")
    f.add_argument("trace")
    f.add_argument("--cal", help="calibration JSON from 'calibrate'")
    f.add_argument("--config", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--truth", help="ground truth JSONL; adds RMSE with filters on and off to the report")
    f.add_argument("--out", required=True, help="pose JSONL")
    f.set_defaults(func=cmd_fuse)

    a = sub.add_parser("align", help="merge per-sensor point clouds in the WCS and score them")
    a.add_argument("--poses", required=True)
    a.add_argument("--clouds", help="clouds.json manifest")
    a.add_argument("--cloud", action="append", help="ID=PATH[@T], repeatable")
    a.add_argument("--truth", help="ground truth JSONL for a reference merge")
    a.add_argument("--anchor", help="anchor JSON (default: <poses>_anchor.json)")
    a.add_argument("--config")
    a.add_argument("--seed", type=int)
    a.add_argument("--out", required=True, help="merged cloud (.xyz or .ply)")
    a.add_argument("--report")
    a.set_defaults(func=cmd_align)

    r = sub.add_parser("report", help="summarise report JSON files")
    r.add_argument("reports", nargs="+")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("GEOMAG_ALIGN_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceParseError, ContractViolation, InsufficientDataError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except GeomagError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
