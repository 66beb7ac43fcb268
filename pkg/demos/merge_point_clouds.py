"""From anchored poses to a merged point cloud.

Runs the whole command-line pipeline on the bundled configurations in a
temporary directory: calibrate the sweep, simulate the three-sensor scene,
fuse the traces into WCS poses and merge each sensor's point cloud. The
merge RMSE with estimated poses is compared to the one obtained with the
simulator's true poses, which only reflects point noise.

Run with ``python demos/merge_point_clouds.py``.
"""

import tempfile
from pathlib import Path

from geomag_align.cli import main
from geomag_align.io import read_json

configs = Path(__file__).resolve().parents[1] / "configs"

with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    for argv in (
        ["simulate", "--config", configs / "calibration.toml", "--out", d / "sweep.jsonl"],
        ["calibrate", d / "sweep.jsonl", "--config", configs / "calibration.toml", "--out", d / "cal.json"],
        ["simulate", "--config", configs / "scene.toml", "--out", d / "scene.jsonl", "--clouds", d],
        ["fuse", d / "scene.jsonl", "--cal", d / "cal.json", "--config", configs / "scene.toml",
         "--truth", d / "scene_truth.jsonl", "--out", d / "poses.jsonl"],
        ["align", "--poses", d / "poses.jsonl", "--clouds", d / "clouds.json",
         "--truth", d / "scene_truth.jsonl", "--out", d / "merged.ply"],
    ):
        print(f"\n$ geomag-align {argv[0]} ...")
        code = main([str(a) for a in argv])
        if code:
            raise SystemExit(code)

    anchor = read_json(d / "poses_anchor.json")
    print("\nsensor offsets in the WCS [m]:")
    for sid, e in anchor["sensors"].items():
        print(f"  {sid}: {[round(x, 4) for x in e['D_1n']]}")
