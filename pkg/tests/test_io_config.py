import json

import numpy as np
import pytest

from geomag_align.config import DEFAULTS, build_config, load_config
from geomag_align.errors import ConfigError, TraceParseError
from geomag_align.io import (
    parse_trace_lines,
    read_poses,
    read_trace,
    read_truth,
    sha256_json,
    truth_rows,
    write_json,
    write_jsonl,
    write_trace,
)
from geomag_align.sim import Circle, LinearGradientField, Stationary, Tumble, UniformField, earth_field, synthesize_trace
from geomag_align.io import pose_row
from geomag_align.strapdown import PoseState

GOOD = '{"t": 0.0, "sensor": "1", "acc": [0, 0, 9.81], "gyro": [0, 0, 0], "mag": [25, 0, -43]}'


def line(**overrides):
    row = json.loads(GOOD)
    row.update(overrides)
    return json.dumps(row)


def test_parse_trace_groups_by_sensor():
    lines = [GOOD, line(sensor="2", t=0.0), line(t=0.01, extra="ignored"), "", line(sensor=3, t=1.0)]
    out = parse_trace_lines(lines)
    assert list(out) == ["1", "2", "3"]
    assert [s.t for s in out["1"]] == [0.0, 0.01]
    assert out["3"][0].sensor_id == "3"


@pytest.mark.parametrize(
    "bad,lineno,match",
    [
        ('{"t": 0.0, "sensor": "1", "acc": [0, 0, 9.81], "gyro": [0, 0, 0]}', 2, "mag"),
        (line(acc=[0, 0]), 2, "acc"),
        (line(gyro=["a", 0, 0]), 2, "gyro"),
        (line(t="soon"), 2, "'t'"),
        ('{"t": 0.1, "sensor": "1", "acc": [0, 0, NaN], "gyro": [0, 0, 0], "mag": [1, 2, 3]}', 2, "non-finite"),
        ("[1, 2, 3]", 2, "object"),
        ("{not json", 2, "invalid JSON"),
        (line(t=-1.0), 2, "decreases"),
    ],
)
def test_parse_trace_errors_have_line_numbers(bad, lineno, match):
    with pytest.raises(TraceParseError, match=match) as exc:
        parse_trace_lines([GOOD, bad])
    assert exc.value.line == lineno
    assert f"line {lineno}" in str(exc.value)


def test_trace_roundtrip(tmp_path):
    tr, _ = synthesize_trace(Circle(radius=1.0), LinearGradientField(earth_field(), np.eye(3)), sensor_id="a")
    path = tmp_path / "trace.jsonl"
    write_trace(path, tr)
    back = read_trace(path)["a"]
    assert len(back) == len(tr)
    for x, y in zip(tr, back):
        assert x.t == y.t
        np.testing.assert_array_equal(x.acc, y.acc)
        np.testing.assert_array_equal(x.mag, y.mag)


def test_truth_roundtrip(tmp_path):
    _, truth = synthesize_trace(Tumble(length_s=2.0), UniformField(earth_field()), sensor_id="s")
    path = tmp_path / "truth.jsonl"
    write_jsonl(path, truth_rows(truth))
    back = read_truth(path)["s"]
    np.testing.assert_array_equal(back["position"], truth.position)
    np.testing.assert_array_equal(back["B"], truth.field_nav)
    assert back["q"].shape == (len(truth), 4)


def test_pose_roundtrip(tmp_path):
    st = PoseState(1.5, q=[0.0, 1.0, 0.0, 0.0], v=[1, 2, 3], s=[4, 5, 6])
    path = tmp_path / "poses.jsonl"
    write_jsonl(path, [pose_row("x", st)])
    back = read_poses(path)["x"][0]
    np.testing.assert_array_equal(back.q, st.q)
    np.testing.assert_array_equal(back.s, st.s)


def test_atomic_write_leaves_no_temp(tmp_path):
    write_json(tmp_path / "a.json", {"b": np.arange(3), "a": np.float64(1.5)})
    assert [p.name for p in tmp_path.iterdir()] == ["a.json"]
    assert json.loads((tmp_path / "a.json").read_text()) == {"a": 1.5, "b": [0, 1, 2]}


def test_sha256_json_key_order():
    assert sha256_json({"a": 1, "b": 2}) == sha256_json({"b": 2, "a": 1})


# --- configuration ----------------------------------------------------------


def test_defaults():
    cfg = load_config(None)
    assert cfg.raw == build_config({}).raw
    assert cfg.filters["gate"] == DEFAULTS["filters"]["gate"]
    np.testing.assert_allclose(cfg.env.gravity, [0, 0, -9.81])
    assert cfg.env.earth_rate_magnitude == 0.0
    assert [s.id for s in cfg.sensors] == ["1"]
    assert cfg.distortion is None


def test_partial_override_keeps_defaults():
    cfg = build_config({"filters": {"q_acc": 0.2}, "environment": {"earth_rotation": True, "latitude_deg": 45}})
    assert cfg.filters["q_acc"] == 0.2
    assert cfg.filters["mag_sigma"] == 0.5
    np.testing.assert_allclose(np.linalg.norm(cfg.env.earth_rate), 7.29e-5)


@pytest.mark.parametrize(
    "user,path",
    [
        ({"filters": {"q_accc": 1.0}}, "filters.q_accc"),
        ({"filters": {"q_acc": "high"}}, "filters.q_acc"),
        ({"filters": {"enabled": 1}}, "filters.enabled"),
        ({"noise": {"acc_bias": [0, 0]}}, "noise.acc_bias"),
        ({"bogus": 1}, "bogus"),
        ({"sensors": [{"id": "1", "trajectory": {"type": "spiral"}}]}, "sensors[0].trajectory.type"),
        ({"sensors": [{"id": "1", "trajectory": {"type": "line", "radius": 1}}]}, "sensors[0].trajectory.radius"),
        ({"sensors": [{"id": "1"}, {"id": "1"}]}, "sensors[1].id"),
        ({"sensors": []}, "sensors"),
        ({"distortion": {"soft_iron": [[0, 0, 0], [0, 1, 0], [0, 0, 1]]}}, "distortion.soft_iron"),
        ({"field": {"type": "quadrupole"}}, "field"),
        ({"filters": {"gate": -1}}, "filters.gate"),
        ({"seed": -3}, "seed"),
    ],
)
def test_config_errors_name_the_path(user, path):
    with pytest.raises(ConfigError) as exc:
        build_config(user)
    assert exc.value.path == path


def test_load_config_files(tmp_path):
    toml = tmp_path / "c.toml"
    toml.write_text('seed = 5\n[[sensors]]\nid = "a"\ntrajectory = { type = "circle", radius = 3.0 }\n')
    cfg = load_config(toml)
    assert cfg.seed == 5 and cfg.sensors[0].trajectory.radius == 3.0
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"seed": 6, "field": {"type": "dipole", "location": [0, 0, -1], "moment": [0, 0, 1]}}))
    assert load_config(js).seed == 6
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = = 1\n")
    with pytest.raises(ConfigError, match="parse error"):
        load_config(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")


def test_distortion_becomes_calibration():
    cfg = build_config({"distortion": {"hard_iron": [1, 2, 3], "soft_iron": [[2, 0, 0], [0, 1, 0], [0, 0, 1]]}})
    np.testing.assert_allclose(cfg.distortion.C, np.diag([0.5, 1, 1]))
    np.testing.assert_allclose(cfg.distortion.apply(cfg.distortion.distort([1.0, 1.0, 1.0])), [1, 1, 1])


def test_trajectory_types_build():
    for kind in ("stationary", "line", "circle", "stairs", "waypoints", "tumble"):
        cfg = build_config({"sensors": [{"id": "1", "trajectory": {"type": kind}}]})
        assert cfg.sensors[0].trajectory.duration > 0
    cfg = build_config({"sensors": [{"trajectory": {"type": "stationary", "attitude": [0.1, 0.2, 0.3]}}]})
    assert isinstance(cfg.sensors[0].trajectory, Stationary)
    assert cfg.sensors[0].id == "1"
