import numpy as np
import pytest

from conftest import random_unit_quats
from geomag_align.errors import ContractViolation
from geomag_align.geometry import (
    quat_from_axis_angle,
    quat_to_rotation,
    rot_z,
    rotation_angle_between,
    rotation_to_euler,
)
from geomag_align.sim import Circle, Line, synthesize_trace, UniformField, earth_field
from geomag_align.strapdown import (
    EARTH_RATE,
    EnvironmentConstants,
    ImuSample,
    PoseState,
    SensorNoiseModel,
    centrifugal_term,
    coriolis_term,
    correct_acceleration,
    dead_reckon,
    propagate_attitude,
    propagate_velocity_position,
)

NO_EARTH = EnvironmentConstants(earth_rate_magnitude=0.0)
LEVEL_F = np.array([0.0, 0.0, 9.81])


def samples(acc, n, dt, gyro=(0.0, 0.0, 0.0)):
    return [ImuSample(k * dt, acc, gyro, [0.0, 0.0, 0.0]) for k in range(n)]


def test_environment_defaults():
    env = EnvironmentConstants()
    assert np.linalg.norm(env.gravity) == pytest.approx(9.81, abs=1e-6)
    assert np.linalg.norm(env.earth_rate) == pytest.approx(7.29e-5, abs=1e-9)
    env45 = EnvironmentConstants(latitude=np.radians(45))
    np.testing.assert_allclose(env45.earth_rate, EARTH_RATE * np.array([1, 0, 1]) / np.sqrt(2))
    rotated = env45.expressed_in(rot_z(0.3))
    np.testing.assert_allclose(rotated.earth_rate, rot_z(0.3) @ env45.earth_rate)


def test_pose_state_contract():
    with pytest.raises(ContractViolation):
        PoseState(0.0, q=[1.0, 0.1, 0.0, 0.0])
    with pytest.raises(ContractViolation):
        ImuSample(np.nan, [0, 0, 0], [0, 0, 0], [0, 0, 0])
    with pytest.raises(ContractViolation):
        SensorNoiseModel(gyro_sigma=-1.0)


def test_zero_gyro_keeps_attitude():
    st = PoseState(1.0, q=quat_from_axis_angle([1, 0, 0], 0.3))
    nxt = propagate_attitude(st, [0, 0, 0], 0.01)
    np.testing.assert_allclose(nxt.q, st.q, atol=1e-15)
    assert nxt.t == pytest.approx(1.01)


def test_constant_yaw_rate_closed_form():
    st = PoseState(0.0)
    for _ in range(10000):
        st = propagate_attitude(st, [0, 0, np.pi / 2], 1e-4)
    assert np.degrees(rotation_to_euler(st.R).yaw) == pytest.approx(90.0, abs=0.01)


def test_forward_then_reverse_is_identity():
    st = PoseState(0.0)
    for w in (0.7, -0.7):
        for _ in range(200):
            st = propagate_attitude(st, [w, 0, 0], 0.01)
    assert np.degrees(rotation_angle_between(st.R, np.eye(3))) < 0.01


def test_dt_guards():
    st = PoseState(0.0)
    for dt in (0.0, -0.01, 0.2):
        with pytest.raises(ContractViolation):
            propagate_attitude(st, [0, 0, 1], dt)


def _yaw_error(dt, rate=2.0, T=1.0):
    st = PoseState(0.0)
    for _ in range(int(round(T / dt))):
        st = propagate_attitude(st, [0.3 * rate, -0.2 * rate, rate], dt)
    axis = np.array([0.3, -0.2, 1.0])
    exact = quat_to_rotation(quat_from_axis_angle(axis / np.linalg.norm(axis), np.linalg.norm(axis) * rate * T))
    return rotation_angle_between(st.R, exact)


def test_dt_refinement_convergence():
    errs = [_yaw_error(dt) for dt in (0.02, 0.01, 0.005)]
    assert errs[0] / errs[1] >= 1.9 and errs[1] / errs[2] >= 1.9


def test_norm_preserved_over_many_steps():
    rng = np.random.default_rng(0)
    st = PoseState(0.0)
    w = rng.standard_normal((1_000_000, 3)) * 2.0
    worst = 0.0
    for k in range(len(w)):
        st = propagate_attitude(st, w[k], 0.01)
        if k % 1000 == 0:
            worst = max(worst, abs(np.linalg.norm(st.q) - 1))
    assert worst < 1e-9 and abs(np.linalg.norm(st.q) - 1) < 1e-9


def test_correct_acceleration_examples():
    st = PoseState(0.0)
    np.testing.assert_allclose(correct_acceleration(st, LEVEL_F, NO_EARTH), 0, atol=1e-9)
    st = PoseState(0.0, v=[1, 0, 0])
    a = correct_acceleration(st, LEVEL_F, NO_EARTH, omega=[0, 0, 0.1])
    np.testing.assert_allclose(a, [0, 0.1, 0], atol=1e-12)


def _oracle_acc(q, v, f, g, w):
    w0, x, y, z = q
    R = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w0 * z), 2 * (x * z + w0 * y)],
            [2 * (x * y + w0 * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w0 * x)],
            [2 * (x * z - w0 * y), 2 * (y * z + w0 * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    wx = np.array([w[1] * v[2] - w[2] * v[1], w[2] * v[0] - w[0] * v[2], w[0] * v[1] - w[1] * v[0]])
    return R @ f + g + wx


def test_correct_acceleration_dual_implementation(rng):
    for q in random_unit_quats(rng, 200):
        v, f, w = rng.standard_normal((3, 3)) * [[5], [10], [0.5]]
        got = correct_acceleration(PoseState(0.0, q=q, v=v), f, NO_EARTH, omega=w)
        np.testing.assert_allclose(got, _oracle_acc(q, v, f, NO_EARTH.gravity, w), atol=1e-12)


def test_gravity_cancellation_any_attitude(rng):
    g = NO_EARTH.gravity
    for q in random_unit_quats(rng, 500):
        R = quat_to_rotation(q)
        a = correct_acceleration(PoseState(0.0, q=q), R.T @ (-g), NO_EARTH)
        assert np.abs(a).max() < 1e-9


def test_coriolis_helpers():
    np.testing.assert_allclose(coriolis_term([0, 0, 1], [1, 0, 0]), [0, 1, 0])
    np.testing.assert_allclose(centrifugal_term([0, 0, 1], [1, 0, 0]), [1, 0, 0])


def test_gravity_only_stays_put():
    st = propagate_velocity_position(PoseState(0.0), samples(LEVEL_F, 201, 0.01), NO_EARTH)
    assert np.abs(st.s).max() < 1e-9 and np.abs(st.v).max() < 1e-9


def test_constant_acceleration_closed_form():
    st = propagate_velocity_position(PoseState(0.0), samples([1.0, 0, 9.81], 201, 0.01), NO_EARTH)
    assert st.s[0] == pytest.approx(2.0, abs=1e-3)
    assert st.v[0] == pytest.approx(2.0, abs=1e-9)
    assert st.t == pytest.approx(2.0)


def test_window_ordering_and_gaps():
    bad = samples(LEVEL_F, 3, 0.01)
    bad[2] = ImuSample(0.005, LEVEL_F, [0, 0, 0], [0, 0, 0])
    with pytest.raises(ContractViolation, match="time-ordered"):
        propagate_velocity_position(PoseState(0.0), bad, NO_EARTH)
    gap = samples(LEVEL_F, 2, 0.5)
    with pytest.raises(ContractViolation, match="gap"):
        propagate_velocity_position(PoseState(0.0), gap, NO_EARTH)
    with pytest.raises(ContractViolation):
        propagate_velocity_position(PoseState(0.0), [], NO_EARTH)


def test_earth_rate_correction_bound(rng):
    env = EnvironmentConstants(latitude=np.radians(30))
    for _ in range(50):
        v0 = rng.uniform(-1, 1, 3)
        v0 *= rng.uniform(0, 30) / np.linalg.norm(v0)
        f = rng.standard_normal(3) + LEVEL_F
        win = samples(f, 2, 0.01)
        with_e = propagate_velocity_position(PoseState(0.0, v=v0), win, env)
        without = propagate_velocity_position(PoseState(0.0, v=v0), win, NO_EARTH)
        correction = np.linalg.norm(with_e.v - without.v)
        assert correction <= 2 * EARTH_RATE * np.linalg.norm(v0) * 0.01 + 1e-15


def test_dead_reckon_stationary():
    out = dead_reckon(samples(LEVEL_F, 1001, 0.01), PoseState(0.0), NO_EARTH)
    assert len(out) == 1001
    assert np.linalg.norm(out[-1].s) < 1e-6


def test_dead_reckon_stationary_with_earth_rate():
    env = EnvironmentConstants(latitude=np.radians(50))
    tr = samples(LEVEL_F, 1001, 0.01, gyro=env.earth_rate)
    out = dead_reckon(tr, PoseState(0.0), env)
    assert np.linalg.norm(out[-1].s) < 1e-6
    assert rotation_angle_between(out[-1].R, np.eye(3)) < 1e-12


def test_dead_reckon_circle_lap():
    traj = Circle(radius=2.0, speed=0.5, sample_rate_hz=200.0)
    tr, truth = synthesize_trace(traj, UniformField(earth_field()))
    out = dead_reckon(tr, truth.pose(0), NO_EARTH)
    assert np.linalg.norm(out[-1].s - truth.position[-1]) < 0.01


@pytest.mark.parametrize(
    "traj",
    [Line(velocity=np.array([0.8, 0.3, 0.0]), length_s=60.0, sample_rate_hz=200.0),
     Circle(radius=2.0, speed=0.5, length_s=60.0, sample_rate_hz=200.0)],
    ids=["line", "circle"],
)
def test_zero_noise_roundtrip_60s(traj):
    tr, truth = synthesize_trace(traj, UniformField(earth_field()))
    out = dead_reckon(tr, truth.pose(0), NO_EARTH)
    assert np.linalg.norm(out[-1].s - truth.position[-1]) < 0.01


def test_dead_reckon_attaches_timestamp():
    tr = samples(LEVEL_F, 5, 0.01)
    tr[3] = ImuSample(0.5, LEVEL_F, [0, 0, 0], [0, 0, 0])
    with pytest.raises(ContractViolation):
        dead_reckon(tr, PoseState(0.0), NO_EARTH)
    with pytest.raises(ContractViolation):
        dead_reckon([], PoseState(0.0), NO_EARTH)


def test_dead_reckon_covariance_psd():
    rng = np.random.default_rng(1)
    noise = SensorNoiseModel(gyro_sigma=0.01, acc_sigma=0.05)
    tr = [ImuSample(k * 0.01, LEVEL_F + rng.standard_normal(3) * 0.05, rng.standard_normal(3) * 0.01, [0, 0, 0])
          for k in range(500)]
    out = dead_reckon(tr, PoseState(0.0), NO_EARTH, noise=noise)
    P = out[-1].cov
    np.testing.assert_allclose(P, P.T, atol=1e-12)
    assert np.linalg.eigvalsh(P).min() >= -1e-9
    assert P[6, 6] > P[3, 3] * 0 and P[6, 6] > 0


def test_random_walk_matches_prediction():
    sigma, dt, T = 0.05, 0.01, 10.0
    n = int(T / dt) + 1
    errs = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        tr = [ImuSample(k * dt, LEVEL_F + sigma * rng.standard_normal(3) * [1, 0, 0], [0, 0, 0], [0, 0, 0])
              for k in range(n)]
        errs.append(abs(propagate_velocity_position(PoseState(0.0), tr, NO_EARTH).s[0]))
    predicted = sigma * np.sqrt(dt) * T**1.5 / np.sqrt(3)
    med = np.median(errs)
    assert predicted / 3 < med < 3 * predicted
