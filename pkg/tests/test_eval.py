import math

import numpy as np
import pytest

from floresim.eval import (REFERENCE_RADII, TELEMETRY_COLUMNS, ExperimentReport, HeadingController,
                           PIDGains, PIDState, ProtocolSettings, TelemetryRecord, UndefinedCoTError,
                           circle_target, compare, compare_many, comparison_table, course_waypoints,
                           cot, detect_spikes, instantaneous_cot, pid_heading, read_telemetry,
                           reference_annotations, required_yaw_rate, run_circle, run_lateral,
                           run_straight_line, telemetry_csv, wrap_angle, write_telemetry)
from floresim.eval.plots import plot_cot_series, plot_cot_vs_speed, write_cot_vs_speed, write_series_data

import oracles


def record(tau, qd, speed=1.0, t=0.0):
    tau = np.asarray(tau, dtype=float)
    qd = np.asarray(qd, dtype=float)
    return TelemetryRecord(t, tau, qd, np.zeros(3), speed, 0.0, np.zeros(3), np.ones(4))


def padded(product):
    tau = np.zeros(16)
    qd = np.zeros(16)
    tau[0], qd[0] = product, 1.0
    return tau, qd


def random_window(rng, n=None):
    n = n or int(rng.integers(1, 60))
    return [record(rng.normal(scale=10, size=16), rng.normal(scale=5, size=16),
                   rng.uniform(0.1, 2.0), 0.02 * k) for k in range(n)]


# ---------------------------------------------------------------------- cost of transport

def test_zero_torque():
    w = [record(np.zeros(16), np.ones(16), 1.0) for _ in range(5)]
    assert cot(w, 25.0) == 0.0


def test_negative_power_clipped_hand_value():
    # products (2, -1) W at m g v = 10: positive part averaged over the two records is 1 W
    w = [record(*padded(2.0)), record(*padded(-1.0))]
    assert cot(w, 10.0 / 9.81) == pytest.approx(0.1, rel=1e-12)


def test_mass_homogeneity():
    w = random_window(np.random.default_rng(0), 20)
    assert cot(w, 50.0) == pytest.approx(0.5 * cot(w, 25.0), rel=1e-12)


def test_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(100):
        w = random_window(rng)
        m = rng.uniform(10, 40)
        ref = oracles.cot([r.torques for r in w], [r.joint_velocities for r in w], [r.speed for r in w], m)
        assert cot(w, m) == pytest.approx(ref, rel=1e-12)


def test_time_reindexing_invariance():
    w = random_window(np.random.default_rng(2), 30)
    shifted = [TelemetryRecord(5.0 + 3 * r.time, r.torques, r.joint_velocities, r.base_position,
                               r.speed, r.heading, r.command, r.wheel_contact) for r in w]
    assert cot(shifted, 25.0) == cot(w, 25.0)


def test_negative_record_never_raises_numerator():
    rng = np.random.default_rng(3)
    for _ in range(50):
        w = random_window(rng)
        speed = w[0].speed
        w = [record(r.torques, r.joint_velocities, speed) for r in w]
        tau = rng.uniform(0.1, 5, 16)
        bad = record(tau, -rng.uniform(0.1, 5, 16), speed)
        num = lambda win: cot(win, 1.0) * 9.81 * speed * len(win)
        assert num(w + [bad]) <= num(w) + 1e-9


def test_undefined_cases():
    with pytest.raises(UndefinedCoTError):
        cot([], 25.0)
    with pytest.raises(UndefinedCoTError):
        cot([record(np.ones(16), np.ones(16), 0.01)], 25.0)


def test_instantaneous_series():
    w = random_window(np.random.default_rng(4), 17)
    s = instantaneous_cot(w, 25.0)
    assert len(s) == 17
    assert s[3] == pytest.approx(cot([w[3]], 25.0))
    stopped = instantaneous_cot([record(np.ones(16), np.ones(16), 0.0)], 25.0, speed_floor=0.05)
    assert np.isfinite(stopped).all()


# ---------------------------------------------------------------------- heading PID

def test_pid_zero_error():
    assert pid_heading(0.3, 0.3, PIDState(), PIDGains(), 0.02) == 0.0


def test_pid_pure_p():
    out = pid_heading(0.5, 0.0, PIDState(), PIDGains(kp=2.0, ki=0.0, kd=0.0), 0.02)
    assert out == pytest.approx(1.0)


def test_pid_wrap_symmetry():
    g = PIDGains(ki=0.0)
    a = pid_heading(math.pi, 0.0, PIDState(), g, 0.02)
    b = pid_heading(-math.pi, 0.0, PIDState(), g, 0.02)
    assert abs(a) == pytest.approx(abs(b))
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert -math.pi < wrap_angle(-math.pi) <= math.pi


def test_pid_integral_clamped():
    g = PIDGains(kp=0.0, ki=1.0, integral_limit=0.5)
    st = PIDState()
    for _ in range(1000):
        out = pid_heading(1.0, 0.0, st, g, 0.02)
    assert st.integral == 0.5 and out == pytest.approx(0.5)


def test_pid_rejects_negative_gains():
    with pytest.raises(ValueError):
        PIDGains(kp=-1.0)


def test_pid_derivative():
    g = PIDGains(kp=0.0, ki=0.0, kd=1.0)
    st = PIDState()
    pid_heading(0.0, 0.0, st, g, 0.1)
    assert pid_heading(0.2, 0.0, st, g, 0.1) == pytest.approx(2.0)


# ---------------------------------------------------------------------- geometry

def test_required_yaw_rate():
    assert required_yaw_rate(0.4, 1.0) == pytest.approx(0.4)
    assert required_yaw_rate(0.4, math.inf) == 0.0


def test_circle_tangent_heading():
    target = circle_target(1.0)
    # on the circle centred at (0, 1): start point heads along +x, top point along -x
    assert target(np.array([0.0, 0.0]), 0.0) == pytest.approx(0.0)
    assert abs(target(np.array([0.0, 2.0]), 0.0)) == pytest.approx(math.pi)
    # outside the circle the heading bends inwards
    assert target(np.array([0.0, -0.2]), 0.0) > 0


def test_course_has_seven_turns():
    wp = course_waypoints()
    legs = np.diff(wp, axis=0)
    assert len(wp) == 9
    np.testing.assert_allclose(np.linalg.norm(legs, axis=1), 2.0)
    headings = np.arctan2(legs[:, 1], legs[:, 0])
    turns = np.abs([wrap_angle(b - a) for a, b in zip(headings[:-1], headings[1:])])
    np.testing.assert_allclose(turns, math.pi / 2)
    assert len(turns) == 7


def test_spikes_found_near_each_turn():
    dt = 0.02
    t = (np.arange(1500) + 1) * dt
    turns = [3.0, 7.5, 12.0, 16.4, 20.0, 24.2, 28.0]
    series = 0.2 + 0.01 * np.sin(t)
    for tt in turns:
        series += 0.5 * np.exp(-((t - tt - 0.3) ** 2) / 0.02)
    spikes = detect_spikes(series, turns, dt)
    assert len(spikes) == 7
    for tt, s in zip(turns, spikes):
        assert abs(s["spike_time"] - tt) <= 1.0
        assert abs(s["spike_time"] - (tt + 0.3)) < 0.03


# ---------------------------------------------------------------------- reports

def report(cot_value, protocol="circle", params=None, morph="flores", seed=0):
    params = params if params is not None else {"radius": 0.5, "vx": 0.4}
    return ExperimentReport(protocol, params, morph, cot_value, [0.1, 0.2], seed=seed,
                            annotations=reference_annotations(protocol, params))


def test_annotations_are_flagged():
    rep = report(0.3)
    (ann,) = rep.annotations
    assert ann["hardware"] is True and ann["reproducible"] is False
    assert (ann["flores"], ann["baseline"]) == (0.24, 0.646)
    lat = reference_annotations("lateral", {"speed": 0.5})[0]
    assert (lat["flores"], lat["baseline"]) == (0.3614, 0.6995)
    assert set(REFERENCE_RADII) == {0.5, 1.0, 1.5, 2.0}


def test_compare_ratio():
    assert compare(report(0.3), report(0.6, morph="baseline")).ratio == pytest.approx(0.5)
    assert compare(report(0.3), report(0.3)).ratio == 1.0


def test_compare_refuses_mismatch():
    with pytest.raises(ValueError):
        compare(report(0.3), report(0.3, params={"radius": 1.0, "vx": 0.4}))
    with pytest.raises(ValueError):
        compare_many([report(0.3)], [report(0.3, protocol="lateral", params={"speed": 0.5})])


def test_comparison_table():
    rows = compare_many([report(0.3, seed=1)], [report(0.6, morph="baseline", seed=2)])
    lines = comparison_table(rows).splitlines()
    assert lines[0].split("\t")[:4] == ["protocol", "cot_a", "cot_b", "ratio"]
    assert lines[1].split("\t")[3] == "0.5000"


def test_report_round_trip(tmp_path):
    rep = report(0.25)
    rep.save(tmp_path / "r.json")
    assert ExperimentReport.load(tmp_path / "r.json") == rep


def test_negative_cot_rejected():
    with pytest.raises(ValueError):
        report(-0.1)


def test_plot_outputs(tmp_path):
    reps = [ExperimentReport("straight", {"speed": v, "terrain": "flat"}, m, 0.1 * v, [0.1, 0.3])
            for m in ("flores", "baseline") for v in (0.5, 1.0)]
    write_cot_vs_speed(reps, tmp_path / "c.dat")
    assert len((tmp_path / "c.dat").read_text().splitlines()) == 5
    assert plot_cot_vs_speed(reps, tmp_path / "c.png").stat().st_size > 0
    write_series_data(reps[0], tmp_path / "s.dat")
    data = np.loadtxt(tmp_path / "s.dat")
    np.testing.assert_allclose(data[:, 1], [0.1, 0.3])
    assert plot_cot_series(reps[:1], tmp_path / "s.png").stat().st_size > 0


# ---------------------------------------------------------------------- telemetry

def test_telemetry_columns_and_round_trip(tmp_path):
    assert len(TELEMETRY_COLUMNS) == 1 + 16 + 16 + 3 + 2 + 3 + 4
    assert TELEMETRY_COLUMNS[:2] == ["time", "tau_0"]
    recs = random_window(np.random.default_rng(5), 4)
    path = write_telemetry(recs, tmp_path / "t.csv", {"seed": 3})
    assert path.read_text().startswith("# seed=3\ntime,tau_0")
    again = read_telemetry(path)
    assert [r.row() for r in again] == [r.row() for r in recs]
    assert telemetry_csv(recs) == telemetry_csv(again)


# ---------------------------------------------------------------------- protocol runs

def wheels_only(states):
    """Scripted policy: hold the default pose and roll the wheels at the commanded speed."""
    cmd = states[:, 6:9]
    a = np.zeros((states.shape[0], 16))
    for k, side in enumerate((1.0, -1.0, 1.0, -1.0)):
        a[:, 12 + k] = (cmd[:, 0] - side * 0.37 * cmd[:, 2]) / 0.8
    return a


def test_straight_line_speed_range():
    with pytest.raises(ValueError):
        run_straight_line(wheels_only, "flores", speed=2.0)


def test_straight_line_run_is_reproducible():
    a = run_straight_line(wheels_only, "flores", speed=1.0, duration_s=4.0)
    b = run_straight_line(wheels_only, "flores", speed=1.0, duration_s=4.0)
    assert a.to_json() == b.to_json()
    assert a.aggregate_cot is not None and a.aggregate_cot >= 0 and a.complete
    assert len(a.cot_series) == 200
    assert a.tracking["lin_mean"] < 0.1


def test_standing_still_has_undefined_cot():
    rep = run_lateral(lambda s: np.zeros((s.shape[0], 16)), "flores", 0.5, duration_s=3.0)
    assert rep.aggregate_cot is None and "cot-undefined" in rep.flags


def test_circle_holds_path():
    rep = run_circle(wheels_only, "flores", 1.0)
    assert "path not held" not in rep.flags
    assert rep.path["mean_radial_deviation"] < 0.3
    assert rep.annotations[0]["flores"] == 0.18


def test_circle_flags():
    settings = ProtocolSettings(path_bound=1e-6)
    rep = run_circle(wheels_only, "flores", 0.7, settings=settings)
    assert "non-reference-radius" in rep.flags and "path not held" in rep.flags


def test_heading_controller_feedforward():
    ctrl = HeadingController(lambda p, t: 0.0, PIDGains(), 0.02, lambda p, t: 0.4)
    assert ctrl(np.zeros(3), 0.0, 0.0) == pytest.approx(0.4)
