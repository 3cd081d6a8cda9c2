import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
import yaml

from attitude_bench import models as M
from attitude_bench.models import ConfigError

DEG = math.pi / 180


@pytest.mark.parametrize(
    "value, power, expected",
    [
        (30, 0, 30 * DEG),
        (30.0, 0, 30 * DEG),
        ("30 deg", 0, 30 * DEG),
        ("0.5 rad", 0, 0.5),
        ("25 deg/s", 1, 25 * DEG),
        ("0.31623 urad/s", 1, 0.31623e-6),
        ("0.31623 µrad/s", 1, 0.31623e-6),
        ("0.1 deg/s^2", 2, 0.1 * DEG),
        ("0.1 deg/s2", 2, 0.1 * DEG),
        ("0.031623 nrad/s^2", 2, 0.031623e-9),
        ("2 mrad", 0, 2e-3),
    ],
)
def test_parse_quantity(value, power, expected):
    assert M.parse_quantity(value, power) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize(
    "value, power",
    [("25 deg", 1), ("25 deg/s", 0), ("0.1 deg/s", 2), ("3 furlong", 0), ("abc", 0), (None, 0), (True, 0), ("1.2.3 deg", 0)],
)
def test_parse_quantity_rejects(value, power):
    with pytest.raises(ConfigError):
        M.parse_quantity(value, power)


def test_case1_preset_values(case1):
    assert case1.dt == 0.001 and case1.horizon == 50.0
    assert case1.n_steps == 50_000
    assert case1.gyro_noise_std == pytest.approx(25 * DEG)
    assert case1.bias_walk_std == pytest.approx(0.1 * DEG)
    assert case1.meas_noise_std == pytest.approx((30 * DEG, 30 * DEG))
    assert case1.init_angle_std == pytest.approx(60 * DEG)
    assert case1.init_bias_std == pytest.approx(20 * DEG)
    np.testing.assert_array_equal(case1.refs, [[1, 0, 0], [0, 1, 0]])
    assert case1.tuning == M.Tuning(1.0, 1.0, 1.0, 0.3)


def test_case2_preset_values(case2):
    assert case2.gyro_noise_std == pytest.approx(0.31623e-6)
    assert case2.bias_walk_std == pytest.approx(0.031623e-9)
    assert case2.meas_noise_std == pytest.approx((DEG, DEG))
    assert case2.tuning == M.Tuning(1e-1, 1e-9, 10.0, 2.0)
    np.testing.assert_allclose(M.true_omega(37.5, case2), [DEG, -DEG, DEG], atol=1e-15)


def test_model_matrices(case1):
    np.testing.assert_allclose(case1.Q_omega, (25 * DEG) ** 2 * np.eye(3))
    np.testing.assert_allclose(case1.Q_bias, (0.1 * DEG) ** 2 * np.eye(3))
    assert len(case1.R) == 2
    np.testing.assert_allclose(case1.R[1], (30 * DEG) ** 2 * np.eye(3))


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        M.preset_scenario("case9")


def _raw():
    return {
        "dt": 0.01,
        "horizon": 1.0,
        "input_profile": "uav_sinusoid",
        "gyro_noise_std": "1 deg/s",
        "bias_walk_std": "0.1 deg/s^2",
        "meas_noise_std": ["5 deg", "5 deg"],
        "reference_dirs": [[1, 0, 0], [0, 0, 1]],
        "init_angle_std": 10,
        "init_bias_std": "1 deg/s",
    }


def test_scenario_from_dict_defaults():
    cfg = M.scenario_from_dict(_raw())
    assert cfg.bias_enabled and cfg.tuning == M.Tuning()
    assert cfg.n_steps == 100


def test_scalar_meas_std_broadcasts():
    raw = _raw() | {"meas_noise_std": "2 deg"}
    assert M.scenario_from_dict(raw).meas_noise_std == pytest.approx((2 * DEG, 2 * DEG))


@pytest.mark.parametrize(
    "patch, match",
    [
        ({"dt": -1.0}, "positive"),
        ({"reference_dirs": [[1, 1, 0], [0, 0, 1]]}, "unit"),
        ({"reference_dirs": []}, "at least one"),
        ({"meas_noise_std": ["1 deg"] * 3}, "one measurement noise"),
        ({"gyro_noise_std": "-1 deg/s"}, "non-negative"),
        ({"extra": 1}, "unknown scenario keys"),
        ({"input_profile": "zigzag"}, "unknown input profile"),
        ({"input_profile": {"amplitudes": [1, 1], "periods": [1, 1]}}, "three"),
        ({"tuning": {"cgo_kq": 1}}, "cgo_kq"),
    ],
)
def test_scenario_validation(patch, match):
    with pytest.raises(ConfigError, match=match):
        M.scenario_from_dict(_raw() | patch)


def test_missing_key():
    raw = _raw()
    del raw["dt"]
    with pytest.raises(ConfigError, match="missing keys: dt"):
        M.scenario_from_dict(raw)


def test_single_reference_direction_warns():
    raw = _raw() | {"reference_dirs": [[1, 0, 0]], "meas_noise_std": ["5 deg"]}
    with pytest.warns(UserWarning, match="unobservable"):
        M.scenario_from_dict(raw)


def test_custom_profile():
    raw = _raw() | {"input_profile": {"amplitudes": ["1 rad/s", 0, 0], "periods": [4, 1, 1]}}
    cfg = M.scenario_from_dict(raw)
    np.testing.assert_allclose(M.true_omega(1.0, cfg), [1.0, 0.0, 0.0], atol=1e-15)


def test_load_scenario_roundtrip(tmp_path):
    p = tmp_path / "mine.yaml"
    p.write_text(yaml.safe_dump(_raw()))
    cfg = M.load_scenario(p)
    assert cfg.name == "mine"
    assert cfg.gyro_noise_std == pytest.approx(DEG)


def test_load_scenario_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        M.load_scenario(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("dt: [unclosed")
    with pytest.raises(ConfigError, match="not valid YAML"):
        M.load_scenario(bad)
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        M.load_scenario(bad)


def test_uav_input_matches_closed_form(case1):
    t = np.array([0.0, 1.3, 7.9])
    expected = np.stack(
        [np.sin(2 * np.pi * t / 15), -np.sin(2 * np.pi * t / 18 + np.pi / 20), np.cos(2 * np.pi * t / 17)], axis=-1
    )
    np.testing.assert_allclose(M.true_omega(t, case1), expected, atol=1e-15)


def test_init_truth_statistics(case1):
    rng = np.random.default_rng(7)
    draws = [M.init_truth(case1, rng) for _ in range(4000)]
    angles = np.array([2 * math.atan2(np.linalg.norm(s.q[1:]), s.q[0]) for s in draws])
    # |N(0, sigma^2)| has RMS sigma
    assert np.sqrt(np.mean(angles**2)) == pytest.approx(case1.init_angle_std, rel=0.05)
    b = np.array([s.b for s in draws])
    assert b.std() == pytest.approx(case1.init_bias_std, rel=0.05)
    assert all(abs(np.linalg.norm(s.q) - 1) < 1e-15 for s in draws[:50])


def test_init_truth_consumes_fixed_draws(case1):
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    M.init_truth(case1.with_bias(False), a)
    b.standard_normal(7)
    assert a.standard_normal() == b.standard_normal()


def test_zero_noise_measurements_are_exact(case1):
    quiet = replace(case1, gyro_noise_std=0.0, meas_noise_std=(0.0, 0.0))
    s = M.TruthState(q=np.array([1.0, 0, 0, 0]), b=np.array([0.1, 0.2, 0.3]), t=0.0)
    meas = M.sample_measurements(s, quiet, np.random.default_rng(0))
    np.testing.assert_allclose(meas.u, M.true_omega(0.0, quiet) + s.b, atol=0)
    np.testing.assert_allclose(meas.y, quiet.refs, atol=0)


def test_step_truth_advances_clock(short_case1):
    s = M.init_truth(short_case1, np.random.default_rng(0))
    for _ in range(3):
        s = M.step_truth(s, short_case1, np.random.default_rng(1))
    assert s.k == 3 and s.t == 3 * short_case1.dt


@pytest.mark.parametrize("bias", [True, False])
def test_simulate_matches_step_by_step_route(short_case1, bias):
    cfg = short_case1.with_bias(bias)
    traj = M.simulate(cfg, M.run_rng(11, 2))
    rng = M.run_rng(11, 2)
    s = M.init_truth(cfg, rng)
    meas = M.sample_measurements(s, cfg, rng)
    for k in range(cfg.n_steps + 1):
        if k:
            s = M.step_truth(s, cfg, rng)
            meas = M.sample_measurements(s, cfg, rng)
        np.testing.assert_array_equal(traj.q[k], s.q)
        np.testing.assert_array_equal(traj.b[k], s.b)
        np.testing.assert_array_equal(traj.u[k], meas.u)
        np.testing.assert_array_equal(traj.y[k], meas.y)


def test_simulate_shapes_and_norms(short_case1):
    traj = M.simulate(short_case1, M.run_rng(0, 0))
    n = short_case1.n_steps + 1
    assert traj.t.shape == (n,) and traj.q.shape == (n, 4) and traj.y.shape == (n, 2, 3)
    assert np.max(np.abs(np.linalg.norm(traj.q, axis=1) - 1)) < 1e-14


def test_bias_walk_statistics(case1):
    cfg = replace(case1, horizon=1.0)
    incr = []
    for i in range(200):
        traj = M.simulate(cfg, M.run_rng(5, i))
        incr.append(np.diff(traj.b, axis=0))
    incr = np.concatenate(incr)
    assert incr.std() == pytest.approx(cfg.dt * cfg.bias_walk_std, rel=0.02)


def test_run_rng_streams():
    a = M.run_rng(42, 0).standard_normal(5)
    np.testing.assert_array_equal(a, M.run_rng(42, 0).standard_normal(5))
    assert not np.array_equal(a, M.run_rng(42, 1).standard_normal(5))
    assert not np.array_equal(a, M.run_rng(43, 0).standard_normal(5))


def test_no_bias_truth_has_zero_bias(short_case1):
    traj = M.simulate(short_case1.with_bias(False), M.run_rng(0, 0))
    assert not traj.b.any()


def test_warning_free_presets():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        M.preset_scenario("case1_uav")
        M.preset_scenario("case2_satellite")
