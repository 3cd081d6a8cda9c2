from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from attitude_bench import bench as B
from attitude_bench.filters import FilterKind, init_state, step
from attitude_bench.geom3 import geodesic_angle
from attitude_bench.models import run_rng, simulate


def _result(angle, bias=None, diverged=False):
    angle = np.asarray(angle, dtype=float)
    bias = np.zeros_like(angle) if bias is None else np.asarray(bias, dtype=float)
    return B.RunResult(angle, bias, diverged, 0.0, 0.0)


def test_rms_hand_arithmetic():
    t = np.array([0.0, 1.0])
    runs = [{"F": _result([v, v])} for v in (3.0, 4.0, 0.0, 0.0)]
    tr = B.aggregate(t, runs, ["F"])
    np.testing.assert_allclose(tr.angle_rms_deg["F"], [2.5, 2.5])


def test_single_run_rms_is_absolute_error():
    err = np.array([1.0, 2.0, 0.5])
    tr = B.aggregate(np.arange(3.0), [{"F": _result(err, -err)}], ["F"])
    np.testing.assert_array_equal(tr.angle_rms_deg["F"], err)
    np.testing.assert_array_equal(tr.bias_rms_degps["F"], err)


def test_diverged_runs_are_excluded_and_counted():
    runs = [{"F": _result([3.0])}, {"F": _result([np.nan], diverged=True)}]
    tr = B.aggregate(np.zeros(1), runs, ["F"])
    assert tr.diverged_runs["F"] == 1
    np.testing.assert_array_equal(tr.angle_rms_deg["F"], [3.0])


def test_all_diverged_raises():
    runs = [{"F": _result([1.0], diverged=True)}] * 3
    with pytest.raises(B.AllRunsDiverged, match="F"):
        B.aggregate(np.zeros(1), runs, ["F"])


series = st.lists(st.floats(0, 1e3, allow_nan=False), min_size=4, max_size=4)


@given(st.lists(series, min_size=1, max_size=6), st.randoms())
def test_aggregation_is_order_independent(values, rnd):
    runs = [{"F": _result(v)} for v in values]
    shuffled = list(runs)
    rnd.shuffle(shuffled)
    a = B.aggregate(np.arange(4.0), runs, ["F"]).angle_rms_deg["F"]
    b = B.aggregate(np.arange(4.0), shuffled, ["F"]).angle_rms_deg["F"]
    np.testing.assert_array_equal(a, b)


@given(st.lists(series, min_size=1, max_size=6), st.floats(1.0, 10.0), st.integers(0, 5))
def test_scaling_one_run_never_lowers_rms(values, alpha, which):
    which %= len(values)
    runs = [{"F": _result(v)} for v in values]
    scaled = list(runs)
    scaled[which] = {"F": _result(alpha * np.asarray(values[which]))}
    a = B.aggregate(np.arange(4.0), runs, ["F"]).angle_rms_deg["F"]
    b = B.aggregate(np.arange(4.0), scaled, ["F"]).angle_rms_deg["F"]
    assert np.all(b >= a)


def _trace(values, dt=1.0):
    t = np.arange(len(values)) * dt
    v = np.asarray(values, dtype=float)
    return B.ErrorTrace(t, {"F": v}, {"F": 2 * v}, {"F": 0})


def test_asymptotic_stat_constant():
    assert B.asymptotic_stat(_trace([7.0] * 11), window=3.0) == {"F": 7.0}


def test_asymptotic_stat_window_covers_all_but_first():
    tr = _trace([100.0, 1.0, 2.0, 3.0], dt=0.5)
    assert B.asymptotic_stat(tr, window=1.5 - 0.5)["F"] == pytest.approx(2.0)
    assert B.asymptotic_stat(tr, window=1.0, metric="bias")["F"] == pytest.approx(4.0)


@pytest.mark.parametrize("window", [0.0, 10.0, 11.0])
def test_asymptotic_stat_rejects_bad_window(window):
    with pytest.raises(ValueError):
        B.asymptotic_stat(_trace([1.0] * 11), window=window)


def test_value_at():
    assert B.value_at(_trace([0.0, 1.0, 2.0]), 1.1) == {"F": 1.0}


# -- specs -------------------------------------------------------------------


def test_spec_validation(short_case1):
    fs = B.standard_filters(short_case1, kinds=("GAME",))
    with pytest.raises(ValueError, match="repeats"):
        B.ExperimentSpec(short_case1, fs, repeats=0)
    with pytest.raises(ValueError, match="unique"):
        B.ExperimentSpec(short_case1, fs + fs)
    with pytest.raises(ValueError, match="at least one"):
        B.ExperimentSpec(short_case1, ())
    with pytest.raises(ValueError, match="unknown filter"):
        B.ExperimentSpec(short_case1, fs, gain_scale=B.GainScale("MEKF", "P_a", 2.0))
    with pytest.raises(ValueError, match="block"):
        B.ExperimentSpec(short_case1, fs, gain_scale=B.GainScale("GAME", "Q", 2.0))


@pytest.mark.parametrize("block, field", [("P_a", "gain_scale_a"), ("P_c", "gain_scale_c")])
def test_gain_scale_resolution(short_case1, block, field):
    fs = B.standard_filters(short_case1, kinds=("GAME", "MEKF"))
    spec = B.ExperimentSpec(short_case1, fs, gain_scale=B.GainScale("GAME", block, 30.0))
    game, mekf = spec.resolved_filters()
    assert getattr(game.config, field) == 30.0
    assert getattr(mekf.config, field) == 1.0


def test_gain_scale_pb_scales_initial_gain(short_case1):
    fs = B.standard_filters(short_case1, kinds=("GAME",))
    spec = B.ExperimentSpec(short_case1, fs, gain_scale=B.GainScale("GAME", "P_b", 4.0))
    np.testing.assert_allclose(spec.resolved_filters()[0].config.Pb0, 4.0 * fs[0].config.Pb0)


def test_with_filters(short_case1):
    spec = B.ExperimentSpec(short_case1, B.standard_filters(short_case1))
    assert [f.label for f in spec.with_filters(["CGO", "GAME"]).filters] == ["GAME", "CGO"]
    with pytest.raises(ValueError, match="XYZ"):
        spec.with_filters(["XYZ"])


def test_presets():
    ex = B.preset_experiments()
    assert set(ex) == {"case1", "case2", "case1_nobias", "case1_game_x30", "case1_riekf_variants"}
    assert ex["case1"].repeats == 20 and ex["case2"].repeats == 1
    assert ex["case1"].scenario.gyro_noise_std == pytest.approx(np.radians(25))
    assert ex["case2"].scenario.gyro_noise_std == pytest.approx(0.31623e-6)
    cgo = {f.label: f for f in ex["case1"].filters}["CGO"].config
    assert (cgo.cgo_kp, cgo.cgo_ki) == (1.0, 0.3)
    gs = ex["case1_game_x30"].gain_scale
    assert (gs.label, gs.block, gs.factor) == ("GAMEx30", "P_a", 30.0)
    variants = [f.config.riekf_variant for f in ex["case1_riekf_variants"].filters]
    assert variants == ["corrected", "original"]
    assert not ex["case1_nobias"].scenario.bias_enabled
    assert not any(f.config.bias_enabled for f in ex["case1_nobias"].filters)


def test_information_and_covariance_forms_differ():
    c1 = B.preset_experiments()["case1"]
    cfg = {f.label: f.config for f in c1.filters}
    v = c1.scenario.init_angle_std**2
    np.testing.assert_allclose(cfg["USQUE"].Pa0, v * np.eye(3))
    for label in ("GAME", "MEKF", "RIEKF"):
        np.testing.assert_allclose(cfg[label].Pa0, np.eye(3) / v)


def test_nobias_usque_r_matches_riccati_balance():
    ex = B.preset_experiments()["case1_nobias"]
    cfg = {f.label: f.config for f in ex.filters}
    factor = B.usque_matched_r_factor(ex.scenario.dt)
    assert factor == pytest.approx(500.0)
    np.testing.assert_allclose(cfg["USQUE"].R[0], factor * cfg["GAME"].R[0])


# -- runs --------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny(short_case1):
    return B.ExperimentSpec(replace(short_case1, horizon=0.5), B.standard_filters(short_case1), repeats=3, master_seed=9)


@pytest.mark.parametrize("kind", list(FilterKind))
def test_run_loop_matches_public_steppers(tiny, kind):
    """The compiled run loops and the public steppers produce the same errors."""
    spec = tiny.with_filters([kind.value])
    traj = simulate(spec.scenario, run_rng(spec.master_seed, 1))
    fspec = spec.filters[0]
    got = B.run_single(spec, 1)[kind.value]
    s = init_state(kind, fspec.config)
    angles = [geodesic_angle(s.q, traj.q[0])]
    for k in range(spec.scenario.n_steps):
        ys = traj.y[k + 1] if kind is FilterKind.USQUE else traj.y[k]
        s = step(kind, s, traj.u[k], ys, fspec.config, spec.scenario.dt)
        angles.append(geodesic_angle(s.q, traj.q[k + 1]))
    np.testing.assert_allclose(got.angle_deg, angles, rtol=0, atol=1e-12)
    assert not got.diverged


def test_run_single_is_deterministic(tiny):
    a, b = B.run_single(tiny, 2), B.run_single(tiny, 2)
    for label in a:
        np.testing.assert_array_equal(a[label].angle_deg, b[label].angle_deg)
        np.testing.assert_array_equal(a[label].bias_degps, b[label].bias_degps)


def test_identical_filters_get_identical_streams(tiny):
    game = tiny.filters[0]
    spec = replace(tiny, filters=(game, replace(game, label="GAME2")))
    out = B.run_single(spec, 0)
    np.testing.assert_array_equal(out["GAME"].angle_deg, out["GAME2"].angle_deg)


def test_run_index_range(tiny):
    with pytest.raises(ValueError):
        B.run_single(tiny, 3)


def test_monte_carlo_schedule_independent(tiny):
    seq = B.run_monte_carlo(tiny)
    par = B.run_monte_carlo(tiny, workers=3)
    rev = B.run_monte_carlo(tiny, run_indices=[2, 0, 1])
    for label in seq.labels:
        np.testing.assert_array_equal(seq.angle_rms_deg[label], par.angle_rms_deg[label])
        np.testing.assert_array_equal(seq.angle_rms_deg[label], rev.angle_rms_deg[label])
        np.testing.assert_array_equal(seq.bias_rms_degps[label], par.bias_rms_degps[label])
    assert seq.time.shape == (tiny.scenario.n_steps + 1,)
    assert seq.repeats == 3


def test_zero_noise_perfect_init_is_exact(tiny):
    sc = replace(tiny.scenario, gyro_noise_std=0.0, bias_walk_std=0.0, meas_noise_std=(0.0, 0.0))
    spec = replace(tiny, scenario=sc, filters=tiny.resolved_filters(), perfect_init=True, repeats=1)
    for label, r in B.run_single(spec, 0).items():
        tol = 1e-3 if label == "USQUE" else 1e-9
        assert np.max(r.angle_deg) < tol, label


def test_divergence_is_flagged(tiny):
    game = tiny.filters[0]
    bad = replace(game, config=replace(game.config, Pa0=np.full((3, 3), np.nan)), label="BAD")
    spec = replace(tiny, filters=(game, bad))
    out = B.run_single(spec, 0)
    assert out["BAD"].diverged and not out["GAME"].diverged
    with pytest.raises(B.AllRunsDiverged, match="BAD"):
        B.run_monte_carlo(spec)
