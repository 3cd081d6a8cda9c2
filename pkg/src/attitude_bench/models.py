"""Ground-truth rigid-body simulation and noisy gyro / direction sensors.

The true attitude follows ``dq/dt = 1/2 q (x) p(omega)`` with a sinusoidal
body rate, the gyro bias is a random walk, and each reference direction is
observed in the body frame with additive Gaussian noise. Noise is injected
once per discrete step with exactly the configured standard deviation.

Scenario values are stored in radians (rad, rad/s, rad/s^2) throughout;
unit strings such as ``"25 deg/s"`` or ``"0.31623 urad/s"`` are converted
once, when a scenario file is loaded.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from numba import njit

from .geom3 import quat_exp_step, quat_from_axis_angle, rotate_to_body


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


# ---------------------------------------------------------------------------
# Units
# ---------------------------------------------------------------------------

_ANGLE_UNITS = {
    "rad": 1.0,
    "mrad": 1e-3,
    "urad": 1e-6,
    "µrad": 1e-6,
    "nrad": 1e-9,
    "deg": math.pi / 180.0,
}
_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([a-zµ]+)\s*(/s\^?2|/s²|/s)?\s*$")


def parse_quantity(value: Any, time_power: int) -> float:
    """Convert ``value`` to radians per second**``time_power``.

    Bare numbers are read in degrees, matching how the benchmark tables are
    written. Strings carry an explicit unit, e.g. ``"0.1 deg/s^2"``.
    """
    if isinstance(value, bool):
        raise ConfigError(f"expected a quantity, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value) * math.pi / 180.0
    if not isinstance(value, str):
        raise ConfigError(f"expected a quantity, got {value!r}")
    m = _QUANTITY.match(value)
    if m is None:
        raise ConfigError(f"cannot parse quantity {value!r}")
    number, unit, suffix = m.group(1), m.group(2), m.group(3) or ""
    if unit not in _ANGLE_UNITS:
        raise ConfigError(f"unknown angle unit {unit!r} in {value!r}")
    if suffix.count("s") + ("2" in suffix or "²" in suffix) != time_power:
        raise ConfigError(f"{value!r} has the wrong time dimension (expected s^-{time_power})")
    try:
        return float(number) * _ANGLE_UNITS[unit]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number in {value!r}") from exc


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InputProfile:
    """Per-axis body rate ``amplitude * sin(2 pi t / period + phase)`` in rad/s."""

    kind: str
    amplitudes: tuple[float, float, float]
    periods: tuple[float, float, float]
    phases: tuple[float, float, float]

    @classmethod
    def uav_sinusoid(cls) -> InputProfile:
        # [sin(2pi t/15), -sin(2pi t/18 + pi/20), cos(2pi t/17)] rad/s
        return cls(
            "uav_sinusoid",
            (1.0, -1.0, 1.0),
            (15.0, 18.0, 17.0),
            (0.0, math.pi / 20.0, math.pi / 2.0),
        )

    @classmethod
    def sat_sinusoid(cls) -> InputProfile:
        # sin(2pi t/150) [1, -1, 1] deg/s
        a = math.pi / 180.0
        return cls("sat_sinusoid", (a, -a, a), (150.0, 150.0, 150.0), (0.0, 0.0, 0.0))


@dataclass(frozen=True)
class Tuning:
    """Initial filter gains relative to the initialisation statistics.

    The Riccati filters start from ``P_a(0) = pa0_factor / std_q0^2 I`` and
    ``P_b(0) = pb0_factor / std_b0^2 I``; the unscented filter always starts
    from the variances themselves.
    """

    riccati_pa0_factor: float = 1.0
    riccati_pb0_factor: float = 1.0
    cgo_kp: float = 1.0
    cgo_ki: float = 0.3


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    dt: float
    horizon: float
    input_profile: InputProfile
    gyro_noise_std: float  # rad/s
    bias_walk_std: float  # rad/s^2
    meas_noise_std: tuple[float, ...]  # rad, one per reference direction
    reference_dirs: tuple[tuple[float, float, float], ...]
    init_angle_std: float  # rad
    init_bias_std: float  # rad/s
    bias_enabled: bool = True
    tuning: Tuning = field(default_factory=Tuning)

    def __post_init__(self):
        if not self.dt > 0 or not self.horizon > 0:
            raise ConfigError("dt and horizon must be positive")
        stds = (self.gyro_noise_std, self.bias_walk_std, self.init_angle_std, self.init_bias_std)
        if any(not s >= 0 for s in stds + tuple(self.meas_noise_std)):
            raise ConfigError("standard deviations must be non-negative")
        if len(self.reference_dirs) == 0:
            raise ConfigError("at least one reference direction is required")
        if len(self.meas_noise_std) != len(self.reference_dirs):
            raise ConfigError("need one measurement noise std per reference direction")
        for d in self.reference_dirs:
            if len(d) != 3 or abs(math.sqrt(sum(c * c for c in d)) - 1.0) > 1e-9:
                raise ConfigError(f"reference direction {d} is not a unit 3-vector")
        if len(self.reference_dirs) == 1:
            warnings.warn("a single reference direction leaves the attitude unobservable", stacklevel=2)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def refs(self) -> np.ndarray:
        return np.array(self.reference_dirs, dtype=float)

    @property
    def Q_omega(self) -> np.ndarray:
        return self.gyro_noise_std**2 * np.eye(3)

    @property
    def Q_bias(self) -> np.ndarray:
        return self.bias_walk_std**2 * np.eye(3)

    @property
    def R(self) -> list[np.ndarray]:
        return [s**2 * np.eye(3) for s in self.meas_noise_std]

    def with_bias(self, enabled: bool) -> ScenarioConfig:
        return replace(self, bias_enabled=enabled)


def _parse_profile(raw: Any) -> InputProfile:
    if raw in ("uav_sinusoid", "UAV_SINUSOID"):
        return InputProfile.uav_sinusoid()
    if raw in ("sat_sinusoid", "SAT_SINUSOID"):
        return InputProfile.sat_sinusoid()
    if isinstance(raw, dict):
        try:
            amps = tuple(parse_quantity(a, 1) for a in raw["amplitudes"])
            periods = tuple(float(p) for p in raw["periods"])
            phases = tuple(float(p) for p in raw.get("phases", (0.0, 0.0, 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad custom input profile: {exc}") from exc
        if not (len(amps) == len(periods) == len(phases) == 3):
            raise ConfigError("custom input profile needs three amplitudes, periods and phases")
        if any(p <= 0 for p in periods):
            raise ConfigError("input periods must be positive")
        return InputProfile("custom", amps, periods, phases)
    raise ConfigError(f"unknown input profile {raw!r}")


_REQUIRED = (
    "dt",
    "horizon",
    "input_profile",
    "gyro_noise_std",
    "bias_walk_std",
    "meas_noise_std",
    "reference_dirs",
    "init_angle_std",
    "init_bias_std",
)


def scenario_from_dict(raw: dict, name: str = "custom") -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a mapping of keys to values")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"scenario is missing keys: {', '.join(missing)}")
    known = set(_REQUIRED) | {"name", "bias_enabled", "tuning"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
    meas = raw["meas_noise_std"]
    dirs = raw["reference_dirs"]
    if not isinstance(dirs, list) or not all(isinstance(d, list) for d in dirs):
        raise ConfigError("reference_dirs must be a list of 3-vectors")
    if not isinstance(meas, list):
        meas = [meas] * len(dirs)
    tuning_raw = raw.get("tuning", {}) or {}
    try:
        tuning = Tuning(**{k: float(v) for k, v in tuning_raw.items()})
        return ScenarioConfig(
            name=str(raw.get("name", name)),
            dt=float(raw["dt"]),
            horizon=float(raw["horizon"]),
            input_profile=_parse_profile(raw["input_profile"]),
            gyro_noise_std=parse_quantity(raw["gyro_noise_std"], 1),
            bias_walk_std=parse_quantity(raw["bias_walk_std"], 2),
            meas_noise_std=tuple(parse_quantity(m, 0) for m in meas),
            reference_dirs=tuple(tuple(float(c) for c in d) for d in dirs),
            init_angle_std=parse_quantity(raw["init_angle_std"], 0),
            init_bias_std=parse_quantity(raw["init_bias_std"], 1),
            bias_enabled=bool(raw.get("bias_enabled", True)),
            tuning=tuning,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    return scenario_from_dict(raw, name=path.stem)


PRESET_SCENARIOS = ("case1_uav", "case2_satellite")


def preset_scenario(name: str) -> ScenarioConfig:
    if name not in PRESET_SCENARIOS:
        raise ConfigError(f"unknown preset scenario {name!r}")
    text = resources.files("attitude_bench.presets").joinpath(f"{name}.yaml").read_text(encoding="utf-8")
    return scenario_from_dict(yaml.safe_load(text), name=name)


# ---------------------------------------------------------------------------
# Truth and sensors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruthState:
    q: np.ndarray
    b: np.ndarray  # rad/s
    t: float
    k: int = 0  # step index; t == k * dt


@dataclass(frozen=True)
class MeasurementSet:
    u: np.ndarray  # gyro, rad/s
    y: np.ndarray  # (n_dirs, 3) body-frame directions


def true_omega(t: float | np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    """Closed-form body rate in rad/s; ``t`` may be a scalar or an array of times."""
    p = cfg.input_profile
    t = np.asarray(t, dtype=float)
    amp = np.array(p.amplitudes)
    w = 2.0 * np.pi / np.array(p.periods)
    ph = np.array(p.phases)
    return amp * np.sin(w * t[..., None] + ph)


def init_truth(cfg: ScenarioConfig, rng: np.random.Generator) -> TruthState:
    """Random initial attitude (Gaussian angle about a uniform axis) and bias.

    Always consumes seven normals (axis, angle, bias) so the stream layout
    does not depend on the configuration.
    """
    axis = rng.standard_normal(3)
    angle = cfg.init_angle_std * rng.standard_normal()
    b = cfg.init_bias_std * rng.standard_normal(3)
    q = quat_from_axis_angle(axis, angle)
    if not cfg.bias_enabled:
        b = np.zeros(3)
    return TruthState(q=q, b=b, t=0.0, k=0)


def step_truth(s: TruthState, cfg: ScenarioConfig, rng: np.random.Generator) -> TruthState:
    walk = rng.standard_normal(3)
    omega = true_omega(s.t, cfg)
    q = quat_exp_step(s.q, omega, cfg.dt)
    b = s.b + cfg.dt * (cfg.bias_walk_std * walk) if cfg.bias_enabled else s.b.copy()
    return TruthState(q=q, b=b, t=(s.k + 1) * cfg.dt, k=s.k + 1)


def sample_measurements(s: TruthState, cfg: ScenarioConfig, rng: np.random.Generator) -> MeasurementSet:
    m = len(cfg.reference_dirs)
    z = rng.standard_normal(3 + 3 * m)
    u = true_omega(s.t, cfg) + s.b + cfg.gyro_noise_std * z[:3]
    refs = cfg.refs
    y = np.empty((m, 3))
    for i in range(m):
        y[i] = rotate_to_body(s.q, refs[i]) + cfg.meas_noise_std[i] * z[3 + 3 * i : 6 + 3 * i]
    return MeasurementSet(u=u, y=y)


@dataclass(frozen=True)
class Trajectory:
    """One realisation: truth at every step and the sensor samples taken there."""

    t: np.ndarray  # (N+1,)
    q: np.ndarray  # (N+1, 4)
    b: np.ndarray  # (N+1, 3)
    u: np.ndarray  # (N+1, 3)
    y: np.ndarray  # (N+1, m, 3)


@njit(cache=True, nogil=True)
def _propagate(q0, b0, omega, z0, z, dt, gyro_std, walk_std, meas_std, refs, bias_enabled):
    n = omega.shape[0] - 1
    m = refs.shape[0]
    q = np.empty((n + 1, 4))
    b = np.empty((n + 1, 3))
    u = np.empty((n + 1, 3))
    y = np.empty((n + 1, m, 3))
    q[0] = q0
    b[0] = b0
    for k in range(n + 1):
        if k > 0:
            q[k] = quat_exp_step(q[k - 1], omega[k - 1], dt)
            if bias_enabled:
                b[k] = b[k - 1] + dt * (walk_std * z[k - 1, 0:3])
            else:
                b[k] = b[k - 1]
            row = z[k - 1, 3:]
        else:
            row = z0
        u[k] = omega[k] + b[k] + gyro_std * row[0:3]
        for i in range(m):
            y[k, i] = rotate_to_body(q[k], refs[i]) + meas_std[i] * row[3 + 3 * i : 6 + 3 * i]
    return q, b, u, y


def simulate(cfg: ScenarioConfig, rng: np.random.Generator) -> Trajectory:
    """Generate truth and measurements for the whole horizon.

    Consumes the generator exactly like ``init_truth`` followed by
    ``sample_measurements`` at step 0 and then ``step_truth`` +
    ``sample_measurements`` at every further step, so both routes produce
    bit-identical streams.
    """
    s0 = init_truth(cfg, rng)
    n = cfg.n_steps
    m = len(cfg.reference_dirs)
    z0 = rng.standard_normal(3 + 3 * m)
    z = rng.standard_normal((n, 6 + 3 * m))
    t = np.arange(n + 1) * cfg.dt
    omega = np.ascontiguousarray(true_omega(t, cfg))
    q, b, u, y = _propagate(
        s0.q,
        s0.b,
        omega,
        z0,
        z,
        cfg.dt,
        cfg.gyro_noise_std,
        cfg.bias_walk_std,
        np.array(cfg.meas_noise_std, dtype=float),
        cfg.refs,
        cfg.bias_enabled,
    )
    return Trajectory(t=t, q=q, b=b, u=u, y=y)


def run_rng(master_seed: int, run_index: int) -> np.random.Generator:
    """Independent stream for one Monte-Carlo run, fixed by (seed, index) alone."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(run_index,)))
