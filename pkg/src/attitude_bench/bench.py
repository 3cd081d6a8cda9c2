"""Monte-Carlo harness: run several filters on shared measurement streams and
aggregate RMS error traces.

Each run draws its truth and sensor stream from ``(master_seed, run_index)``
alone, so results do not depend on how runs are scheduled. Every filter in
an experiment consumes the identical stream. A run whose filter state turns
non-finite (or whose unscented spread loses positive definiteness) is
flagged as diverged and left out of the RMS, but counted.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit

from .filters import FilterConfig, FilterKind
from .filters.cgo import cgo_kernel
from .filters.riccati import game_kernel, mekf_kernel, riekf_kernel
from .filters.usque import OK, usque_initial_covariance, usque_kernel
from .geom3 import geodesic_angle
from .models import ScenarioConfig, Trajectory, preset_scenario, run_rng, simulate

RAD2DEG = 180.0 / math.pi


class AllRunsDiverged(RuntimeError):
    """Every Monte-Carlo run of some filter diverged."""


@dataclass(frozen=True)
class FilterSpec:
    kind: FilterKind
    config: FilterConfig
    label: str


@dataclass(frozen=True)
class GainScale:
    """Multiply one gain block of one filter.

    ``P_a`` and ``P_c`` are scaled where they act as observer gains; ``P_b``
    never enters the observer directly, so its factor scales ``P_b(0)``.
    """

    label: str
    block: str
    factor: float


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig
    filters: tuple[FilterSpec, ...]
    repeats: int = 20
    master_seed: int = 0
    gain_scale: Optional[GainScale] = None
    # start every filter at the true attitude and bias (oracle checks)
    perfect_init: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if not self.filters:
            raise ValueError("an experiment needs at least one filter")
        labels = [f.label for f in self.filters]
        if len(set(labels)) != len(labels):
            raise ValueError(f"filter labels must be unique: {labels}")
        if self.gain_scale is not None:
            if self.gain_scale.label not in labels:
                raise ValueError(f"gain_scale names unknown filter {self.gain_scale.label!r}")
            if self.gain_scale.block not in ("P_a", "P_b", "P_c"):
                raise ValueError(f"gain_scale block must be P_a, P_b or P_c, not {self.gain_scale.block!r}")

    def resolved_filters(self) -> tuple[FilterSpec, ...]:
        """Filter list with ``gain_scale`` folded into the matching config."""
        gs = self.gain_scale
        if gs is None:
            return self.filters
        out = []
        for f in self.filters:
            if f.label == gs.label:
                c = f.config
                if gs.block == "P_a":
                    c = replace(c, gain_scale_a=c.gain_scale_a * gs.factor)
                elif gs.block == "P_c":
                    c = replace(c, gain_scale_c=c.gain_scale_c * gs.factor)
                else:
                    c = replace(c, Pb0=c.Pb0 * gs.factor)
                f = replace(f, config=c)
            out.append(f)
        return tuple(out)

    def with_filters(self, labels) -> ExperimentSpec:
        keep = [f for f in self.filters if f.label in set(labels)]
        missing = set(labels) - {f.label for f in keep}
        if missing:
            raise ValueError(f"unknown filter labels: {', '.join(sorted(missing))}")
        gs = self.gain_scale if self.gain_scale and self.gain_scale.label in labels else None
        return replace(self, filters=tuple(keep), gain_scale=gs)


@dataclass
class RunResult:
    angle_deg: np.ndarray
    bias_degps: np.ndarray
    diverged: bool
    max_norm_dev: float
    max_asym: float


@dataclass
class ErrorTrace:
    time: np.ndarray
    angle_rms_deg: dict[str, np.ndarray]
    bias_rms_degps: dict[str, np.ndarray]
    diverged_runs: dict[str, int]
    repeats: int = 1
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return list(self.angle_rms_deg)


# ---------------------------------------------------------------------------
# Time loops
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _asym(P):
    return np.max(np.abs(P - P.T))


@njit(cache=True, nogil=True)
def _run_riccati(kind, q, b, Pa, Pb, Pc, us, ys, q_true, b_true, refs, Rinv, Qw, Qb, dt,
                 flag, bias_enabled, scale_a, scale_c):  # fmt: skip
    n = us.shape[0] - 1
    ang = np.full(n + 1, np.nan)
    berr = np.full(n + 1, np.nan)
    norm_dev = 0.0
    asym = 0.0
    for k in range(n + 1):
        ang[k] = geodesic_angle(q, q_true[k])
        berr[k] = np.linalg.norm(b - b_true[k])
        if k == n:
            break
        if kind == 0:
            q, b, Pa, Pb, Pc = game_kernel(q, b, Pa, Pb, Pc, us[k], ys[k], refs, Rinv, Qw, Qb, dt,
                                           flag, bias_enabled, scale_a, scale_c)  # fmt: skip
        elif kind == 1:
            q, b, Pa, Pb, Pc = mekf_kernel(q, b, Pa, Pb, Pc, us[k], ys[k], refs, Rinv, Qw, Qb, dt,
                                           bias_enabled, scale_a, scale_c)  # fmt: skip
        else:
            q, b, Pa, Pb, Pc = riekf_kernel(q, b, Pa, Pb, Pc, us[k], ys[k], refs, Rinv, Qw, Qb, dt,
                                            flag, bias_enabled, scale_a, scale_c)  # fmt: skip
        finite = np.all(np.isfinite(q)) and np.all(np.isfinite(b))
        finite = finite and np.all(np.isfinite(Pa)) and np.all(np.isfinite(Pb)) and np.all(np.isfinite(Pc))
        if not finite:
            return ang, berr, norm_dev, asym, True
        norm_dev = max(norm_dev, abs(np.linalg.norm(q) - 1.0))
        asym = max(asym, _asym(Pa), _asym(Pb))
    return ang, berr, norm_dev, asym, False


@njit(cache=True, nogil=True)
def _run_cgo(q, b, us, ys, q_true, b_true, refs, kp, ki, dt, bias_enabled):
    n = us.shape[0] - 1
    ang = np.full(n + 1, np.nan)
    berr = np.full(n + 1, np.nan)
    norm_dev = 0.0
    for k in range(n + 1):
        ang[k] = geodesic_angle(q, q_true[k])
        berr[k] = np.linalg.norm(b - b_true[k])
        if k == n:
            break
        q, b = cgo_kernel(q, b, us[k], ys[k], refs, kp, ki, dt, bias_enabled)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(b))):
            return ang, berr, norm_dev, 0.0, True
        norm_dev = max(norm_dev, abs(np.linalg.norm(q) - 1.0))
    return ang, berr, norm_dev, 0.0, False


@njit(cache=True, nogil=True)
def _run_usque(q, x, P, us, ys, q_true, b_true, refs, Rstack, Qw, Qb, dt, a, f, lam):
    n = us.shape[0] - 1
    ang = np.full(n + 1, np.nan)
    berr = np.full(n + 1, np.nan)
    norm_dev = 0.0
    asym = 0.0
    nb = x.shape[0] == 6
    for k in range(n + 1):
        ang[k] = geodesic_angle(q, q_true[k])
        if nb:
            berr[k] = np.linalg.norm(x[3:] - b_true[k])
        else:
            berr[k] = np.linalg.norm(b_true[k])
        if k == n:
            break
        # gyro sample from the start of the interval, directions from its end
        q, x, P, status = usque_kernel(q, x, P, us[k], ys[k + 1], refs, Rstack, Qw, Qb, dt, a, f, lam)
        if status != OK or not (np.all(np.isfinite(q)) and np.all(np.isfinite(x)) and np.all(np.isfinite(P))):
            return ang, berr, norm_dev, asym, True
        norm_dev = max(norm_dev, abs(np.linalg.norm(q) - 1.0))
        asym = max(asym, _asym(P))
    return ang, berr, norm_dev, asym, False


_RICCATI_CODE = {FilterKind.GAME: 0, FilterKind.MEKF: 1, FilterKind.RIEKF: 2}


def run_filter(spec: FilterSpec, traj: Trajectory, dt: float, q0=None, b0=None) -> RunResult:
    """Run one filter over a trajectory. Only ``traj.u`` and ``traj.y`` reach
    the filter; the truth arrays are used for scoring alone."""
    cfg = spec.config
    kind = FilterKind(spec.kind)
    q = np.array([1.0, 0.0, 0.0, 0.0]) if q0 is None else np.array(q0, dtype=float)
    b = np.zeros(3) if (b0 is None or not cfg.bias_enabled) else np.array(b0, dtype=float)
    us, ys = traj.u, traj.y
    if kind in _RICCATI_CODE:
        if cfg.bias_enabled:
            Pb, Pc = cfg.Pb0.copy(), cfg.Pc0.copy()
        else:
            Pb, Pc = np.zeros((3, 3)), np.zeros((3, 3))
        flag = cfg.game_riccati == "equation" if kind is FilterKind.GAME else cfg.riekf_variant == "original"
        out = _run_riccati(
            _RICCATI_CODE[kind], q, b, cfg.Pa0.copy(), Pb, Pc, us, ys, traj.q, traj.b,
            cfg.ref_dirs, cfg.R_inv, cfg.Q_omega, cfg.Q_bias, dt,
            flag, cfg.bias_enabled, cfg.gain_scale_a, cfg.gain_scale_c,
        )  # fmt: skip
    elif kind is FilterKind.CGO:
        out = _run_cgo(q, b, us, ys, traj.q, traj.b, cfg.ref_dirs, cfg.cgo_kp, cfg.cgo_ki, dt, cfg.bias_enabled)
    else:
        x = np.concatenate([np.zeros(3), b]) if cfg.bias_enabled else np.zeros(3)
        Qb = cfg.Q_bias if cfg.bias_enabled else np.zeros((3, 3))
        out = _run_usque(
            q, x, usque_initial_covariance(cfg), us, ys, traj.q, traj.b, cfg.ref_dirs, cfg.R_stacked,
            cfg.Q_omega, Qb, dt, cfg.usque_a, cfg.usque_f, cfg.usque_lam,
        )  # fmt: skip
    ang, berr, norm_dev, asym, diverged = out
    return RunResult(ang, berr * RAD2DEG, bool(diverged), float(norm_dev), float(asym))


def run_single(spec: ExperimentSpec, run_index: int) -> dict[str, RunResult]:
    """One Monte-Carlo realisation for every filter in ``spec``."""
    if not 0 <= run_index < spec.repeats:
        raise ValueError(f"run_index {run_index} outside [0, {spec.repeats})")
    traj = simulate(spec.scenario, run_rng(spec.master_seed, run_index))
    q0, b0 = (traj.q[0], traj.b[0]) if spec.perfect_init else (None, None)
    dt = spec.scenario.dt
    return {f.label: run_filter(f, traj, dt, q0, b0) for f in spec.resolved_filters()}


def aggregate(time: np.ndarray, runs: list[dict[str, RunResult]], labels: list[str]) -> ErrorTrace:
    """RMS over the non-diverged runs.

    Per-time samples are sorted before summing so the result does not depend
    on the order of ``runs``.
    """
    angle, bias, div = {}, {}, {}
    for label in labels:
        good = [r[label] for r in runs if not r[label].diverged]
        div[label] = len(runs) - len(good)
        if not good:
            raise AllRunsDiverged(f"all {len(runs)} runs of {label} diverged")
        a = np.sort(np.stack([g.angle_deg for g in good]) ** 2, axis=0)
        b = np.sort(np.stack([g.bias_degps for g in good]) ** 2, axis=0)
        angle[label] = np.sqrt(a.sum(axis=0) / len(good))
        bias[label] = np.sqrt(b.sum(axis=0) / len(good))
    return ErrorTrace(time=time, angle_rms_deg=angle, bias_rms_degps=bias, diverged_runs=div, repeats=len(runs))


def run_monte_carlo(spec: ExperimentSpec, workers: int = 1, run_indices=None) -> ErrorTrace:
    """RMS error traces over ``spec.repeats`` runs.

    Raises:
        AllRunsDiverged: if some filter diverged in every run.
    """
    indices = list(range(spec.repeats)) if run_indices is None else list(run_indices)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda i: run_single(spec, i), indices))
    else:
        runs = [run_single(spec, i) for i in indices]
    time = np.arange(spec.scenario.n_steps + 1) * spec.scenario.dt
    return aggregate(time, runs, [f.label for f in spec.filters])


def asymptotic_stat(trace: ErrorTrace, window: float = 10.0, metric: str = "angle") -> dict[str, float]:
    """Mean of each RMS series over the final ``window`` seconds."""
    horizon = trace.time[-1] - trace.time[0]
    if not 0 < window < horizon:
        raise ValueError(f"window must lie in (0, {horizon:g}) s")
    series = trace.angle_rms_deg if metric == "angle" else trace.bias_rms_degps
    mask = trace.time >= trace.time[-1] - window - 1e-9
    return {label: float(np.mean(s[mask])) for label, s in series.items()}


def value_at(trace: ErrorTrace, t: float, metric: str = "angle") -> dict[str, float]:
    k = int(np.argmin(np.abs(trace.time - t)))
    series = trace.angle_rms_deg if metric == "angle" else trace.bias_rms_degps
    return {label: float(s[k]) for label, s in series.items()}


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

STANDARD_FILTERS = (FilterKind.GAME, FilterKind.MEKF, FilterKind.RIEKF, FilterKind.USQUE, FilterKind.CGO)


def filter_config(scenario: ScenarioConfig, kind: FilterKind | str, **overrides) -> FilterConfig:
    """Filter configuration following the scenario's tuning.

    GAME, MEKF and RIEKF start from inverse variances scaled by the tuning
    factors; USQUE starts from the variances; the coupling block starts at 0.
    """
    kind = FilterKind(kind)
    tu = scenario.tuning
    vq = scenario.init_angle_std**2
    vb = scenario.init_bias_std**2
    if kind is FilterKind.USQUE:
        Pa0, Pb0 = vq * np.eye(3), vb * np.eye(3)
    else:
        Pa0 = (tu.riccati_pa0_factor / vq) * np.eye(3)
        Pb0 = (tu.riccati_pb0_factor / vb) * np.eye(3)
    kwargs = dict(
        Q_omega=scenario.Q_omega,
        Q_bias=scenario.Q_bias,
        R=tuple(scenario.R),
        ref_dirs=scenario.refs,
        Pa0=Pa0,
        Pb0=Pb0,
        Pc0=np.zeros((3, 3)),
        bias_enabled=scenario.bias_enabled,
        cgo_kp=tu.cgo_kp,
        cgo_ki=tu.cgo_ki,
    )
    kwargs.update(overrides)
    return FilterConfig(**kwargs)


def standard_filters(scenario: ScenarioConfig, kinds=STANDARD_FILTERS, **overrides) -> tuple[FilterSpec, ...]:
    return tuple(FilterSpec(FilterKind(k), filter_config(scenario, k, **overrides), FilterKind(k).value) for k in kinds)


def usque_matched_r_factor(dt: float) -> float:
    """Factor on ``R`` that gives the unscented filter the Riccati filters'
    attitude gain.

    The Riccati filters read ``R`` as a noise intensity (per unit time) and
    ``Q`` enters with weight ``dt`` per step; the unscented filter reads
    ``R`` per sample and adds ``dt/2 Q`` per step. Equal ``Q/R`` balance then
    needs ``R / (2 dt)``.
    """
    return 1.0 / (2.0 * dt)


def preset_experiments(repeats: int = 20, master_seed: int = 0) -> dict[str, ExperimentSpec]:
    case1 = preset_scenario("case1_uav")
    case2 = preset_scenario("case2_satellite")
    nobias = case1.with_bias(False)

    nobias_filters = []
    for f in standard_filters(nobias):
        if f.kind is FilterKind.USQUE:
            f = replace(f, config=replace(f.config, R=tuple(r * usque_matched_r_factor(nobias.dt) for r in f.config.R)))
        nobias_filters.append(f)

    game = filter_config(case1, FilterKind.GAME)
    return {
        "case1": ExperimentSpec(case1, standard_filters(case1), repeats, master_seed),
        "case2": ExperimentSpec(case2, standard_filters(case2), 1, master_seed),
        "case1_nobias": ExperimentSpec(nobias, tuple(nobias_filters), repeats, master_seed),
        "case1_game_x30": ExperimentSpec(
            case1,
            (FilterSpec(FilterKind.GAME, game, "GAMEx30"), FilterSpec(FilterKind.USQUE, filter_config(case1, "USQUE"), "USQUE")),
            repeats,
            master_seed,
            gain_scale=GainScale("GAMEx30", "P_a", 30.0),
        ),
        "case1_riekf_variants": ExperimentSpec(
            case1,
            (
                FilterSpec(FilterKind.RIEKF, filter_config(case1, "RIEKF"), "RIEKF"),
                FilterSpec(FilterKind.RIEKF, filter_config(case1, "RIEKF", riekf_variant="original"), "RIEKF_orig"),
            ),
            repeats,
            master_seed,
        ),
    }
