"""The five attitude filters behind one stepping interface.

Every stepper has the signature ``step(state, u, ys, cfg, dt) -> state``
and sees nothing but the gyro sample ``u``, the measured body-frame
directions ``ys`` and the time step.
"""

from __future__ import annotations

import numpy as np

from .cgo import cgo_step
from .common import (
    AntipodalError,
    CgoState,
    CholeskyFailure,
    FilterConfig,
    FilterKind,
    FilterState,
    NumericalDivergence,
    RiccatiState,
    UsqueState,
    innovation_body,
)
from .riccati import game_step, mekf_step, riekf_step
from .usque import error_quat_from_grp, grp_from_error_quat, usque_initial_covariance, usque_step

STEPPERS = {
    FilterKind.GAME: game_step,
    FilterKind.MEKF: mekf_step,
    FilterKind.RIEKF: riekf_step,
    FilterKind.USQUE: usque_step,
    FilterKind.CGO: cgo_step,
}


def init_state(kind: FilterKind | str, cfg: FilterConfig, q0=None, b0=None) -> FilterState:
    """Initial state: identity attitude and zero bias unless given."""
    kind = FilterKind(kind)
    q = np.array([1.0, 0.0, 0.0, 0.0]) if q0 is None else np.array(q0, dtype=float)
    b = np.zeros(3) if b0 is None or not cfg.bias_enabled else np.array(b0, dtype=float)
    if kind is FilterKind.CGO:
        return CgoState(q=q, b=b, kp=cfg.cgo_kp, ki=cfg.cgo_ki)
    if kind is FilterKind.USQUE:
        x = np.concatenate([np.zeros(3), b]) if cfg.bias_enabled else np.zeros(3)
        return UsqueState(
            q=q, x=x, P=usque_initial_covariance(cfg), a=cfg.usque_a, f=cfg.usque_f, lam=cfg.usque_lam
        )
    Pb = cfg.Pb0.copy() if cfg.bias_enabled else np.zeros((3, 3))
    Pc = cfg.Pc0.copy() if cfg.bias_enabled else np.zeros((3, 3))
    return RiccatiState(q=q, b=b, Pa=cfg.Pa0.copy(), Pb=Pb, Pc=Pc)


def step(kind: FilterKind | str, state: FilterState, u, ys, cfg: FilterConfig, dt: float) -> FilterState:
    return STEPPERS[FilterKind(kind)](state, u, ys, cfg, dt)


__all__ = [
    "AntipodalError",
    "CgoState",
    "CholeskyFailure",
    "FilterConfig",
    "FilterKind",
    "FilterState",
    "NumericalDivergence",
    "RiccatiState",
    "UsqueState",
    "cgo_step",
    "error_quat_from_grp",
    "game_step",
    "grp_from_error_quat",
    "init_state",
    "innovation_body",
    "mekf_step",
    "riekf_step",
    "step",
    "usque_step",
]
