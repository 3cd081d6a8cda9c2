"""Constant gain observer (nonlinear complementary filter) with scalar gains."""

from __future__ import annotations

import numpy as np
from numba import njit

from ..geom3 import cross, quat_exp_step, rotate_to_body
from .common import CgoState, FilterConfig, check_finite


@njit(cache=True, nogil=True)
def cgo_kernel(q, b, u, ys, refs, kp, ki, dt, bias_enabled):
    delta = np.zeros(3)
    for i in range(refs.shape[0]):
        delta += cross(ys[i], rotate_to_body(q, refs[i]))
    q_new = quat_exp_step(q, u - b + kp * delta, dt)
    if bias_enabled:
        b_new = b - dt * (ki * delta)
    else:
        b_new = b.copy()
    return q_new, b_new


def cgo_step(s: CgoState, u, ys, cfg: FilterConfig, dt: float) -> CgoState:
    q, b = cgo_kernel(
        np.ascontiguousarray(s.q, dtype=float),
        np.ascontiguousarray(s.b, dtype=float),
        np.ascontiguousarray(u, dtype=float),
        np.ascontiguousarray(ys, dtype=float),
        cfg.ref_dirs,
        s.kp,
        s.ki,
        float(dt),
        cfg.bias_enabled,
    )
    check_finite(q, b)
    return CgoState(q=q, b=b, kp=s.kp, ki=s.ki)
