"""Riccati-gain attitude filters: GAME, MEKF and RIEKF.

All three share the observer

    q(k+1) = exp(dt/2 A[u - b + P_a Delta]) q(k)
    b(k+1) = b(k) + dt P_c^T Delta

and differ in how ``Delta`` is formed and how the gain blocks ``P_a``
(attitude), ``P_b`` (bias) and ``P_c`` (coupling) are advanced. Gains take
one explicit Euler step per sample, are evaluated at time ``k`` throughout,
and ``P_a``/``P_b`` are projected back onto symmetric matrices afterwards.

The kernels return new arrays and never modify their inputs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..geom3 import cross, proj_sym, quat_exp_step, rotate_to_body, rotate_to_inertial, skew
from .common import FilterConfig, RiccatiState, body_innovation, check_finite


@njit(cache=True, nogil=True)
def game_kernel(q, b, Pa, Pb, Pc, u, ys, refs, Rinv, Qw, Qb, dt, equation_form, bias_enabled, scale_a, scale_c):
    delta, _, S, C = body_innovation(q, ys, refs, Rinv)
    F = (np.trace(C) * np.eye(3) - C) - S  # E - S
    w = u - b
    pd = Pa @ delta
    q_new = quat_exp_step(q, w + scale_a * pd, dt)

    if equation_form:
        # the continuous-time form, rewritten with this module's sign of Delta
        Pa_dot = Qw + 2.0 * proj_sym(Pa @ skew(2.0 * w + pd)) - Pc - Pc.T + Pa @ F @ Pa
        w_c = w + pd
    else:
        w_r = w - 0.5 * pd
        Pa_dot = Qw + 2.0 * proj_sym(Pa @ skew(w_r) - Pc) + Pa @ F @ Pa
        w_c = w_r
    Pa_new = proj_sym(Pa + dt * Pa_dot)

    if bias_enabled:
        b_new = b + dt * scale_c * (Pc.T @ delta)
        Pc_new = Pc + dt * (-skew(w_c) @ Pc + Pa @ F @ Pc - Pb)
        Pb_new = proj_sym(Pb + dt * (Qb + Pc.T @ F @ Pc))
    else:
        b_new = b.copy()
        Pc_new = Pc.copy()
        Pb_new = Pb.copy()
    return q_new, b_new, Pa_new, Pb_new, Pc_new


@njit(cache=True, nogil=True)
def mekf_kernel(q, b, Pa, Pb, Pc, u, ys, refs, Rinv, Qw, Qb, dt, bias_enabled, scale_a, scale_c):
    delta, _, S, _ = body_innovation(q, ys, refs, Rinv)
    w = u - b
    q_new = quat_exp_step(q, w + scale_a * (Pa @ delta), dt)
    Pa_new = proj_sym(Pa + dt * (Qw + 2.0 * proj_sym(Pa @ skew(w) - Pc) - Pa @ S @ Pa))
    if bias_enabled:
        b_new = b + dt * scale_c * (Pc.T @ delta)
        Pc_new = Pc + dt * (-skew(w) @ Pc - Pa @ S @ Pc - Pb)
        Pb_new = proj_sym(Pb + dt * (Qb - Pc.T @ S @ Pc))
    else:
        b_new = b.copy()
        Pc_new = Pc.copy()
        Pb_new = Pb.copy()
    return q_new, b_new, Pa_new, Pb_new, Pc_new


@njit(cache=True, nogil=True)
def riekf_kernel(q, b, Pa, Pb, Pc, u, ys, refs, Rinv, Qw, Qb, dt, original, bias_enabled, scale_a, scale_c):
    m = refs.shape[0]
    delta = np.zeros(3)
    S = np.zeros((3, 3))
    for i in range(m):
        yh = rotate_to_inertial(q, ys[i])
        delta += cross(refs[i], Rinv[i] @ (refs[i] - yh))
        Y = skew(refs[i])
        S += Y.T @ Rinv[i] @ Y
    att_gain = 1.0
    if original:
        # output matrix 2 skew(ref) and a doubled attitude correction
        delta = 2.0 * delta
        S = 4.0 * S
        att_gain = 2.0

    w = u - b
    # inertial-frame corrections are carried into the body frame
    corr = rotate_to_body(q, scale_a * att_gain * (Pa @ delta))
    q_new = quat_exp_step(q, w + corr, dt)
    W = skew(rotate_to_inertial(q, w))
    Pa_new = proj_sym(Pa + dt * (Qw - 2.0 * proj_sym(Pc) - Pa @ S @ Pa))
    if bias_enabled:
        b_new = b + dt * rotate_to_body(q, scale_c * (Pc.T @ delta))
        Pc_new = Pc + dt * (-Pc @ W - Pa @ S @ Pc - Pb)
        Pb_new = proj_sym(Pb + dt * (2.0 * proj_sym(W @ Pb) + Qb - Pc.T @ S @ Pc))
    else:
        b_new = b.copy()
        Pc_new = Pc.copy()
        Pb_new = Pb.copy()
    return q_new, b_new, Pa_new, Pb_new, Pc_new


def _as(x):
    return np.ascontiguousarray(x, dtype=float)


def _wrap(out) -> RiccatiState:
    check_finite(*out)
    return RiccatiState(*out)


def game_step(s: RiccatiState, u, ys, cfg: FilterConfig, dt: float) -> RiccatiState:
    """One GAME update: observer plus the second-order Riccati step."""
    return _wrap(
        game_kernel(
            _as(s.q), _as(s.b), _as(s.Pa), _as(s.Pb), _as(s.Pc), _as(u), _as(ys),
            cfg.ref_dirs, cfg.R_inv, cfg.Q_omega, cfg.Q_bias, float(dt),
            cfg.game_riccati == "equation", cfg.bias_enabled, cfg.gain_scale_a, cfg.gain_scale_c,
        )
    )  # fmt: skip


def mekf_step(s: RiccatiState, u, ys, cfg: FilterConfig, dt: float) -> RiccatiState:
    return _wrap(
        mekf_kernel(
            _as(s.q), _as(s.b), _as(s.Pa), _as(s.Pb), _as(s.Pc), _as(u), _as(ys),
            cfg.ref_dirs, cfg.R_inv, cfg.Q_omega, cfg.Q_bias, float(dt),
            cfg.bias_enabled, cfg.gain_scale_a, cfg.gain_scale_c,
        )
    )  # fmt: skip


def riekf_step(s: RiccatiState, u, ys, cfg: FilterConfig, dt: float) -> RiccatiState:
    """One right-invariant EKF update; innovation and gains live in the inertial frame."""
    return _wrap(
        riekf_kernel(
            _as(s.q), _as(s.b), _as(s.Pa), _as(s.Pb), _as(s.Pc), _as(u), _as(ys),
            cfg.ref_dirs, cfg.R_inv, cfg.Q_omega, cfg.Q_bias, float(dt),
            cfg.riekf_variant == "original", cfg.bias_enabled, cfg.gain_scale_a, cfg.gain_scale_c,
        )
    )  # fmt: skip
