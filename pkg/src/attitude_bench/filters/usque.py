"""Unscented quaternion estimator (USQUE).

The attitude error is carried as generalized Rodrigues parameters (GRP)
``dp`` with parameters ``a`` and ``f``; error quaternions multiply the
reference quaternion from the left, ``q_i = dq_i (x) q``. Each step spreads
``2n + 1`` sigma points from ``(n + lam)(P + Q_k)``, propagates them through
the gyro kinematics with their own bias, and fuses the stacked direction
measurements taken at the end of the interval. After the update the GRP part
is folded into the quaternion and reset to zero.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..geom3 import quat_mul, quat_normalize
from .common import AntipodalError, CholeskyFailure, FilterConfig, UsqueState, check_finite

ANTIPODAL_TOL = 1e-9

OK = 0
CHOLESKY_FAILED = 1
ANTIPODAL = 2


@njit(cache=True, nogil=True)
def _grp_to_quat(dp, a, f):
    n2 = dp[0] * dp[0] + dp[1] * dp[1] + dp[2] * dp[2]
    w = (-a * n2 + f * math.sqrt(f * f + (1.0 - a * a) * n2)) / (f * f + n2)
    out = np.empty(4)
    out[0] = w
    out[1:] = ((a + w) / f) * dp
    return out


@njit(cache=True, nogil=True)
def _quat_to_grp(dq, a, f):
    den = a + dq[0]
    if abs(den) < ANTIPODAL_TOL:
        return np.full(3, np.nan), False
    return (f / den) * dq[1:], True


def error_quat_from_grp(dp, a: float = 1.0, f: float = 4.0) -> np.ndarray:
    """Unit error quaternion ``[dq4, drho]`` for the GRP vector ``dp``."""
    return _grp_to_quat(np.asarray(dp, dtype=float), float(a), float(f))


def grp_from_error_quat(dq, a: float = 1.0, f: float = 4.0) -> np.ndarray:
    """GRP vector ``f drho / (a + dq4)`` of an error quaternion.

    Raises:
        AntipodalError: if ``|a + dq4| < 1e-9``.
    """
    dp, ok = _quat_to_grp(np.asarray(dq, dtype=float), float(a), float(f))
    if not ok:
        raise AntipodalError("error quaternion at the GRP singularity")
    return dp


@njit(cache=True, nogil=True)
def sigma_weights(n, lam):
    w = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    w[0] = lam / (n + lam)
    return w


@njit(cache=True, nogil=True)
def sigma_points(x, P, Qk, lam):
    """Rows ``x``, ``x + col_j``, ``x - col_j`` of the lower Cholesky factor
    of ``(n + lam)(P + Q_k)``; ``ok`` is False when that factor does not exist."""
    n = x.shape[0]
    X = np.empty((2 * n + 1, n))
    M = (n + lam) * (P + Qk)
    M = 0.5 * (M + M.T)
    ok = True
    L = np.zeros((n, n))
    try:
        L = np.linalg.cholesky(M)
    except Exception:  # noqa: BLE001 - numba only supports bare classes here
        ok = False
    X[0] = x
    for j in range(n):
        X[1 + j] = x + L[:, j]
        X[1 + n + j] = x - L[:, j]
    return X, ok


@njit(cache=True, nogil=True)
def discrete_q(Qw, Qb, dt, n):
    Qk = np.zeros((n, n))
    if n == 6:
        Qk[:3, :3] = 0.5 * dt * (Qw - (dt * dt / 6.0) * Qb)
        Qk[3:, 3:] = 0.5 * dt * Qb
    else:
        Qk[:3, :3] = 0.5 * dt * Qw
    return Qk


@njit(cache=True, nogil=True)
def _propagate_sigmas(X, q, u, dt, a, f):
    """``exp(dt/2 A(u - b_i)) (dq_i (x) q)`` for every sigma row, written out
    in scalars because this loop dominates the filter's run time."""
    ns, n = X.shape
    qm = np.empty((ns, 4))
    q0, q1, q2, q3 = q[0], q[1], q[2], q[3]
    for i in range(ns):
        d0, d1, d2 = X[i, 0], X[i, 1], X[i, 2]
        n2 = d0 * d0 + d1 * d1 + d2 * d2
        ew = (-a * n2 + f * math.sqrt(f * f + (1.0 - a * a) * n2)) / (f * f + n2)
        c = (a + ew) / f
        ex, ey, ez = c * d0, c * d1, c * d2
        # dq (x) q
        p0 = ew * q0 - ex * q1 - ey * q2 - ez * q3
        p1 = ew * q1 + ex * q0 + ey * q3 - ez * q2
        p2 = ew * q2 - ex * q3 + ey * q0 + ez * q1
        p3 = ew * q3 + ex * q2 - ey * q1 + ez * q0
        nn = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2 + p3 * p3)
        p0, p1, p2, p3 = p0 / nn, p1 / nn, p2 / nn, p3 / nn
        w0, w1, w2 = u[0], u[1], u[2]
        if n == 6:
            w0, w1, w2 = w0 - X[i, 3], w1 - X[i, 4], w2 - X[i, 5]
        wn = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
        if wn == 0.0:
            qm[i, 0], qm[i, 1], qm[i, 2], qm[i, 3] = p0, p1, p2, p3
            continue
        hc = math.cos(0.5 * wn * dt)
        hs = math.sin(0.5 * wn * dt) / wn
        r1, r2, r3 = hs * w0, hs * w1, hs * w2
        # p (x) [hc, r]
        s0 = p0 * hc - p1 * r1 - p2 * r2 - p3 * r3
        s1 = p0 * r1 + p1 * hc + p2 * r3 - p3 * r2
        s2 = p0 * r2 - p1 * r3 + p2 * hc + p3 * r1
        s3 = p0 * r3 + p1 * r2 - p2 * r1 + p3 * hc
        nn = math.sqrt(s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3)
        qm[i, 0], qm[i, 1], qm[i, 2], qm[i, 3] = s0 / nn, s1 / nn, s2 / nn, s3 / nn
    return qm


@njit(cache=True, nogil=True)
def _body_directions(qm, refs):
    """Stacked ``q_i^-1 (x) p(ref_j) (x) q_i`` for every sigma quaternion."""
    ns = qm.shape[0]
    m = refs.shape[0]
    G = np.empty((ns, 3 * m))
    for i in range(ns):
        w, x, y, z = qm[i, 0], qm[i, 1], qm[i, 2], qm[i, 3]
        r00 = 1.0 - 2.0 * (y * y + z * z)
        r01 = 2.0 * (x * y - w * z)
        r02 = 2.0 * (x * z + w * y)
        r10 = 2.0 * (x * y + w * z)
        r11 = 1.0 - 2.0 * (x * x + z * z)
        r12 = 2.0 * (y * z - w * x)
        r20 = 2.0 * (x * z - w * y)
        r21 = 2.0 * (y * z + w * x)
        r22 = 1.0 - 2.0 * (x * x + y * y)
        for j in range(m):
            v0, v1, v2 = refs[j, 0], refs[j, 1], refs[j, 2]
            # transpose of the body-to-inertial matrix
            G[i, 3 * j] = r00 * v0 + r10 * v1 + r20 * v2
            G[i, 3 * j + 1] = r01 * v0 + r11 * v1 + r21 * v2
            G[i, 3 * j + 2] = r02 * v0 + r12 * v1 + r22 * v2
    return G


@njit(cache=True, nogil=True)
def usque_kernel(q, x, P, u, ys, refs, Rstack, Qw, Qb, dt, a, f, lam):
    """One predict/update cycle. Returns ``(q, x, P, status)``."""
    n = x.shape[0]
    m = refs.shape[0]
    ns = 2 * n + 1
    wts = sigma_weights(n, lam)
    Qk = discrete_q(Qw, Qb, dt, n)

    X, ok = sigma_points(x, P, Qk, lam)
    if not ok:
        return q.copy(), x.copy(), P.copy(), CHOLESKY_FAILED

    # propagate sigma quaternions with their own bias
    qm = _propagate_sigmas(X, q, u, dt, a, f)

    Xn = X.copy()
    Xn[0, :3] = 0.0
    c0, c1, c2, c3 = qm[0, 0], -qm[0, 1], -qm[0, 2], -qm[0, 3]
    for i in range(1, ns):
        # qm[i] (x) qm[0]^-1, then its GRP
        p0, p1, p2, p3 = qm[i, 0], qm[i, 1], qm[i, 2], qm[i, 3]
        e0 = p0 * c0 - p1 * c1 - p2 * c2 - p3 * c3
        den = a + e0
        if abs(den) < ANTIPODAL_TOL:
            return q.copy(), x.copy(), P.copy(), ANTIPODAL
        g = f / den
        Xn[i, 0] = g * (p0 * c1 + p1 * c0 + p2 * c3 - p3 * c2)
        Xn[i, 1] = g * (p0 * c2 - p1 * c3 + p2 * c0 + p3 * c1)
        Xn[i, 2] = g * (p0 * c3 + p1 * c2 - p2 * c1 + p3 * c0)

    x_pred = wts @ Xn
    Dx = Xn - x_pred
    WDx = Dx * wts.reshape(-1, 1)
    P_pred = WDx.T @ Dx + Qk

    # predicted stacked observations
    G = _body_directions(qm, refs)
    y_pred = wts @ G
    Dy = G - y_pred
    Pyy = (Dy * wts.reshape(-1, 1)).T @ Dy
    Pxy = WDx.T @ Dy
    Pvv = Pyy + Rstack

    yvec = np.empty(3 * m)
    for j in range(m):
        yvec[3 * j : 3 * j + 3] = ys[j]
    K = np.linalg.solve(Pvv, Pxy.T).T
    x_new = x_pred + K @ (yvec - y_pred)
    P_new = P_pred - K @ Pxy.T
    P_new = 0.5 * (P_new + P_new.T)

    q_new = quat_normalize(quat_mul(_grp_to_quat(x_new[:3], a, f), qm[0]))
    x_new[:3] = 0.0
    return q_new, x_new, P_new, OK


def usque_initial_covariance(cfg: FilterConfig) -> np.ndarray:
    if not cfg.bias_enabled:
        return cfg.Pa0.copy()
    return np.block([[cfg.Pa0, cfg.Pc0], [cfg.Pc0.T, cfg.Pb0]])


def usque_step(s: UsqueState, u, ys, cfg: FilterConfig, dt: float) -> UsqueState:
    """Propagate with the gyro sample ``u`` and update with directions ``ys``
    measured at the end of the interval.

    Raises:
        CholeskyFailure: if ``P + Q_k`` is not positive definite.
        AntipodalError: if a sigma point hits the GRP singularity.
    """
    Qb = cfg.Q_bias if cfg.bias_enabled else np.zeros((3, 3))
    q, x, P, status = usque_kernel(
        np.ascontiguousarray(s.q, dtype=float),
        np.ascontiguousarray(s.x, dtype=float),
        np.ascontiguousarray(s.P, dtype=float),
        np.ascontiguousarray(u, dtype=float),
        np.ascontiguousarray(ys, dtype=float),
        cfg.ref_dirs,
        cfg.R_stacked,
        cfg.Q_omega,
        Qb,
        float(dt),
        s.a,
        s.f,
        s.lam,
    )
    if status == CHOLESKY_FAILED:
        raise CholeskyFailure("P + Q_k is not positive definite")
    if status == ANTIPODAL:
        raise AntipodalError("sigma point at the GRP singularity")
    check_finite(q, x, P)
    return UsqueState(q=q, x=x, P=P, a=s.a, f=s.f, lam=s.lam)
