"""Quaternion and SO(3) primitives shared by the simulator and the filters.

Conventions:
    - Quaternions are float64 arrays ``[w, x, y, z]`` (scalar first) and
      compose with the Hamilton product.
    - A unit quaternion ``q`` maps body-frame vectors to the inertial frame,
      ``v_I = q (x) p(v_B) (x) q^-1``, where ``p(v) = [0, v]``.
    - Angular velocities are body-frame rates in rad/s, so the kinematics read
      ``dq/dt = 1/2 A(omega) q = 1/2 q (x) p(omega)``.

Everything here is compiled with numba so the filter kernels can call it
from inside their time loops. All functions are pure.
"""

import math

import numpy as np
from numba import njit

SKEW_TOL = 1e-6


class NotSkew(ValueError):
    """Raised by :func:`vex` when its argument is not skew-symmetric."""


@njit(cache=True, nogil=True)
def cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True, nogil=True)
def skew(v):
    """Cross-product matrix: ``skew(v) @ u == v x u``."""
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@njit(cache=True, nogil=True)
def vex(m):
    """Inverse of :func:`skew`.

    Raises:
        NotSkew: if ``||M + M^T||_F`` exceeds ``SKEW_TOL``.
    """
    asym = 0.0
    for i in range(3):
        for j in range(3):
            d = m[i, j] + m[j, i]
            asym += d * d
    if math.sqrt(asym) > SKEW_TOL:
        raise NotSkew("matrix is not skew-symmetric")
    out = np.empty(3)
    out[0] = 0.5 * (m[2, 1] - m[1, 2])
    out[1] = 0.5 * (m[0, 2] - m[2, 0])
    out[2] = 0.5 * (m[1, 0] - m[0, 1])
    return out


@njit(cache=True, nogil=True)
def proj_sym(m):
    return 0.5 * (m + m.T)


@njit(cache=True, nogil=True)
def proj_skew(m):
    return 0.5 * (m - m.T)


@njit(cache=True, nogil=True)
def quat_mul(a, b):
    """Hamilton product ``a (x) b`` of two scalar-first quaternions."""
    out = np.empty(4)
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return out


@njit(cache=True, nogil=True)
def quat_inv(q):
    """Inverse of a unit quaternion (its conjugate)."""
    out = np.empty(4)
    out[0] = q[0]
    out[1] = -q[1]
    out[2] = -q[2]
    out[3] = -q[3]
    return out


@njit(cache=True, nogil=True)
def quat_normalize(q):
    return q / math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


@njit(cache=True, nogil=True)
def quat_from_axis_angle(axis, angle):
    n = math.sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2])
    out = np.zeros(4)
    out[0] = 1.0
    if n == 0.0:
        return out
    s = math.sin(0.5 * angle) / n
    out[0] = math.cos(0.5 * angle)
    out[1] = s * axis[0]
    out[2] = s * axis[1]
    out[3] = s * axis[2]
    return out


@njit(cache=True, nogil=True)
def _rotate(w, r, v):
    # v + 2w (r x v) + 2 r x (r x v), the expanded sandwich product
    t = 2.0 * cross(r, v)
    return v + w * t + cross(r, t)


@njit(cache=True, nogil=True)
def rotate_to_body(q, v):
    """Express an inertial vector in the body frame: ``p^dagger(q^-1 (x) p(v) (x) q)``."""
    return _rotate(q[0], -q[1:], v)


@njit(cache=True, nogil=True)
def rotate_to_inertial(q, v):
    """Express a body vector in the inertial frame: ``p^dagger(q (x) p(v) (x) q^-1)``."""
    return _rotate(q[0], q[1:], v)


@njit(cache=True, nogil=True)
def quat_to_rotmat(q):
    """Rotation matrix ``R`` with ``R @ v_body == rotate_to_inertial(q, v_body)``."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    r = np.empty((3, 3))
    r[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    r[0, 1] = 2.0 * (x * y - w * z)
    r[0, 2] = 2.0 * (x * z + w * y)
    r[1, 0] = 2.0 * (x * y + w * z)
    r[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    r[1, 2] = 2.0 * (y * z - w * x)
    r[2, 0] = 2.0 * (x * z - w * y)
    r[2, 1] = 2.0 * (y * z + w * x)
    r[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return r


@njit(cache=True, nogil=True)
def omega_mat(omega):
    """The 4x4 matrix ``A(omega) = [[0, -omega^T], [omega, -skew(omega)]]``."""
    a = np.zeros((4, 4))
    a[0, 1:] = -omega
    a[1:, 0] = omega
    a[1:, 1:] = -skew(omega)
    return a


@njit(cache=True, nogil=True)
def quat_exp_step(q, omega, dt):
    """Lie-group Euler step ``exp(dt/2 A(omega)) q`` for constant body rate.

    Closed form: ``q (x) [cos(theta/2), sin(theta/2) omega/|omega|]`` with
    ``theta = |omega| dt``, followed by renormalisation.
    """
    n = math.sqrt(omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2])
    if n == 0.0:
        return q.copy()
    half = 0.5 * n * dt
    s = math.sin(half) / n
    dq = np.empty(4)
    dq[0] = math.cos(half)
    dq[1] = s * omega[0]
    dq[2] = s * omega[1]
    dq[3] = s * omega[2]
    return quat_normalize(quat_mul(q, dq))


@njit(cache=True, nogil=True)
def geodesic_angle(q_hat, q):
    """Rotation angle in degrees of ``q_hat (x) q^-1``; invariant to ``q -> -q``."""
    e = quat_mul(q_hat, quat_inv(q))
    vn = math.sqrt(e[1] * e[1] + e[2] * e[2] + e[3] * e[3])
    return math.degrees(2.0 * math.atan2(vn, abs(e[0])))
