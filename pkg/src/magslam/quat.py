"""Quaternion and small-rotation algebra.

Convention: Hamilton product, scalar-first ``[w, x, y, z]``.  ``quat_to_rot(q)``
maps body-frame vectors to the world frame, and ``exp_q`` uses the half-angle
map so that ``quat_to_rot(exp_q(v)) == expm(skew(v))``.
"""

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def quat_mul(a, b):
    """Hamilton product ``a ⊙ b``, renormalized."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    out = np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])
    return out / np.linalg.norm(out)


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def exp_q(v):
    """Map an axis-angle rotation vector to a unit quaternion."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    half = 0.5 * theta
    if theta < 1e-8:
        # sin(x/2)/x series, accurate to O(x^4)
        k = 0.5 - theta * theta / 48.0
    else:
        k = np.sin(half) / theta
    out = np.concatenate(([np.cos(half)], k * v))
    return out / np.linalg.norm(out)


def log_q(q):
    """Inverse of :func:`exp_q`; returns the rotation vector with angle in [0, pi]."""
    q = normalize(q)
    if q[0] < 0:
        q = -q
    vec = q[1:]
    s = np.linalg.norm(vec)
    if s < 1e-12:
        return 2.0 * vec
    theta = 2.0 * np.arctan2(s, q[0])
    return theta * vec / s


def quat_to_rot(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def skew(u):
    """Cross-product matrix: ``skew(u) @ v == np.cross(u, v)``."""
    return np.array([
        [0.0, -u[2], u[1]],
        [u[2], 0.0, -u[0]],
        [-u[1], u[0], 0.0],
    ])


def yaw_quat(yaw):
    return exp_q([0.0, 0.0, yaw])
