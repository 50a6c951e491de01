"""Rotation representations: 6D, matrix, axis-angle, quaternion (w, x, y, z).

``rot6d_to_matrix`` and ``axis_angle_to_matrix`` accept either numpy arrays
or autodiff ``Tensor``s and return the same kind, so the regressor can train
through them.  Everything else is plain numpy, batched over leading axes.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DEGENERATE_EPS = 1e-8


class DegenerateRotation(ValueError):
    pass


def _skew_basis():
    # skew(v)[i, j] = -eps_ijk v_k, flattened row-major into 9 columns
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    return -np.transpose(eps, (2, 0, 1)).reshape(3, 9)


_SKEW = _skew_basis()


def rot6d_to_matrix(r):
    """Gram-Schmidt on the two stacked 3-vectors; they become columns 0 and 1."""
    is_tensor = isinstance(r, Tensor)
    t = ad.as_tensor(r)
    if t.shape[-1] != 6:
        raise ad.ShapeError(f"rot6d_to_matrix: last axis must be 6, got {t.shape}")
    a1 = t[..., 0:3]
    a2 = t[..., 3:6]
    n1 = ad.sqrt(ad.sqnorm(a1, axis=-1, keepdims=True))
    if np.any(n1.value < DEGENERATE_EPS):
        raise DegenerateRotation("rot6d_to_matrix: first vector has (near) zero norm")
    b1 = a1 / n1
    u = a2 - ad.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = ad.sqrt(ad.sqnorm(u, axis=-1, keepdims=True))
    if np.any(n2.value < DEGENERATE_EPS):
        raise DegenerateRotation("rot6d_to_matrix: second vector parallel to the first")
    b2 = u / n2
    b3 = ad.cross(b1, b2)
    R = ad.stack([b1, b2, b3], axis=-1)
    return R if is_tensor else R.value


def matrix_to_rot6d(R):
    R = np.asarray(R, dtype=np.float64)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def axis_angle_to_matrix(aa):
    """Rodrigues' formula, written so it stays finite (and differentiable) at zero."""
    is_tensor = isinstance(aa, Tensor)
    t = ad.as_tensor(aa)
    if t.shape[-1] != 3:
        raise ad.ShapeError(f"axis_angle_to_matrix: last axis must be 3, got {t.shape}")
    sq = ad.sqnorm(t, axis=-1, keepdims=True)
    angle = ad.sqrt(sq + 1e-30)
    a = ad.expand_dims(ad.sin(angle) / angle, -1)
    half = ad.sin(0.5 * angle)
    b = ad.expand_dims(2.0 * half * half / (angle * angle), -1)
    K = ad.reshape(ad.matmul(t, _SKEW), t.shape[:-1] + (3, 3))
    R = np.eye(3) + a * K + b * ad.matmul(K, K)
    return R if is_tensor else R.value


def canonicalize_quaternion(q):
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., :1] < 0, -q, q)


def matrix_to_quaternion(R):
    """Shepperd's method: pick the largest of (trace, diagonal) to divide by."""
    R = np.asarray(R, dtype=np.float64)
    batch = R.shape[:-2]
    m = R.reshape(-1, 3, 3)
    r00, r01, r02 = m[:, 0, 0], m[:, 0, 1], m[:, 0, 2]
    r10, r11, r12 = m[:, 1, 0], m[:, 1, 1], m[:, 1, 2]
    r20, r21, r22 = m[:, 2, 0], m[:, 2, 1], m[:, 2, 2]
    tr = r00 + r11 + r22
    choice = np.argmax(np.stack([tr, r00, r11, r22], axis=1), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = 2.0 * np.sqrt(np.maximum(np.stack([
            1.0 + tr, 1.0 + r00 - r11 - r22, 1.0 + r11 - r00 - r22, 1.0 + r22 - r00 - r11,
        ], axis=1), 0.0))
        cands = np.stack([
            np.stack([0.25 * s[:, 0], (r21 - r12) / s[:, 0], (r02 - r20) / s[:, 0], (r10 - r01) / s[:, 0]], -1),
            np.stack([(r21 - r12) / s[:, 1], 0.25 * s[:, 1], (r01 + r10) / s[:, 1], (r02 + r20) / s[:, 1]], -1),
            np.stack([(r02 - r20) / s[:, 2], (r01 + r10) / s[:, 2], 0.25 * s[:, 2], (r12 + r21) / s[:, 2]], -1),
            np.stack([(r10 - r01) / s[:, 3], (r02 + r20) / s[:, 3], (r12 + r21) / s[:, 3], 0.25 * s[:, 3]], -1),
        ], axis=1)
    q = cands[np.arange(m.shape[0]), choice]
    return canonicalize_quaternion(q).reshape(batch + (4,))


def quaternion_to_matrix(q):
    q = canonicalize_quaternion(q)
    w, x, y, z = np.moveaxis(q, -1, 0)
    R = np.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
        2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
        2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y),
    ], axis=-1)
    return R.reshape(q.shape[:-1] + (3, 3))


def axis_angle_to_quaternion(aa):
    aa = np.asarray(aa, dtype=np.float64)
    angle = np.linalg.norm(aa, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sin(a/2)/a, with its Taylor expansion near zero
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(angle > 1e-8, np.sin(half) / np.where(angle > 0, angle, 1.0),
                     0.5 - angle * angle / 48.0)
    q = np.concatenate([np.cos(half), k * aa], axis=-1)
    return canonicalize_quaternion(q)


def quaternion_to_axis_angle(q):
    """Angle lands in [0, pi] because the quaternion is canonicalized to w >= 0."""
    q = canonicalize_quaternion(q)
    w = q[..., :1]
    v = q[..., 1:]
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(n, w)
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(n > 1e-8, angle / np.where(n > 0, n, 1.0),
                          2.0 / w * (1.0 - (n / w) ** 2 / 3.0))
    return factor * v


def matrix_to_axis_angle(R):
    return quaternion_to_axis_angle(matrix_to_quaternion(R))


def quaternion_multiply(a, b):
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quaternion_conjugate(q):
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quaternion_angle(q0, q1):
    """Rotation angle between two unit quaternions, in [0, pi]."""
    rel = quaternion_multiply(quaternion_conjugate(q0), q1)
    return 2.0 * np.arctan2(np.linalg.norm(rel[..., 1:], axis=-1), np.abs(rel[..., 0]))


def slerp(q0, q1, u):
    """Shortest-arc spherical interpolation; ``u`` in [0, 1].  Batched over leading axes."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"slerp: u={u} outside [0, 1]")
    q0 = canonicalize_quaternion(q0)
    q1 = canonicalize_quaternion(q1)
    d = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(d < 0, -q1, q1)
    # angle via atan2 of the chord is accurate for nearly equal quaternions
    theta = 2.0 * np.arctan2(np.linalg.norm(q1 - q0, axis=-1, keepdims=True),
                             np.linalg.norm(q1 + q0, axis=-1, keepdims=True))
    sin_t = np.sin(theta)
    small = sin_t < 1e-12
    safe = np.where(small, 1.0, sin_t)
    w0 = np.where(small, 1.0 - u, np.sin((1.0 - u) * theta) / safe)
    w1 = np.where(small, u, np.sin(u * theta) / safe)
    return canonicalize_quaternion(w0 * q0 + w1 * q1)
