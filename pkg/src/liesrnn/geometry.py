"""SO(3) primitives: hat/vee, axis-angle rotations, geodesic distance.

All functions accept stacked inputs; the trailing axes carry the vector
(``(..., 3)``) or matrix (``(..., 3, 3)``) structure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-8
ROTATION_TOL = 1e-9


def hat(u):
    """Cross-product matrix: ``hat(u) @ v == cross(u, v)``."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape + (3,))
    out[..., 0, 1] = -u[..., 2]
    out[..., 0, 2] = u[..., 1]
    out[..., 1, 0] = u[..., 2]
    out[..., 1, 2] = -u[..., 0]
    out[..., 2, 0] = -u[..., 1]
    out[..., 2, 1] = u[..., 0]
    return out


def vee(m, tol=ROTATION_TOL):
    """Inverse of :func:`hat`.

    Raises ``ValueError`` when ``m`` is not skew-symmetric within ``tol``
    (relative to its magnitude); feeding a non-skew matrix here is a bug in
    the caller.
    """
    m = np.asarray(m, dtype=float)
    asym = np.abs(m + np.swapaxes(m, -1, -2)).max(initial=0.0)
    scale = max(1.0, np.abs(m).max(initial=0.0))
    if asym > tol * scale:
        raise ValueError(f"matrix is not skew-symmetric (|m + m^T| = {asym:.3e})")
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def _rodrigues_coeffs(theta):
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    half = np.sin(0.5 * safe)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, 2.0 * half * half / (safe * safe))
    return a, b


def exp_so3(omega):
    """Matrix exponential of ``hat(omega)`` via Rodrigues' formula."""
    omega = np.asarray(omega, dtype=float)
    theta = np.sqrt(np.sum(omega * omega, axis=-1))
    a, b = _rodrigues_coeffs(theta)
    k = hat(omega)
    return np.eye(3) + a[..., None, None] * k + b[..., None, None] * (k @ k)


def rot_axis(axis, angle):
    """Rotation by ``angle`` radians about ``axis``; identity for a zero axis."""
    axis = np.asarray(axis, dtype=float)
    norm = np.sqrt(np.sum(axis * axis, axis=-1))
    unit = np.where(norm[..., None] > 0.0, axis / np.where(norm > 0.0, norm, 1.0)[..., None], 0.0)
    return exp_so3(unit * np.asarray(angle, dtype=float)[..., None])


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def log_so3(r):
    """Rotation vector of ``r`` (angle in ``[0, pi]``), for diagnostics and tests."""
    r = np.asarray(r, dtype=float)
    theta = geodesic_distance(np.eye(3), r)
    w = np.stack([r[..., 2, 1] - r[..., 1, 2], r[..., 0, 2] - r[..., 2, 0], r[..., 1, 0] - r[..., 0, 1]], axis=-1)
    s = np.sin(theta)
    scale = np.where(theta < 1e-8, 0.5, theta / (2.0 * np.where(s > 1e-12, s, 1.0)))
    out = scale[..., None] * w
    near_pi = np.pi - theta < 1e-6
    if np.any(near_pi):
        # sin(theta) ~ 0: recover the axis from the symmetric part instead.
        sym = 0.5 * (r + np.eye(3))
        for idx in zip(*np.nonzero(np.atleast_1d(near_pi))):
            rr = sym[idx] if sym.ndim > 2 else sym
            col = int(np.argmax(np.diag(rr)))
            axis = rr[:, col] / np.sqrt(rr[col, col])
            val = np.pi * axis / np.linalg.norm(axis)
            if out.ndim > 1:
                out[idx] = val
            else:
                out = val
    return out


def geodesic_distance(a, b):
    """Angle of the relative rotation ``a^T b``, in ``[0, pi]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    tr = np.einsum("...ij,...ij->...", a, b)
    return np.arccos(np.clip(0.5 * (tr - 1.0), -1.0, 1.0))


def orthonormality_defect(m):
    """Frobenius norm of ``m^T m - I``."""
    m = np.asarray(m, dtype=float)
    e = np.swapaxes(m, -1, -2) @ m - np.eye(3)
    return np.sqrt(np.sum(e * e, axis=(-2, -1)))


@dataclass(frozen=True)
class Rotation:
    """A validated element of SO(3).

    Construction rejects matrices off the manifold; integrator states hold
    raw matrices instead, since baseline schemes drift off it by design.
    """

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("rotation must be a finite 3x3 matrix")
        defect = orthonormality_defect(m)
        det = np.linalg.det(m)
        if defect > ROTATION_TOL or abs(det - 1.0) > ROTATION_TOL:
            raise ValueError(f"not a rotation: defect={defect:.3e}, det={det:.12f}")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @classmethod
    def from_axis_angle(cls, axis, angle):
        return cls(rot_axis(axis, angle))

    def __matmul__(self, other):
        if isinstance(other, Rotation):
            return Rotation(self.m @ other.m)
        return self.m @ np.asarray(other, dtype=float)

    def inv(self):
        return Rotation(self.m.T)
