"""Potential and forcing models.

A potential exposes ``grad(q, R) -> (dV/dq, dV/dR)`` written with
:mod:`liesrnn.autodiff.ops` so it runs on plain arrays or on taped tensors;
either gradient may be ``None`` meaning "identically zero".  ``value`` and
``evaluate`` are numpy-only conveniences.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from .autodiff import ops as F
from .rigidbody import SystemParams


class SingularConfigurationError(ArithmeticError):
    """Two bodies (or two shape samples) are closer than the configured minimum."""


@dataclass
class PotentialEval:
    value: np.ndarray
    grad_q: np.ndarray
    grad_R: np.ndarray


def _pair_incidence(n, ordered=False):
    pairs = list(permutations(range(n), 2) if ordered else combinations(range(n), 2))
    d = np.zeros((len(pairs), n))
    for k, (i, j) in enumerate(pairs):
        d[k, i] = 1.0
        d[k, j] = -1.0
    first = np.array([i for i, _ in pairs], dtype=int)
    second = np.array([j for _, j in pairs], dtype=int)
    return d, first, second


class PotentialModel:
    has_rotation_dependence = False

    def grad(self, q, R):
        raise NotImplementedError

    def value(self, q, R):
        raise NotImplementedError

    def evaluate(self, q, R):
        q = np.asarray(q, dtype=float)
        R = np.asarray(R, dtype=float)
        gq, gr = self.grad(q, R)
        gq = np.zeros_like(q) if gq is None else np.asarray(gq)
        gr = np.zeros_like(R) if gr is None else np.asarray(gr)
        return PotentialEval(self.value(q, R), gq, gr)

    def kernel_terms(self):
        """``{"point": G, "quad": G}`` subset when a compiled kernel can evaluate this model."""
        return None


class ZeroPotential(PotentialModel):
    def grad(self, q, R):
        return None, None

    def value(self, q, R):
        return np.zeros(np.shape(q)[:-2])

    def kernel_terms(self):
        return {}


class PointMassPotential(PotentialModel):
    """``sum_{i<j} -G m_i m_j / |q_i - q_j|``."""

    def __init__(self, params: SystemParams, r_min=0.0, strict=True):
        self.n = params.n
        self.G = params.G
        self.r_min = float(r_min)
        self.strict = strict
        m = params.masses
        self.incidence, self.first, self.second = _pair_incidence(self.n)
        self.gmm = self.G * m[self.first] * m[self.second]

    def _check(self, r):
        if self.strict and np.size(r) and np.min(F.value(r)) <= self.r_min:
            raise SingularConfigurationError(f"bodies closer than r_min={self.r_min:g}")

    def grad(self, q, R=None):
        if self.n < 2:
            return None, None
        diff = F.matmul(self.incidence, q)
        r2 = F.sum(diff * diff, axis=-1)
        r = F.sqrt(r2)
        self._check(r)
        coef = self.gmm / (r2 * r)
        f = diff * F.reshape(coef, F.value(coef).shape + (1,))
        return F.matmul(self.incidence.T, f), None

    def value(self, q, R=None):
        q = np.asarray(q, dtype=float)
        if self.n < 2:
            return np.zeros(q.shape[:-2])
        r = np.sqrt(np.sum((self.incidence @ q) ** 2, axis=-1))
        self._check(r)
        return -np.sum(self.gmm / r, axis=-1)

    def kernel_terms(self):
        return {"point": self.G}


class QuadrupolePotential(PotentialModel):
    """Second-order (MacCullagh) multipole correction for every ordered pair.

    ``V_ij = G m_j / (2 r^3) * (tr J_d,i - 3 n^T R_i J_d,i R_i^T n) + (i <-> j)``
    with ``n = (q_i - q_j) / r``.
    """

    has_rotation_dependence = True

    def __init__(self, params: SystemParams, r_min=0.0, strict=True):
        self.n = params.n
        self.G = params.G
        self.r_min = float(r_min)
        self.strict = strict
        m = params.masses
        self.jd = params.nonstandard_inertias
        self.incidence, self.first, self.second = _pair_incidence(self.n, ordered=True)
        self.coef = 0.5 * self.G * m[self.second]
        self.tr_jd = self.jd.sum(axis=1)[self.first]
        self.jd_first = self.jd[self.first]
        # scatter matrix: rows = bodies, cols = ordered pairs whose first body it is
        self.scatter = np.zeros((self.n, len(self.first)))
        self.scatter[self.first, np.arange(len(self.first))] = 1.0

    def _terms(self, q, R):
        d = F.matmul(self.incidence, q)
        r2 = F.sum(d * d, axis=-1)
        if self.strict and np.size(r2) and np.min(F.value(r2)) <= self.r_min**2:
            raise SingularConfigurationError(f"bodies closer than r_min={self.r_min:g}")
        r_first = R[..., self.first, :, :]
        rtd = F.matvec(F.mT(r_first), d)  # R_i^T d
        s = F.sum(rtd * rtd * self.jd_first, axis=-1)  # d^T R_i J_d R_i^T d
        return d, r2, r_first, rtd, s

    def value(self, q, R):
        q = np.asarray(q, dtype=float)
        R = np.asarray(R, dtype=float)
        if self.n < 2:
            return np.zeros(q.shape[:-2])
        d, r2, _, _, s = self._terms(q, R)
        r = np.sqrt(r2)
        r3 = r2 * r
        return np.sum(self.coef * (self.tr_jd / r3 - 3.0 * s / (r3 * r2)), axis=-1)

    def grad(self, q, R):
        if self.n < 2:
            return None, None
        d, r2, r_first, rtd, s = self._terms(q, R)
        r = F.sqrt(r2)
        r5 = r2 * r2 * r
        inv_r5 = 1.0 / r5
        inv_r7 = inv_r5 / r2
        a_d = F.matvec(r_first, rtd * self.jd_first)  # A_i d
        shape = F.value(r2).shape + (1,)
        lin = F.reshape(-3.0 * self.tr_jd * inv_r5 + 15.0 * s * inv_r7, shape)
        dtdd = F.reshape(self.coef, (-1, 1)) * (d * lin - 6.0 * a_d * F.reshape(inv_r5, shape))
        gq = F.matmul(self.incidence.T, dtdd)
        # dT/dR_i = -3 G m_j / r^5 * d (R_i^T d)^T J_d,i
        w = F.reshape(-6.0 * self.coef * inv_r5, shape + (1,))
        outer = w * F.reshape(d, F.value(d).shape + (1,)) * F.reshape(rtd * self.jd_first, F.value(rtd).shape[:-1] + (1, 3))
        lead = F.value(outer).shape[:-3]
        flat = F.reshape(outer, lead + (len(self.first), 9))
        gr = F.reshape(F.matmul(self.scatter, flat), lead + (self.n, 3, 3))
        return gq, gr

    def kernel_terms(self):
        return {"quad": self.G}


class CompositePotential(PotentialModel):
    """Sum of potentials (values and gradients)."""

    def __init__(self, models):
        self.models = list(models)
        if not self.models:
            raise ValueError("composite potential needs at least one model")
        self.has_rotation_dependence = any(m.has_rotation_dependence for m in self.models)

    def grad(self, q, R):
        gq = gr = None
        for m in self.models:
            a, b = m.grad(q, R)
            if a is not None:
                gq = a if gq is None else gq + a
            if b is not None:
                gr = b if gr is None else gr + b
        return gq, gr

    def value(self, q, R):
        return sum(m.value(q, R) for m in self.models)

    def kernel_terms(self):
        terms = {}
        for m in self.models:
            t = m.kernel_terms()
            if t is None or any(k in terms for k in t):
                return None
            terms.update(t)
        return terms


def composite_potential(models):
    models = list(models)
    return models[0] if len(models) == 1 else CompositePotential(models)


# ---------------------------------------------------------------- forcing


class ForcingModel:
    def forces(self, q, R, p, Pi):
        """``(F_p, F_Pi)`` per body, or ``None`` for no forcing."""
        raise NotImplementedError

    def kernel_terms(self):
        return None


class ZeroForcing(ForcingModel):
    def forces(self, q, R, p, Pi):
        return None

    def kernel_terms(self):
        return {}


class DragForcing(ForcingModel):
    """Linear drag on both momenta: ``F_p = -c_p p``, ``F_Pi = -c_Pi Pi``."""

    def __init__(self, c_p, c_Pi):
        if c_p < 0 or c_Pi < 0:
            raise ValueError("drag coefficients must be non-negative")
        self.c_p = float(c_p)
        self.c_Pi = float(c_Pi)

    def forces(self, q, R, p, Pi):
        return -self.c_p * p, -self.c_Pi * Pi

    def kernel_terms(self):
        return {"drag": (self.c_p, self.c_Pi)}


def synthetic_drag_forcing(c_p, c_Pi):
    return DragForcing(c_p, c_Pi)


# ---------------------------------------------------------------- point-cloud oracle


@dataclass
class BodyShape:
    """Mass samples of one body in its principal frame (centre of mass at the origin)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if np.any(self.weights < 0):
            raise ValueError("sample weights must be non-negative")
        com = self.weights @ self.points
        scale = max(1.0, float(np.abs(self.points).max(initial=0.0))) * max(1.0, self.mass)
        if np.abs(com).max() > 1e-12 * scale:
            raise ValueError("shape centre of mass must be at the origin")

    @property
    def mass(self):
        return float(self.weights.sum())

    def second_moment(self):
        """``J_d = sum rho x x^T``."""
        return np.einsum("k,ki,kj->ij", self.weights, self.points, self.points)

    def inertia(self):
        """``J = sum rho (|x|^2 I - x x^T)``."""
        jd = self.second_moment()
        return np.trace(jd) * np.eye(3) - jd


def point_shape(mass):
    return BodyShape(np.zeros((1, 3)), np.array([float(mass)]))


def cuboid_shape(body, n=8):
    """Uniform ``n^3`` grid whose discrete second moments equal the body's ``J_d`` exactly."""
    jd = 0.5 * sum(body.inertia) - np.asarray(body.inertia)
    if np.any(jd < 0):
        raise ValueError("inertia violates the triangle inequality; no cuboid matches it")
    m = body.mass
    k = np.arange(n) - 0.5 * (n - 1)
    if n > 1:
        spacing = np.sqrt(12.0 * jd / (m * (n * n - 1)))
    else:
        spacing = np.zeros(3)
    gx, gy, gz = np.meshgrid(k * spacing[0], k * spacing[1], k * spacing[2], indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return BodyShape(pts, np.full(len(pts), m / len(pts)))


def rod_shape(mass, half_length, n=8):
    """Uniform samples on the body z axis; symmetric under any rotation about z."""
    z = np.linspace(-half_length, half_length, n)
    pts = np.zeros((n, 3))
    pts[:, 2] = z
    return BodyShape(pts, np.full(n, mass / n))


def v_pointcloud_oracle(q, R, shapes, G, r_min=0.0, chunk=512):
    """Brute-force double sum over shape samples of ``-G rho_k rho_l / |x_k - x_l|``."""
    q = np.asarray(q, dtype=float)
    R = np.asarray(R, dtype=float)
    world = [q[i] + shapes[i].points @ R[i].T for i in range(len(shapes))]
    total = 0.0
    for i, j in combinations(range(len(shapes)), 2):
        xj, wj = world[j], shapes[j].weights
        for start in range(0, len(world[i]), chunk):
            xi = world[i][start:start + chunk]
            wi = shapes[i].weights[start:start + chunk]
            d = np.sqrt(np.sum((xi[:, None, :] - xj[None, :, :]) ** 2, axis=-1))
            if d.min() <= r_min:
                raise SingularConfigurationError("shape samples overlap")
            total -= G * np.sum(wi[:, None] * wj[None, :] / d)
    return total


def v_point(q, params: SystemParams):
    model = PointMassPotential(params)
    return model.evaluate(q, np.broadcast_to(np.eye(3), np.shape(q)[:-1] + (3, 3)))


def v_quadrupole(q, R, params: SystemParams):
    return QuadrupolePotential(params).evaluate(q, R)


def truth_potential(params: SystemParams, quadrupole=True, r_min=0.0):
    """Point-mass gravity, optionally with the quadrupole correction."""
    models = [PointMassPotential(params, r_min=r_min)]
    if quadrupole:
        models.append(QuadrupolePotential(params, r_min=r_min))
    return composite_potential(models)
