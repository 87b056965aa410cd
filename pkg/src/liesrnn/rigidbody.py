"""Rigid-body phase-space state, inertia bookkeeping and equations of motion."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .autodiff import ops as F


@dataclass(frozen=True)
class BodyParams:
    """Mass and principal moments of inertia ``(J1, J2, J3)`` of one body."""

    mass: float
    inertia: tuple

    def __post_init__(self):
        j = np.asarray(self.inertia, dtype=float)
        if j.shape == (3, 3):
            if np.abs(j - np.diag(np.diag(j))).max() > 0.0:
                raise ValueError("inertia must be diagonal in the principal body frame")
            j = np.diag(j)
        if j.shape != (3,):
            raise ValueError("inertia must be three principal moments")
        if not self.mass > 0.0:
            raise ValueError("mass must be positive")
        if np.any(j <= 0.0):
            raise ValueError("principal moments must be positive")
        j1, j2, j3 = j
        if j1 + j2 < j3 or j2 + j3 < j1 or j1 + j3 < j2:
            warnings.warn("principal moments violate the triangle inequality", stacklevel=3)
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "inertia", tuple(float(x) for x in j))

    @property
    def J(self):
        return np.array(self.inertia)


@dataclass(frozen=True)
class SystemParams:
    bodies: tuple
    G: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        if not self.bodies:
            raise ValueError("need at least one body")
        if not self.G > 0.0:
            raise ValueError("G must be positive")

    @property
    def n(self):
        return len(self.bodies)

    @property
    def masses(self):
        return np.array([b.mass for b in self.bodies])

    @property
    def inertias(self):
        """``(N, 3)`` principal moments."""
        return np.array([b.inertia for b in self.bodies])

    @property
    def nonstandard_inertias(self):
        """``(N, 3)`` diagonals of ``J_d = tr(J)/2 I - J``."""
        j = self.inertias
        return 0.5 * j.sum(axis=1, keepdims=True) - j


class Phase(NamedTuple):
    """Array view of a system state: ``q, p (..., N, 3)``, ``R (..., N, 3, 3)``, ``Pi (..., N, 3)``.

    Components may be numpy arrays or taped tensors.
    """

    q: object
    p: object
    R: object
    Pi: object

    def values(self):
        return Phase(*(F.value(x) for x in self))

    def finite(self):
        """Per-leading-index finiteness (reduces the body/vector axes)."""
        q, p, r, pi = self.values()
        ok = np.isfinite(q).all(axis=(-2, -1)) & np.isfinite(p).all(axis=(-2, -1))
        ok &= np.isfinite(r).all(axis=(-3, -2, -1)) & np.isfinite(pi).all(axis=(-2, -1))
        return ok


@dataclass(frozen=True)
class BodyState:
    q: np.ndarray
    p: np.ndarray
    R: np.ndarray
    Pi: np.ndarray

    def __post_init__(self):
        for name, shape in (("q", (3,)), ("p", (3,)), ("R", (3, 3)), ("Pi", (3,))):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class SystemState:
    t: float
    bodies: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "t", float(self.t))
        if not self.bodies:
            raise ValueError("need at least one body")

    @property
    def n(self):
        return len(self.bodies)

    def phase(self):
        """Stacked arrays with shapes ``(N, 3)`` / ``(N, 3, 3)``."""
        return Phase(
            np.stack([b.q for b in self.bodies]),
            np.stack([b.p for b in self.bodies]),
            np.stack([b.R for b in self.bodies]),
            np.stack([b.Pi for b in self.bodies]),
        )

    @classmethod
    def from_phase(cls, t, phase):
        q, p, r, pi = phase.values()
        return cls(t, tuple(BodyState(q[i], p[i], r[i], pi[i]) for i in range(q.shape[0])))


class Derivatives(NamedTuple):
    dq: np.ndarray
    dp: np.ndarray
    dR: np.ndarray
    dPi: np.ndarray


def nonstandard_inertia(params: BodyParams):
    """``J_d = tr(J)/2 * I - J`` as a diagonal matrix; inverse of ``J = tr(J_d) I - J_d``."""
    j = params.J
    return np.diag(0.5 * j.sum() - j)


def kinetic_energy(state: SystemState, params: SystemParams):
    x = state.phase()
    return float(kinetic_energy_arrays(x, params.masses, params.inertias))


def kinetic_energy_arrays(x, m, j):
    """Translational plus rotational kinetic energy, summed over bodies."""
    q, p, r, pi = x.values()
    trans = 0.5 * np.sum(p * p, axis=-1) / m
    rot = 0.5 * np.sum(pi * pi / j, axis=-1)
    return np.sum(trans + rot, axis=-1)


def hamiltonian(state: SystemState, params: SystemParams, potential):
    x = state.phase()
    return float(kinetic_energy_arrays(x, params.masses, params.inertias) + potential.value(x.q, x.R))


def hamiltonian_arrays(x, params: SystemParams, potential):
    return kinetic_energy_arrays(x, params.masses, params.inertias) + potential.value(x.values().q, x.values().R)


def skew_project_torque(R, dVdR):
    """``vee(R^T dV/dR - (dV/dR)^T R)``: the generalized torque entering ``dPi/dt`` with a minus sign."""
    return F.vee(F.matmul(F.mT(R), dVdR) - F.matmul(F.mT(dVdR), R))


def eom_arrays(x, m, j, potential, forcing=None):
    """Right-hand side of the rigid-body equations for stacked arrays.

    ``R`` is treated as a flat 3x3 matrix: ``dR = R hat(J^-1 Pi)`` without any
    projection.
    """
    q, p, r, pi = x
    gq, gr = potential.grad(q, r)
    omega = pi / j
    dq = p / m[:, None]
    dp = None if gq is None else -gq
    dpi = F.cross(pi, omega)
    if gr is not None:
        dpi = dpi - skew_project_torque(r, gr)
    if forcing is not None:
        f = forcing.forces(q, r, p, pi)
        if f is not None:
            dp = f[0] if dp is None else dp + f[0]
            dpi = dpi + f[1]
    if dp is None:
        dp = np.zeros(np.shape(F.value(p)))
    dr = F.matmul(r, F.hat(omega))
    return Derivatives(dq, dp, dr, dpi)


def eom(state: SystemState, params: SystemParams, potential, forcing=None):
    """Time derivatives ``(dq, dp, dR, dPi)`` of every body, stacked."""
    d = eom_arrays(state.phase(), params.masses, params.inertias, potential, forcing)
    return Derivatives(*(np.asarray(v) for v in d))


__all__ = [
    "BodyParams",
    "BodyState",
    "Derivatives",
    "Phase",
    "SystemParams",
    "SystemState",
    "eom",
    "eom_arrays",
    "hamiltonian",
    "hamiltonian_arrays",
    "kinetic_energy",
    "kinetic_energy_arrays",
    "nonstandard_inertia",
    "skew_project_torque",
]
