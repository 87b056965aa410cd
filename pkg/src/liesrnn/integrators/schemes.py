"""Split flows and step schemes on stacked arrays.

Everything here is written against :mod:`liesrnn.autodiff.ops`, so the same
code advances plain numpy states and taped states (for training through a
rollout).  Leading batch axes are allowed on every state component.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..autodiff import ops as F
from ..potentials import ZeroForcing
from ..rigidbody import Phase, SystemParams, eom_arrays, skew_project_torque

_E_Y = np.array([0.0, 1.0, 0.0])
_E_Z = np.array([0.0, 0.0, 1.0])


class StepScheme(str, Enum):
    EULER = "euler"
    RK4 = "rk4"
    VERLET = "verlet"
    LIE_RK2 = "lie_rk2"
    LIE_RK4 = "lie_rk4"
    LIE_T2 = "lie_t2"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        key = {"cf2": "lie_rk2", "cf4": "lie_rk4", "liet2": "lie_t2", "explicit_euler": "euler"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown integrator scheme {name!r}") from None


ALL_SCHEMES = tuple(StepScheme)


@dataclass
class StepContext:
    """Physics and step size shared by every scheme.

    ``verlet_literal`` uses full-``h`` drifts and ``R(0)`` in the kick torque,
    as the naive scheme is sometimes written; ``asym_left`` applies the
    asymmetric-kinetic rotation on the left of ``R`` instead of the right.
    """

    params: SystemParams
    potential: object
    forcing: object = None
    h: float = 1e-2
    verlet_literal: bool = False
    asym_left: bool = False

    def __post_init__(self):
        if self.forcing is None:
            self.forcing = ZeroForcing()
        if not np.isfinite(self.h) or self.h == 0.0:
            raise ValueError("step size must be finite and non-zero")
        self.m = self.params.masses
        self.J = self.params.inertias

    def with_h(self, h):
        return StepContext(self.params, self.potential, self.forcing, h, self.verlet_literal, self.asym_left)


def _col(x):
    return F.reshape(x, np.shape(F.value(x)) + (1,))


# ---------------------------------------------------------------- exact split flows


def flow_ke(x: Phase, m, J, h):
    """Exact flow of the translational + axisymmetric kinetic energy."""
    q, p, r, pi = x
    inv1 = 1.0 / J[:, 0]
    theta = (1.0 / J[:, 2] - inv1) * pi[..., 2]
    spin = F.expmap(pi * _col(h * inv1))  # rotation by |Pi| h / J1 about Pi
    rz = F.expmap(_col(theta * h) * _E_Z)
    q = q + p / m[:, None] * h
    r = F.matmul(F.matmul(r, spin), rz)
    pi = F.matvec(F.mT(rz), pi)
    return Phase(q, p, r, pi)


def flow_pe(x: Phase, potential, h):
    """Exact flow of the potential: constant-rate momentum kicks."""
    q, p, r, pi = x
    gq, gr = potential.grad(q, r)
    if gq is not None:
        p = p - gq * h
    if gr is not None:
        pi = pi - skew_project_torque(r, gr) * h
    return Phase(q, p, r, pi)


def flow_asym(x: Phase, J, h, left=False):
    """Exact flow of the asymmetric kinetic correction ``(1/J2 - 1/J1) Pi_y^2 / 2``."""
    delta = 1.0 / J[:, 1] - 1.0 / J[:, 0]
    if not np.any(delta):
        return x
    q, p, r, pi = x
    ry = F.expmap(_col(delta * pi[..., 1] * h) * _E_Y)
    r = F.matmul(ry, r) if left else F.matmul(r, ry)
    pi = F.matvec(F.mT(ry), pi)
    return Phase(q, p, r, pi)


def flow_force(x: Phase, forcing, h):
    """Non-conservative momentum update at frozen configuration."""
    q, p, r, pi = x
    f = forcing.forces(q, r, p, pi) if forcing is not None else None
    if f is None:
        return x
    return Phase(q, p + f[0] * h, r, pi + f[1] * h)


# ---------------------------------------------------------------- schemes


def step_lie_t2(x, ctx: StepContext, h=None):
    """Strang composition KE/PE/asym/force/asym/PE/KE (rightmost acts first)."""
    h = ctx.h if h is None else h
    half = 0.5 * h
    x = flow_ke(x, ctx.m, ctx.J, half)
    x = flow_pe(x, ctx.potential, half)
    x = flow_asym(x, ctx.J, half, ctx.asym_left)
    x = flow_force(x, ctx.forcing, h)
    x = flow_asym(x, ctx.J, half, ctx.asym_left)
    x = flow_pe(x, ctx.potential, half)
    return flow_ke(x, ctx.m, ctx.J, half)


def _eom(x, ctx):
    return eom_arrays(x, ctx.m, ctx.J, ctx.potential, ctx.forcing)


def _axpy(x, d, h):
    return Phase(x.q + d.dq * h, x.p + d.dp * h, x.R + d.dR * h, x.Pi + d.dPi * h)


def step_euler(x, ctx: StepContext, h=None):
    h = ctx.h if h is None else h
    return _axpy(x, _eom(x, ctx), h)


def step_rk4(x, ctx: StepContext, h=None):
    """Classical RK4 with ``R`` advanced as an unconstrained 3x3 matrix."""
    h = ctx.h if h is None else h
    k1 = _eom(x, ctx)
    k2 = _eom(_axpy(x, k1, 0.5 * h), ctx)
    k3 = _eom(_axpy(x, k2, 0.5 * h), ctx)
    k4 = _eom(_axpy(x, k3, h), ctx)
    w = h / 6.0
    return Phase(*(
        x[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * w for i in range(4)
    ))


def step_verlet(x, ctx: StepContext, h=None):
    """Drift / kick / drift with ``R`` drifted additively off the manifold."""
    h = ctx.h if h is None else h
    q, p, r, pi = x
    m, J = ctx.m, ctx.J
    drift = h if ctx.verlet_literal else 0.5 * h
    omega = pi / J
    q_half = q + p / m[:, None] * drift
    r_half = r + F.matmul(r, F.hat(omega)) * drift
    gq, gr = ctx.potential.grad(q_half, r_half)
    dp = None if gq is None else -gq
    dpi = F.cross(pi, omega)
    if gr is not None:
        dpi = dpi - skew_project_torque(r if ctx.verlet_literal else r_half, gr)
    f = ctx.forcing.forces(q_half, r_half, p, pi) if ctx.forcing is not None else None
    if f is not None:
        dp = f[0] if dp is None else dp + f[0]
        dpi = dpi + f[1]
    p1 = p if dp is None else p + dp * h
    pi1 = pi + dpi * h
    q1 = q_half + p1 / m[:, None] * drift
    r1 = r_half + F.matmul(r_half, F.hat(pi1 / J)) * drift
    return Phase(q1, p1, r1, pi1)


def _euclid(x0, d, h, r):
    return Phase(x0.q + d.dq * h, x0.p + d.dp * h, r, x0.Pi + d.dPi * h)


def _rexp(r, omega, h):
    """``R exp(h hat(omega))``: body-frame angular velocity acts on the right."""
    return F.matmul(r, F.expmap(omega * h))


def step_lie_rk2(x, ctx: StepContext, h=None):
    """Commutator-free midpoint method: RK2 for ``(q, p, Pi)``, exponentials for ``R``."""
    h = ctx.h if h is None else h
    J = ctx.J
    k1 = _eom(x, ctx)
    mid = _euclid(x, k1, 0.5 * h, _rexp(x.R, x.Pi / J, 0.5 * h))
    k2 = _eom(mid, ctx)
    return _euclid(x, k2, h, _rexp(x.R, mid.Pi / J, h))


def step_lie_rk4(x, ctx: StepContext, h=None):
    """Fourth-order commutator-free method (two exponentials in the final stage)."""
    h = ctx.h if h is None else h
    J = ctx.J
    r0 = x.R
    k1 = _eom(x, ctx)
    w1 = x.Pi / J
    r1 = _rexp(r0, w1, 0.5 * h)
    x1 = _euclid(x, k1, 0.5 * h, r1)
    k2 = _eom(x1, ctx)
    w2 = x1.Pi / J
    x2 = _euclid(x, k2, 0.5 * h, _rexp(r0, w2, 0.5 * h))
    k3 = _eom(x2, ctx)
    w3 = x2.Pi / J
    x3 = _euclid(x, k3, h, _rexp(r1, w3 - 0.5 * w1, h))
    k4 = _eom(x3, ctx)
    w4 = x3.Pi / J
    r_half = _rexp(r0, 3.0 * w1 + 2.0 * w2 + 2.0 * w3 - w4, h / 12.0)
    r_new = _rexp(r_half, -w1 + 2.0 * w2 + 2.0 * w3 + 3.0 * w4, h / 12.0)
    w = h / 6.0
    return Phase(
        x.q + (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq) * w,
        x.p + (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp) * w,
        r_new,
        x.Pi + (k1.dPi + 2.0 * k2.dPi + 2.0 * k3.dPi + k4.dPi) * w,
    )


STEPPERS = {
    StepScheme.EULER: step_euler,
    StepScheme.RK4: step_rk4,
    StepScheme.VERLET: step_verlet,
    StepScheme.LIE_RK2: step_lie_rk2,
    StepScheme.LIE_RK4: step_lie_rk4,
    StepScheme.LIE_T2: step_lie_t2,
}


def stepper(scheme):
    return STEPPERS[StepScheme.parse(scheme)]
