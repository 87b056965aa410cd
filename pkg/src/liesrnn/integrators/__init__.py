"""Step schemes and rollouts for rigid-body N-body systems.

The state-level functions here take and return :class:`SystemState`; the
array-level versions in :mod:`liesrnn.integrators.schemes` work on stacked
(and optionally batched or taped) :class:`Phase` tuples.
"""
from __future__ import annotations

import numpy as np

from .. import _backend
from ..autodiff import ops as F
from ..rigidbody import Phase, SystemState
from . import schemes
from .schemes import ALL_SCHEMES, STEPPERS, StepContext, StepScheme, stepper


class DivergenceError(ArithmeticError):
    """A rollout produced a non-finite state at ``step`` (1-based)."""

    def __init__(self, step, message=None):
        self.step = int(step)
        super().__init__(message or f"non-finite state at step {self.step}")


def _lift(fn):
    def wrapped(state: SystemState, ctx: StepContext, h=None):
        h = ctx.h if h is None else h
        return SystemState.from_phase(state.t + h, fn(state.phase(), ctx, h))

    wrapped.__name__ = fn.__name__
    wrapped.__doc__ = fn.__doc__
    return wrapped


step_euler = _lift(schemes.step_euler)
step_rk4 = _lift(schemes.step_rk4)
step_verlet = _lift(schemes.step_verlet)
step_lie_rk2 = _lift(schemes.step_lie_rk2)
step_lie_rk4 = _lift(schemes.step_lie_rk4)
step_lie_t2 = _lift(schemes.step_lie_t2)
step_cf2 = step_lie_rk2
step_cf4 = step_lie_rk4


def flow_ke(state: SystemState, params, h):
    x = schemes.flow_ke(state.phase(), params.masses, params.inertias, h)
    return SystemState.from_phase(state.t, x)


def flow_pe(state: SystemState, ctx: StepContext, h=None):
    x = schemes.flow_pe(state.phase(), ctx.potential, ctx.h if h is None else h)
    return SystemState.from_phase(state.t, x)


def flow_asym(state: SystemState, params, h, left=False):
    x = schemes.flow_asym(state.phase(), params.inertias, h, left)
    return SystemState.from_phase(state.t, x)


def flow_force(state: SystemState, ctx: StepContext, h=None):
    x = schemes.flow_force(state.phase(), ctx.forcing, ctx.h if h is None else h)
    return SystemState.from_phase(state.t, x)


def step(state: SystemState, ctx: StepContext, scheme=StepScheme.LIE_T2):
    return _lift(stepper(scheme))(state, ctx)


# ---------------------------------------------------------------- rollouts


def _kernel_params(ctx):
    if not _backend.USE_NUMBA:
        return None
    from .kernels import kernel_args

    return kernel_args(ctx.params, ctx.potential, ctx.forcing)


def _rollout_kernel(x, ctx, n, scheme, stride, kargs):
    from .kernels import SCHEME_IDS, rollout_kernel

    q, p, r, pi = (np.array(v, dtype=float) for v in x)
    lead = q.shape[:-2]
    slots = n // stride
    out = [np.full((slots,) + v.shape, np.nan) for v in (q, p, r, pi)]
    q, p, r, pi = (v.reshape((-1,) + v.shape[len(lead):]) for v in (q, p, r, pi))
    flat_out = [o.reshape((slots, q.shape[0]) + o.shape[1 + len(lead):]) for o in out]
    status = np.zeros(q.shape[0], dtype=np.int64)
    sid = SCHEME_IDS[scheme.value]
    for b in range(q.shape[0]):
        bufs = [np.empty((slots,) + a.shape[1:]) for a in (q, p, r, pi)]
        qb, pb, rb, pib = (np.ascontiguousarray(a[b]) for a in (q, p, r, pi))
        status[b] = rollout_kernel(
            sid, qb, pb, rb, pib, *kargs, float(ctx.h), int(n), int(stride),
            bool(ctx.verlet_literal), bool(ctx.asym_left), *bufs,
        )
        stored = slots if status[b] == 0 else (int(status[b]) - 1) // stride
        for o, buf in zip(flat_out, bufs):
            o[:stored, b] = buf[:stored]
    return Phase(*out), status.reshape(lead)


def _rollout_numpy(x, ctx, n, scheme, stride):
    fn = stepper(scheme)
    x = Phase(*(np.array(F.value(v), dtype=float) for v in x))
    lead = x.q.shape[:-2]
    slots = n // stride
    out = [np.full((slots,) + v.shape, np.nan) for v in x]
    status = np.zeros(lead, dtype=np.int64)
    with np.errstate(all="ignore"):
        for k in range(1, n + 1):
            x = fn(x, ctx)
            bad = ~x.finite() & (status == 0)
            if np.any(bad):
                status = np.where(bad, k, status)
                if np.all(status > 0):
                    break
            if k % stride == 0:
                ok = status == 0
                for o, v in zip(out, x):
                    o[k // stride - 1][ok] = v[ok]
    return Phase(*out), status


def rollout_arrays(x: Phase, ctx: StepContext, n, scheme=StepScheme.LIE_T2, stride=1, backend="auto"):
    """Advance stacked states ``n`` steps, keeping every ``stride``-th state.

    Returns ``(trajectory, diverged_at)``: the trajectory has a leading time
    axis of length ``n // stride`` (initial state excluded); ``diverged_at`` is
    0 for finite samples, else the first non-finite step.  Stored states at and
    after a divergence are NaN.

    ``backend`` is ``"auto"`` (compiled kernel when the physics allows it),
    ``"numba"`` or ``"numpy"``.
    """
    scheme = StepScheme.parse(scheme)
    if n < 1 or stride < 1:
        raise ValueError("need n >= 1 and stride >= 1")
    if backend not in ("auto", "numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    kargs = None if backend == "numpy" else _kernel_params(ctx)
    if backend == "numba" and kargs is None:
        raise ValueError("numba backend unavailable for this model (or disabled)")
    if kargs is not None:
        return _rollout_kernel(x, ctx, n, scheme, stride, kargs)
    return _rollout_numpy(x, ctx, n, scheme, stride)


def rollout(state: SystemState, ctx: StepContext, n, scheme=StepScheme.LIE_T2, store="all", stride=1, backend="auto"):
    """``n`` steps from ``state``; returns the list of stored states.

    ``store`` is ``"all"``, ``"last"`` or ``"stride"`` (every ``stride``-th).
    Raises :class:`DivergenceError` on the first non-finite state.
    """
    if store == "all":
        stride = 1
    elif store == "last":
        stride = n
    elif store != "stride":
        raise ValueError(f"unknown storage policy {store!r}")
    traj, status = rollout_arrays(state.phase(), ctx, n, scheme, stride, backend)
    if status:
        raise DivergenceError(status)
    states = []
    t = state.t
    for k in range(1, n + 1):
        t += ctx.h
        if k % stride == 0:
            states.append(SystemState.from_phase(t, Phase(*(v[k // stride - 1] for v in traj))))
    return states


__all__ = [
    "ALL_SCHEMES",
    "DivergenceError",
    "STEPPERS",
    "StepContext",
    "StepScheme",
    "flow_asym",
    "flow_force",
    "flow_ke",
    "flow_pe",
    "rollout",
    "rollout_arrays",
    "step",
    "step_cf2",
    "step_cf4",
    "step_euler",
    "step_lie_rk2",
    "step_lie_rk4",
    "step_lie_t2",
    "step_rk4",
    "step_verlet",
    "stepper",
]
