"""Array primitives shared by the plain-numpy and taped code paths.

Every function here computes its forward value with the same numpy calls
whether or not an argument is a :class:`Tensor`.  When one is, the result is
recorded on that tensor's tape together with its vector-Jacobian product.
"""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor

EXPMAP_SMALL = 1e-8
_SERIES_BELOW = 1e-2


def _val(x):
    return x.value if isinstance(x, Tensor) else x


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Tensor):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("tensors from different tapes")
    return tape


def _node(value, op, inputs, vjp):
    tape = _tape_of(*inputs)
    if tape is None:
        return value
    parents = tuple(x if isinstance(x, Tensor) else None for x in inputs)
    return Tensor(value, tape, parents, vjp, op)


def is_tensor(x):
    return isinstance(x, Tensor)


def value(x):
    """Underlying array of ``x`` (identity on plain arrays)."""
    return np.asarray(_val(x))


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _shape(x):
    return np.shape(_val(x))


# ---------------------------------------------------------------- elementwise


def add(a, b):
    out = np.add(_val(a), _val(b))
    if _tape_of(a, b) is None:
        return out
    sa, sb = _shape(a), _shape(b)
    return _node(out, "add", (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b):
    out = np.subtract(_val(a), _val(b))
    if _tape_of(a, b) is None:
        return out
    sa, sb = _shape(a), _shape(b)
    return _node(out, "sub", (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b):
    av, bv = _val(a), _val(b)
    out = np.multiply(av, bv)
    if _tape_of(a, b) is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        ga = unbroadcast(g * bv, sa) if isinstance(a, Tensor) else None
        gb = unbroadcast(g * av, sb) if isinstance(b, Tensor) else None
        return ga, gb

    return _node(out, "mul", (a, b), vjp)


def div(a, b):
    av, bv = _val(a), _val(b)
    out = np.divide(av, bv)
    if _tape_of(a, b) is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        ga = unbroadcast(g / bv, sa) if isinstance(a, Tensor) else None
        gb = unbroadcast(-g * out / bv, sb) if isinstance(b, Tensor) else None
        return ga, gb

    return _node(out, "div", (a, b), vjp)


def neg(a):
    out = np.negative(_val(a))
    return _node(out, "neg", (a,), lambda g: (-g,))


def square(a):
    av = _val(a)
    out = np.multiply(av, av)
    return _node(out, "square", (a,), lambda g: (2.0 * av * g,))


def sqrt(a):
    out = np.sqrt(_val(a))
    return _node(out, "sqrt", (a,), lambda g: (0.5 * g / out,))


def reciprocal(a):
    av = _val(a)
    out = np.divide(1.0, av)
    return _node(out, "reciprocal", (a,), lambda g: (-g * out * out,))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(a):
    """``x * sigmoid(x)``."""
    av = _val(a)
    s = _sigmoid(av)
    out = av * s
    return _node(out, "silu", (a,), lambda g: (g * s * (1.0 + av * (1.0 - s)),))


def silu_prime(a):
    """Derivative of :func:`silu`; needed to build input gradients of MLPs."""
    av = _val(a)
    s = _sigmoid(av)
    out = s * (1.0 + av * (1.0 - s))
    return _node(out, "silu_prime", (a,), lambda g: (g * s * (1.0 - s) * (2.0 + av * (1.0 - 2.0 * s)),))


# ---------------------------------------------------------------- reductions / shape


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    av = _val(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)
    if not isinstance(a, Tensor):
        return out
    shape = av.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(out, "sum", (a,), vjp)


def norm(a, axis=-1):
    """Euclidean norm along ``axis``."""
    return sqrt(sum(square(a), axis=axis))


def reshape(a, shape):
    av = _val(a)
    out = np.reshape(av, shape)
    if not isinstance(a, Tensor):
        return out
    orig = av.shape
    return _node(out, "reshape", (a,), lambda g: (np.reshape(g, orig),))


def getitem(a, idx):
    av = _val(a)
    out = av[idx]
    if not isinstance(a, Tensor):
        return out

    def vjp(g):
        z = np.zeros_like(av)
        np.add.at(z, idx, g)
        return (z,)

    return _node(out, "slice", (a,), vjp)


def concat(xs, axis=-1):
    vals = [_val(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    if _tape_of(*xs) is None:
        return out
    cuts = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(out, "concat", tuple(xs), vjp)


def stack(xs, axis=-1):
    vals = [_val(x) for x in xs]
    out = np.stack(vals, axis=axis)
    if _tape_of(*xs) is None:
        return out

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(vals)))

    return _node(out, "stack", tuple(xs), vjp)


def mT(a):
    """Transpose of the last two axes."""
    out = np.swapaxes(_val(a), -1, -2)
    return _node(out, "mT", (a,), lambda g: (np.swapaxes(g, -1, -2),))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if np.ndim(av) < 2 or np.ndim(bv) < 2:
        raise ShapeError("matmul operands must be at least 2-D; use matvec")
    out = np.matmul(av, bv)
    if _tape_of(a, b) is None:
        return out
    sa, sb = av.shape, bv.shape

    def vjp(g):
        ga = unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), sa) if isinstance(a, Tensor) else None
        gb = unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), sb) if isinstance(b, Tensor) else None
        return ga, gb

    return _node(out, "matmul", (a, b), vjp)


def matvec(m, v):
    """``m @ v`` over trailing ``(3, 3) x (3,)`` (any leading batch)."""
    mv, vv = _val(m), _val(v)
    out = np.matmul(mv, vv[..., None])[..., 0]
    if _tape_of(m, v) is None:
        return out
    sm, sv = mv.shape, vv.shape

    def vjp(g):
        gm = unbroadcast(g[..., :, None] * vv[..., None, :], sm) if isinstance(m, Tensor) else None
        gv = unbroadcast(np.matmul(np.swapaxes(mv, -1, -2), g[..., None])[..., 0], sv) if isinstance(v, Tensor) else None
        return gm, gv

    return _node(out, "matvec", (m, v), vjp)


def cross(a, b):
    av, bv = _val(a), _val(b)
    out = np.cross(av, bv)
    if _tape_of(a, b) is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        ga = unbroadcast(np.cross(bv, g), sa) if isinstance(a, Tensor) else None
        gb = unbroadcast(np.cross(g, av), sb) if isinstance(b, Tensor) else None
        return ga, gb

    return _node(out, "cross", (a, b), vjp)


def _hat_value(u):
    out = np.zeros(u.shape + (3,))
    out[..., 0, 1] = -u[..., 2]
    out[..., 0, 2] = u[..., 1]
    out[..., 1, 0] = u[..., 2]
    out[..., 1, 2] = -u[..., 0]
    out[..., 2, 0] = -u[..., 1]
    out[..., 2, 1] = u[..., 0]
    return out


def _vee_value(m):
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def hat(u):
    out = _hat_value(_val(u))
    return _node(out, "hat", (u,), lambda g: (_vee_value(g - np.swapaxes(g, -1, -2)),))


def vee(m):
    """Unchecked inverse of :func:`hat` (picks the (2,1), (0,2), (1,0) entries)."""
    mv = _val(m)
    out = _vee_value(mv)

    def vjp(g):
        z = np.zeros_like(mv)
        z[..., 2, 1] = g[..., 0]
        z[..., 0, 2] = g[..., 1]
        z[..., 1, 0] = g[..., 2]
        return (z,)

    return _node(out, "vee", (m,), vjp)


def _expmap_coeffs(theta):
    small = theta < EXPMAP_SMALL
    safe = np.where(small, 1.0, theta)
    half = np.sin(0.5 * safe)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0, 2.0 * half * half / (safe * safe))
    return a, b


def _expmap_coeff_derivs(theta):
    # (da/dtheta)/theta and (db/dtheta)/theta, series near zero
    series = theta < _SERIES_BELOW
    safe = np.where(series, 1.0, theta)
    t2 = theta * theta
    s, c = np.sin(safe), np.cos(safe)
    da = np.where(series, -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0, (safe * c - s) / safe**3)
    db = np.where(
        series,
        -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0,
        (safe * s - 4.0 * np.sin(0.5 * safe) ** 2) / safe**4,
    )
    return da, db


def expmap(w):
    """Rotation matrix ``exp(hat(w))`` for stacked rotation vectors ``w``."""
    wv = _val(w)
    theta = np.sqrt(np.sum(wv * wv, axis=-1))
    a, b = _expmap_coeffs(theta)
    k = _hat_value(wv)
    k2 = np.matmul(k, k)
    out = np.eye(3) + a[..., None, None] * k + b[..., None, None] * k2
    if not isinstance(w, Tensor):
        return out

    def vjp(g):
        da, db = _expmap_coeff_derivs(theta)
        kt = np.swapaxes(k, -1, -2)
        m = np.matmul(g, kt) + np.matmul(kt, g)
        gk = np.sum(g * k, axis=(-2, -1))
        gk2 = np.sum(g * k2, axis=(-2, -1))
        gw = a[..., None] * _vee_value(g - np.swapaxes(g, -1, -2))
        gw = gw + b[..., None] * _vee_value(m - np.swapaxes(m, -1, -2))
        gw = gw + (gk * da + gk2 * db)[..., None] * wv
        return (gw,)

    return _node(out, "expmap", (w,), vjp)


def isfinite_all(x, axis=None):
    """Finite-ness check on the forward value (never taped)."""
    return np.all(np.isfinite(_val(x)), axis=axis)
