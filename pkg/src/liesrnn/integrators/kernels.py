"""Compiled rollout kernels for the closed-form physics.

These cover point-mass gravity, the quadrupole correction and linear drag,
which is all the data generation and long integrator studies need.  Each
scheme mirrors :mod:`liesrnn.integrators.schemes` loop for loop; agreement
between the two paths is checked in the test-suite to round-off.

With ``LIESRNN_NUMBA=0`` the decorators are no-ops and callers fall back to
the vectorized numpy schemes instead of running these loops in Python.
"""
import math

import numpy as np

from .._backend import jit

EULER, RK4, VERLET, LIE_RK2, LIE_RK4, LIE_T2 = range(6)
SCHEME_IDS = {"euler": EULER, "rk4": RK4, "verlet": VERLET, "lie_rk2": LIE_RK2, "lie_rk4": LIE_RK4, "lie_t2": LIE_T2}


@jit
def _expmap(w0, w1, w2, out):
    th2 = w0 * w0 + w1 * w1 + w2 * w2
    th = math.sqrt(th2)
    if th < 1e-8:
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        a = math.sin(th) / th
        s = math.sin(0.5 * th)
        b = 2.0 * s * s / (th * th)
    k = np.empty((3, 3))
    k[0, 0] = 0.0
    k[0, 1] = -w2
    k[0, 2] = w1
    k[1, 0] = w2
    k[1, 1] = 0.0
    k[1, 2] = -w0
    k[2, 0] = -w1
    k[2, 1] = w0
    k[2, 2] = 0.0
    for i in range(3):
        for j in range(3):
            k2 = k[i, 0] * k[0, j] + k[i, 1] * k[1, j] + k[i, 2] * k[2, j]
            out[i, j] = (1.0 if i == j else 0.0) + a * k[i, j] + b * k2


@jit
def _mm(a, b, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]


@jit
def _rmul_exp(r, w0, w1, w2, out):
    """out = r @ exp(hat(w))"""
    e = np.empty((3, 3))
    _expmap(w0, w1, w2, e)
    _mm(r, e, out)


@jit
def _grad(q, R, m, jd, g_point, g_quad, gq, gR):
    n = q.shape[0]
    gq[:] = 0.0
    gR[:] = 0.0
    value = 0.0
    d = np.empty(3)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for k in range(3):
                d[k] = q[i, k] - q[j, k]
            r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
            r = math.sqrt(r2)
            if g_point > 0.0 and i < j:
                gmm = g_point * m[i] * m[j]
                value -= gmm / r
                c = gmm / (r2 * r)
                for k in range(3):
                    gq[i, k] += c * d[k]
                    gq[j, k] -= c * d[k]
            if g_quad > 0.0:
                coef = 0.5 * g_quad * m[j]
                trj = jd[i, 0] + jd[i, 1] + jd[i, 2]
                # u = J_d R_i^T d ; A d = R_i u ; s = d^T A d
                u = np.empty(3)
                s = 0.0
                for b in range(3):
                    rtd = R[i, 0, b] * d[0] + R[i, 1, b] * d[1] + R[i, 2, b] * d[2]
                    u[b] = rtd * jd[i, b]
                    s += rtd * u[b]
                r5 = r2 * r2 * r
                inv_r5 = 1.0 / r5
                inv_r7 = inv_r5 / r2
                value += coef * (trj / (r2 * r) - 3.0 * s / (r2 * r * r2))
                lin = -3.0 * trj * inv_r5 + 15.0 * s * inv_r7
                for k in range(3):
                    ad = R[i, k, 0] * u[0] + R[i, k, 1] * u[1] + R[i, k, 2] * u[2]
                    g = coef * (d[k] * lin - 6.0 * ad * inv_r5)
                    gq[i, k] += g
                    gq[j, k] -= g
                w = -6.0 * coef * inv_r5
                for a_ in range(3):
                    for b in range(3):
                        gR[i, a_, b] += w * d[a_] * u[b]
    return value


@jit
def _sub_torque(R, gR, pi, h):
    """pi -= vee(R^T gR - gR^T R) * h"""
    n = R.shape[0]
    for i in range(n):
        m = np.empty((3, 3))
        for a in range(3):
            for b in range(3):
                m[a, b] = R[i, 0, a] * gR[i, 0, b] + R[i, 1, a] * gR[i, 1, b] + R[i, 2, a] * gR[i, 2, b]
        pi[i, 0] -= (m[2, 1] - m[1, 2]) * h
        pi[i, 1] -= (m[0, 2] - m[2, 0]) * h
        pi[i, 2] -= (m[1, 0] - m[0, 1]) * h


@jit
def _ke(q, p, R, pi, m, J, h):
    n = q.shape[0]
    spin = np.empty((3, 3))
    rz = np.empty((3, 3))
    tmp = np.empty((3, 3))
    for i in range(n):
        inv1 = 1.0 / J[i, 0]
        theta = (1.0 / J[i, 2] - inv1) * pi[i, 2]
        c = h * inv1
        _expmap(pi[i, 0] * c, pi[i, 1] * c, pi[i, 2] * c, spin)
        _expmap(0.0, 0.0, theta * h, rz)
        for k in range(3):
            q[i, k] = q[i, k] + p[i, k] / m[i] * h
        _mm(R[i], spin, tmp)
        _mm(tmp, rz, R[i])
        p0, p1, p2 = pi[i, 0], pi[i, 1], pi[i, 2]
        for k in range(3):
            pi[i, k] = rz[0, k] * p0 + rz[1, k] * p1 + rz[2, k] * p2


@jit
def _pe(q, p, R, pi, m, jd, g_point, g_quad, h, gq, gR):
    _grad(q, R, m, jd, g_point, g_quad, gq, gR)
    n = q.shape[0]
    for i in range(n):
        for k in range(3):
            p[i, k] = p[i, k] - gq[i, k] * h
    if g_quad > 0.0:
        _sub_torque(R, gR, pi, h)


@jit
def _asym(R, pi, J, h, left):
    n = R.shape[0]
    ry = np.empty((3, 3))
    tmp = np.empty((3, 3))
    for i in range(n):
        delta = 1.0 / J[i, 1] - 1.0 / J[i, 0]
        if delta == 0.0:
            continue
        _expmap(0.0, delta * pi[i, 1] * h, 0.0, ry)
        if left:
            _mm(ry, R[i], tmp)
        else:
            _mm(R[i], ry, tmp)
        R[i, :, :] = tmp
        p0, p1, p2 = pi[i, 0], pi[i, 1], pi[i, 2]
        for k in range(3):
            pi[i, k] = ry[0, k] * p0 + ry[1, k] * p1 + ry[2, k] * p2


@jit
def _force(p, pi, c_p, c_pi, h):
    if c_p != 0.0:
        for i in range(p.shape[0]):
            for k in range(3):
                p[i, k] = p[i, k] + (-c_p * p[i, k]) * h
    if c_pi != 0.0:
        for i in range(pi.shape[0]):
            for k in range(3):
                pi[i, k] = pi[i, k] + (-c_pi * pi[i, k]) * h


@jit
def _eom(q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, dq, dp, dR, dpi, gq, gR):
    _grad(q, R, m, jd, g_point, g_quad, gq, gR)
    n = q.shape[0]
    for i in range(n):
        w0, w1, w2 = pi[i, 0] / J[i, 0], pi[i, 1] / J[i, 1], pi[i, 2] / J[i, 2]
        for k in range(3):
            dq[i, k] = p[i, k] / m[i]
            dp[i, k] = -gq[i, k] - c_p * p[i, k]
        dpi[i, 0] = pi[i, 1] * w2 - pi[i, 2] * w1
        dpi[i, 1] = pi[i, 2] * w0 - pi[i, 0] * w2
        dpi[i, 2] = pi[i, 0] * w1 - pi[i, 1] * w0
        for k in range(3):
            dpi[i, k] -= c_pi * pi[i, k]
        for a in range(3):
            dR[i, a, 0] = R[i, a, 1] * w2 - R[i, a, 2] * w1
            dR[i, a, 1] = -R[i, a, 0] * w2 + R[i, a, 2] * w0
            dR[i, a, 2] = R[i, a, 0] * w1 - R[i, a, 1] * w0
    if g_quad > 0.0:
        _sub_torque(R, gR, dpi, 1.0)


@jit
def _step(scheme, q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, h, verlet_literal, asym_left):
    n = q.shape[0]
    gq = np.empty((n, 3))
    gR = np.empty((n, 3, 3))
    if scheme == LIE_T2:
        half = 0.5 * h
        _ke(q, p, R, pi, m, J, half)
        _pe(q, p, R, pi, m, jd, g_point, g_quad, half, gq, gR)
        _asym(R, pi, J, half, asym_left)
        _force(p, pi, c_p, c_pi, h)
        _asym(R, pi, J, half, asym_left)
        _pe(q, p, R, pi, m, jd, g_point, g_quad, half, gq, gR)
        _ke(q, p, R, pi, m, J, half)
        return
    if scheme == VERLET:
        drift = h if verlet_literal else 0.5 * h
        r0 = R.copy()
        pi0 = pi.copy()
        p0 = p.copy()
        tmp = np.empty((n, 3, 3))
        for i in range(n):
            w0, w1, w2 = pi[i, 0] / J[i, 0], pi[i, 1] / J[i, 1], pi[i, 2] / J[i, 2]
            for k in range(3):
                q[i, k] = q[i, k] + p[i, k] / m[i] * drift
            for a in range(3):
                tmp[i, a, 0] = R[i, a, 1] * w2 - R[i, a, 2] * w1
                tmp[i, a, 1] = -R[i, a, 0] * w2 + R[i, a, 2] * w0
                tmp[i, a, 2] = R[i, a, 0] * w1 - R[i, a, 1] * w0
            for a in range(3):
                for b in range(3):
                    R[i, a, b] = R[i, a, b] + tmp[i, a, b] * drift
        _grad(q, R, m, jd, g_point, g_quad, gq, gR)
        dpi = np.empty((n, 3))
        for i in range(n):
            w0, w1, w2 = pi0[i, 0] / J[i, 0], pi0[i, 1] / J[i, 1], pi0[i, 2] / J[i, 2]
            dpi[i, 0] = pi0[i, 1] * w2 - pi0[i, 2] * w1
            dpi[i, 1] = pi0[i, 2] * w0 - pi0[i, 0] * w2
            dpi[i, 2] = pi0[i, 0] * w1 - pi0[i, 1] * w0
        if g_quad > 0.0:
            if verlet_literal:
                _sub_torque(r0, gR, dpi, 1.0)
            else:
                _sub_torque(R, gR, dpi, 1.0)
        for i in range(n):
            for k in range(3):
                p[i, k] = p0[i, k] + (-gq[i, k] - c_p * p0[i, k]) * h
                pi[i, k] = pi0[i, k] + (dpi[i, k] - c_pi * pi0[i, k]) * h
        for i in range(n):
            w0, w1, w2 = pi[i, 0] / J[i, 0], pi[i, 1] / J[i, 1], pi[i, 2] / J[i, 2]
            for k in range(3):
                q[i, k] = q[i, k] + p[i, k] / m[i] * drift
            for a in range(3):
                tmp[i, a, 0] = R[i, a, 1] * w2 - R[i, a, 2] * w1
                tmp[i, a, 1] = -R[i, a, 0] * w2 + R[i, a, 2] * w0
                tmp[i, a, 2] = R[i, a, 0] * w1 - R[i, a, 1] * w0
            for a in range(3):
                for b in range(3):
                    R[i, a, b] = R[i, a, b] + tmp[i, a, b] * drift
        return
    # explicit Runge-Kutta family
    dq1 = np.empty((n, 3))
    dp1 = np.empty((n, 3))
    dR1 = np.empty((n, 3, 3))
    dpi1 = np.empty((n, 3))
    _eom(q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, dq1, dp1, dR1, dpi1, gq, gR)
    if scheme == EULER:
        q += dq1 * h
        p += dp1 * h
        R += dR1 * h
        pi += dpi1 * h
        return
    q0 = q.copy()
    p0 = p.copy()
    r0 = R.copy()
    pi0 = pi.copy()
    if scheme == LIE_RK2:
        half = 0.5 * h
        for i in range(n):
            c = half / J[i]
            _rmul_exp(r0[i], pi0[i, 0] * c[0], pi0[i, 1] * c[1], pi0[i, 2] * c[2], R[i])
        q[:] = q0 + dq1 * half
        p[:] = p0 + dp1 * half
        pi[:] = pi0 + dpi1 * half
        dq2 = np.empty((n, 3))
        dp2 = np.empty((n, 3))
        dR2 = np.empty((n, 3, 3))
        dpi2 = np.empty((n, 3))
        _eom(q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, dq2, dp2, dR2, dpi2, gq, gR)
        for i in range(n):
            c = h / J[i]
            _rmul_exp(r0[i], pi[i, 0] * c[0], pi[i, 1] * c[1], pi[i, 2] * c[2], R[i])
        q[:] = q0 + dq2 * h
        p[:] = p0 + dp2 * h
        pi[:] = pi0 + dpi2 * h
        return
    dq2 = np.empty((n, 3))
    dp2 = np.empty((n, 3))
    dR2 = np.empty((n, 3, 3))
    dpi2 = np.empty((n, 3))
    dq3 = np.empty((n, 3))
    dp3 = np.empty((n, 3))
    dR3 = np.empty((n, 3, 3))
    dpi3 = np.empty((n, 3))
    dq4 = np.empty((n, 3))
    dp4 = np.empty((n, 3))
    dR4 = np.empty((n, 3, 3))
    dpi4 = np.empty((n, 3))
    half = 0.5 * h
    if scheme == RK4:
        q[:] = q0 + dq1 * half
        p[:] = p0 + dp1 * half
        R[:] = r0 + dR1 * half
        pi[:] = pi0 + dpi1 * half
        _eom(q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, dq2, dp2, dR2, dpi2, gq, gR)
        q[:] = q0 + dq2 * half
        p[:] = p0 + dp2 * half
        R[:] = r0 + dR2 * half
        pi[:] = pi0 + dpi2 * half
        _eom(q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, dq3, dp3, dR3, dpi3, gq, gR)
        q[:] = q0 + dq3 * h
        p[:] = p0 + dp3 * h
        R[:] = r0 + dR3 * h
        pi[:] = pi0 + dpi3 * h
        _eom(q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, dq4, dp4, dR4, dpi4, gq, gR)
        w = h / 6.0
        q[:] = q0 + (dq1 + 2.0 * dq2 + 2.0 * dq3 + dq4) * w
        p[:] = p0 + (dp1 + 2.0 * dp2 + 2.0 * dp3 + dp4) * w
        R[:] = r0 + (dR1 + 2.0 * dR2 + 2.0 * dR3 + dR4) * w
        pi[:] = pi0 + (dpi1 + 2.0 * dpi2 + 2.0 * dpi3 + dpi4) * w
        return
    # LIE_RK4
    w1 = pi0 / J
    r1 = np.empty((n, 3, 3))
    for i in range(n):
        _rmul_exp(r0[i], w1[i, 0] * half, w1[i, 1] * half, w1[i, 2] * half, r1[i])
    R[:] = r1
    q[:] = q0 + dq1 * half
    p[:] = p0 + dp1 * half
    pi[:] = pi0 + dpi1 * half
    _eom(q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, dq2, dp2, dR2, dpi2, gq, gR)
    w2 = pi / J
    for i in range(n):
        _rmul_exp(r0[i], w2[i, 0] * half, w2[i, 1] * half, w2[i, 2] * half, R[i])
    q[:] = q0 + dq2 * half
    p[:] = p0 + dp2 * half
    pi[:] = pi0 + dpi2 * half
    _eom(q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, dq3, dp3, dR3, dpi3, gq, gR)
    w3 = pi / J
    v = w3 - 0.5 * w1
    for i in range(n):
        _rmul_exp(r1[i], v[i, 0] * h, v[i, 1] * h, v[i, 2] * h, R[i])
    q[:] = q0 + dq3 * h
    p[:] = p0 + dp3 * h
    pi[:] = pi0 + dpi3 * h
    _eom(q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, dq4, dp4, dR4, dpi4, gq, gR)
    w4 = pi / J
    a_ = 3.0 * w1 + 2.0 * w2 + 2.0 * w3 - w4
    b_ = -w1 + 2.0 * w2 + 2.0 * w3 + 3.0 * w4
    c = h / 12.0
    rh = np.empty((3, 3))
    for i in range(n):
        _rmul_exp(r0[i], a_[i, 0] * c, a_[i, 1] * c, a_[i, 2] * c, rh)
        _rmul_exp(rh, b_[i, 0] * c, b_[i, 1] * c, b_[i, 2] * c, R[i])
    w = h / 6.0
    q[:] = q0 + (dq1 + 2.0 * dq2 + 2.0 * dq3 + dq4) * w
    p[:] = p0 + (dp1 + 2.0 * dp2 + 2.0 * dp3 + dp4) * w
    pi[:] = pi0 + (dpi1 + 2.0 * dpi2 + 2.0 * dpi3 + dpi4) * w


@jit
def _finite(q, p, R, pi):
    for x in q.flat:
        if not math.isfinite(x):
            return False
    for x in p.flat:
        if not math.isfinite(x):
            return False
    for x in R.flat:
        if not math.isfinite(x):
            return False
    for x in pi.flat:
        if not math.isfinite(x):
            return False
    return True


@jit
def rollout_kernel(scheme, q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, h, n_steps, stride,
                   verlet_literal, asym_left, out_q, out_p, out_R, out_pi):
    """Advance ``(q, p, R, pi)`` in place for ``n_steps``; store every ``stride``-th state.

    Returns 0 on success or the 1-based index of the first non-finite step.
    """
    slot = 0
    for step in range(1, n_steps + 1):
        _step(scheme, q, p, R, pi, m, J, jd, g_point, g_quad, c_p, c_pi, h, verlet_literal, asym_left)
        if not _finite(q, p, R, pi):
            return step
        if step % stride == 0:
            out_q[slot] = q
            out_p[slot] = p
            out_R[slot] = R
            out_pi[slot] = pi
            slot += 1
    return 0


def kernel_args(params, potential, forcing):
    """Kernel parameter tuple for ``(potential, forcing)``, or ``None`` if not compilable."""
    vt = potential.kernel_terms()
    ft = forcing.kernel_terms() if forcing is not None else {}
    if vt is None or ft is None:
        return None
    c_p, c_pi = ft.get("drag", (0.0, 0.0))
    return (
        np.ascontiguousarray(params.masses),
        np.ascontiguousarray(params.inertias),
        np.ascontiguousarray(params.nonstandard_inertias),
        float(vt.get("point", 0.0)),
        float(vt.get("quad", 0.0)),
        float(c_p),
        float(c_pi),
    )
