"""Experiment drivers: convergence orders, integrator comparison, toy precession."""
from __future__ import annotations

import csv
import io
import math

import numpy as np

from ..integrators import StepContext, StepScheme, rollout_arrays
from ..learning.model import LearnedDynamics
from ..learning.train import TrainConfig, baseline_train_matrix
from ..potentials import QuadrupolePotential, ZeroPotential, truth_potential
from ..rigidbody import Phase
from . import systems
from .metrics import (
    MetricsReport,
    evaluate_trajectories,
    metric_conservation,
    metric_force_errors,
    metric_potential_grad_errors,
    metric_trajectory,
)

CONVERGENCE_HEADER = ("scheme", "h", "err_q", "err_R", "slope")


def _steps(T, h):
    n = int(round(T / h))
    if abs(n * h - T) > 1e-9 * T:
        raise ValueError(f"h={h!r} does not divide T={T!r}")
    return n


def _final(x, ctx, T, scheme):
    n = _steps(T, ctx.h)
    traj, status = rollout_arrays(x, ctx, n, scheme, stride=n)
    return Phase(*(a[-1] for a in traj)), int(status)


def fit_slope(hs, errs):
    """Least-squares slope of ``log err`` against ``log h`` over finite, positive errors."""
    hs, errs = np.asarray(hs, float), np.asarray(errs, float)
    ok = np.isfinite(errs) & (errs > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(hs[ok]), np.log(errs[ok]), 1)[0])


def convergence_problem(name):
    """``(x0, ctx, key)`` for a named reference problem; ``key`` picks the error that defines the slope."""
    if name == "kepler":
        params, state = systems.kepler_point_pair()
        return state.phase(), StepContext(params, truth_potential(params, quadrupole=False), h=1.0), "err_q"
    if name == "top":
        params, state = systems.free_top()
        return state.phase(), StepContext(params, ZeroPotential(), h=1.0), "err_R"
    raise ValueError(f"unknown convergence problem {name!r}")


def convergence_study(x0: Phase, ctx: StepContext, schemes, hs, T, key="err_q", h_ref=None):
    """Global error at time ``T`` against an RK4 reference at ``h_ref <= min(hs) / 100``.

    Returns rows ``(scheme, h, err_q, err_R, slope)``; ``slope`` is fitted on
    the ``key`` column.  Diverged runs have infinite errors.
    """
    hs = sorted(float(h) for h in hs)[::-1]
    h_ref = min(hs) / 100.0 if h_ref is None else h_ref
    if h_ref > min(hs) / 100.0:
        raise ValueError("reference step must be at most min(h) / 100")
    ref, _ = _final(x0, ctx.with_h(h_ref), T, StepScheme.RK4)
    rows = []
    for s in schemes:
        scheme = StepScheme.parse(s)
        errs = []
        for h in hs:
            y, status = _final(x0, ctx.with_h(h), T, scheme)
            if status:
                errs.append((math.inf, math.inf))
                continue
            eq = float(np.linalg.norm(y.q - ref.q))
            er = float(np.sum(np.linalg.norm(y.R - ref.R, axis=(-2, -1))))
            errs.append((eq, er))
        col = 0 if key == "err_q" else 1
        slope = fit_slope(hs, [e[col] for e in errs])
        rows.extend((scheme.value, h, eq, er, slope) for h, (eq, er) in zip(hs, errs))
    return rows


def convergence_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERGENCE_HEADER)
    for r in rows:
        w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])
    return buf.getvalue()


def slopes(rows):
    return {r[0]: r[4] for r in rows}


# ---------------------------------------------------------------- integrator comparison


def compare_physics(params, state, potential, forcing, schemes, h, steps, refine=16, energy_absolute=False):
    """Run each scheme with the true physics; compare to a CF4 run at ``h / refine``."""
    x0 = state.phase()
    ctx = StepContext(params, potential, forcing, h=h)
    ref, _ = rollout_arrays(x0, ctx.with_h(h / refine), steps * refine, StepScheme.LIE_RK4, stride=refine)
    out = []
    for s in schemes:
        scheme = StepScheme.parse(s)
        traj, status = rollout_arrays(x0, ctx, steps, scheme)
        rep = MetricsReport(label=scheme.value, steps=steps, diverged=bool(status))
        if status:
            rep.dq = rep.dR = rep.max_defect = rep.max_energy_error = math.inf
        else:
            rep.dq, rep.dR = metric_trajectory(traj, ref)
            full = Phase(*(np.concatenate([a[None], b]) for a, b in zip(x0, traj)))
            rep.max_defect, rep.max_energy_error, rep.energy_error_absolute = metric_conservation(
                full, params, potential, energy_absolute)
        out.append(rep)
    return out


def residual_truth(params, r_min=0.0):
    """The part of the truth potential a learned model must supply on top of point gravity."""
    return QuadrupolePotential(params, r_min=r_min, strict=False)


def evaluate_model(model: LearnedDynamics, ds, scheme, substeps, steps=500, label=None, truth_residual=None):
    """Full metric row for a trained model on the dataset's validation split."""
    scheme = StepScheme.parse(scheme)
    rep = MetricsReport(label=label or scheme.value, steps=steps)
    rep.dq, rep.dR, div = evaluate_trajectories(model, ds, steps, substeps, scheme)
    rep.diverged = div > 0
    rep.dp_dot, rep.dPi_dot = metric_force_errors(model, ds, substeps, scheme)
    if truth_residual is not None:
        idx = ds.indices("val")
        states = Phase(*(a[idx].reshape((-1,) + a.shape[2:]) for a in (ds.q, ds.p, ds.R, ds.Pi)))
        learned = model.potential().models[1]
        rep.dVdq, rep.dVdR = metric_potential_grad_errors(learned, truth_residual, states)
    return rep


def compare_trained(ds, cfg: TrainConfig, schemes, steps=500, truth_residual=None):
    """Train one model per scheme with identical settings and tabulate their metrics.

    Returns ``(reports, matrix)`` where ``matrix`` is the raw training outcome.
    """
    def evaluate(model, scheme):
        return evaluate_model(model, ds, scheme, cfg.substeps, steps, truth_residual=truth_residual)

    matrix = baseline_train_matrix(ds, cfg, schemes, evaluate)
    reports = []
    for name, res in matrix.items():
        if res["status"] == "diverged":
            inf = math.inf
            reports.append(MetricsReport(name, inf, inf, inf, inf, inf, inf, steps=steps, diverged=True))
        else:
            reports.append(res["metrics"])
    return reports, matrix


def ordering_check(reports, champion="lie_t2", tie=0.1):
    """Whether ``champion`` is lowest-or-tied in ``dq`` and ``dR`` (tie = within ``tie`` relative)."""
    by = {r.label: r for r in reports}
    c = by[champion]
    out = {}
    for col in ("dq", "dR"):
        others = [getattr(r, col) for r in reports if r.label != champion]
        best_other = min(others) if others else math.inf
        out[col] = getattr(c, col) <= best_other * (1.0 + tie)
    return out


# ---------------------------------------------------------------- precession demo


def eccentricity_vector(x: Phase, params, i=0, j=1):
    """Laplace-Runge-Lenz direction of body ``j`` relative to body ``i`` (point-mass two-body)."""
    m = params.masses
    r = x.q[..., j, :] - x.q[..., i, :]
    v = x.p[..., j, :] / m[j] - x.p[..., i, :] / m[i]
    mu = params.G * (m[i] + m[j])
    L = np.cross(r, v)
    return np.cross(v, L) / mu - r / np.linalg.norm(r, axis=-1, keepdims=True)


def precession_angle(traj: Phase, params):
    """Unwrapped in-plane angle of the eccentricity vector along a trajectory."""
    e = eccentricity_vector(traj, params)
    return np.unwrap(np.arctan2(e[..., 1], e[..., 0]))


def precess_demo(params, state, h, steps, model: LearnedDynamics = None, stride=1):
    """Point-mass truth, rigid (quadrupole) truth and, optionally, a learned model from one start.

    Returns ``(rows, summary)``: rows are ``(t, label, rel_x, rel_y, rel_z, apse_angle)``.
    """
    x0 = state.phase()
    runs = {
        "point_truth": StepContext(params, truth_potential(params, quadrupole=False), h=h),
        "rigid_truth": StepContext(params, truth_potential(params), h=h),
    }
    if model is not None:
        runs["learned"] = model.context(h)
    rows, summary = [], {}
    for label, ctx in runs.items():
        traj, status = rollout_arrays(x0, ctx, steps, StepScheme.LIE_T2, stride=stride)
        if status:
            summary[label] = {"diverged_at": int(status)}
            continue
        ang = precession_angle(traj, params)
        rel = traj.q[:, 1] - traj.q[:, 0]
        for k in range(len(ang)):
            rows.append((state.t + (k + 1) * stride * h, label, *rel[k], ang[k]))
        summary[label] = {"apse_shift": float(ang[-1] - precession_angle(Phase(*(a[None] for a in x0)), params)[0])}
    return rows, summary
