"""Trajectory, force, gradient and conservation metrics, and their report container."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..autodiff import ops as F
from ..geometry import geodesic_distance, orthonormality_defect
from ..integrators import StepContext, StepScheme, rollout_arrays, stepper
from ..rigidbody import Phase, hamiltonian_arrays, skew_project_torque

CSV_COLUMNS = (
    "label", "dq", "dR", "dp_dot", "dPi_dot", "dVdq", "dVdR",
    "max_defect", "max_energy_error", "energy_error_absolute", "steps", "diverged",
)


@dataclass
class MetricsReport:
    """One row of the evaluation table.  ``None`` marks a metric that was not computed."""

    label: str = ""
    dq: float = None
    dR: float = None
    dp_dot: float = None
    dPi_dot: float = None
    dVdq: float = None
    dVdR: float = None
    max_defect: float = None
    max_energy_error: float = None
    energy_error_absolute: bool = False
    steps: int = 0
    diverged: bool = False

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def csv_row(self):
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            out.append("" if v is None else repr(v) if isinstance(v, float) else str(v))
        return out

    @classmethod
    def from_csv_row(cls, row):
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        for name, text in zip(CSV_COLUMNS, row):
            if text == "":
                kw[name] = None
            elif types[name] in ("bool", bool):
                kw[name] = text == "True"
            elif types[name] in ("int", int):
                kw[name] = int(text)
            elif types[name] in ("str", str):
                kw[name] = text
            else:
                kw[name] = float(text)
        return cls(**kw)


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def reports_from_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("unexpected metrics CSV header")
    return [MetricsReport.from_csv_row(r) for r in rows[1:]]


# ---------------------------------------------------------------- metrics


def metric_trajectory(pred: Phase, true: Phase):
    """Mean over snapshots of ``|dq|`` (all bodies stacked) and of the summed per-body geodesic angle.

    Both inputs carry a leading snapshot axis (and any further batch axes);
    non-finite predictions give ``inf``.
    """
    if np.shape(pred.q) != np.shape(true.q) or np.shape(pred.R) != np.shape(true.R):
        raise ValueError("trajectories are not aligned")
    if not (np.all(np.isfinite(pred.q)) and np.all(np.isfinite(pred.R))):
        return math.inf, math.inf
    dq = np.linalg.norm((pred.q - true.q).reshape(pred.q.shape[:-2] + (-1,)), axis=-1)
    dR = geodesic_distance(true.R, pred.R).sum(axis=-1)
    return float(dq.mean()), float(dR.mean())


def _context(model, h):
    """Step context of a learned model, or an existing context re-stepped to ``h``."""
    if isinstance(model, StepContext):
        return model.with_h(h)
    return model.context(h)


def _select(ds, which):
    if which == "all":
        return np.arange(ds.L)
    idx = ds.indices(which)
    return idx if len(idx) else np.arange(ds.L)


def _one_step(model, start: Phase, dt, substeps, scheme):
    ctx = _context(model, dt / substeps)
    fn = stepper(scheme)
    x = start
    with np.errstate(all="ignore"):
        for _ in range(substeps):
            x = fn(x, ctx)
    return x


def metric_force_errors(model, ds, substeps=1, scheme=StepScheme.LIE_T2, which="val"):
    """Mean ``|dp_hat - dp_true| / dt`` and the same for ``Pi`` over consecutive dataset pairs."""
    idx = _select(ds, which)
    start = Phase(*(a[idx, :-1].reshape((-1,) + a.shape[2:]) for a in (ds.q, ds.p, ds.R, ds.Pi)))
    target = Phase(*(a[idx, 1:].reshape((-1,) + a.shape[2:]) for a in (ds.q, ds.p, ds.R, ds.Pi)))
    pred = _one_step(model, start, ds.dt, substeps, StepScheme.parse(scheme))
    ok = pred.finite()
    if not ok.all():
        return math.inf, math.inf
    dp = np.linalg.norm((pred.p - target.p).reshape(len(ok), -1), axis=-1) / ds.dt
    dw = np.linalg.norm((pred.Pi - target.Pi).reshape(len(ok), -1), axis=-1) / ds.dt
    return float(dp.mean()), float(dw.mean())


def metric_potential_grad_errors(learned, truth, states: Phase):
    """Mean ``|dV/dq|`` error and mean error of the skew-projected ``dV/dR`` (the torque).

    Only the skew part of ``dV/dR`` affects the dynamics, so any symmetric
    component of the learned gradient is ignored.
    """
    q, R = np.asarray(states.q, float), np.asarray(states.R, float)

    def grads(model):
        gq, gr = model.grad(q, R)
        gq = np.zeros_like(q) if gq is None else np.asarray(F.value(gq))
        tau = np.zeros(q.shape) if gr is None else np.asarray(F.value(skew_project_torque(R, gr)))
        return gq, tau

    lq, lt = grads(learned)
    tq, tt = grads(truth)
    n = q.shape[:-2]
    eq = np.linalg.norm((lq - tq).reshape(n + (-1,)), axis=-1)
    et = np.linalg.norm((lt - tt).reshape(n + (-1,)), axis=-1)
    return float(eq.mean()), float(et.mean())


def metric_conservation(traj: Phase, params, potential, absolute=False):
    """Max orthonormality defect and max Hamiltonian drift relative to the first snapshot.

    Returns ``(max_defect, max_energy_error, is_absolute)``; the error is
    absolute when requested or when ``H(0) == 0``.
    """
    defect = float(np.max(orthonormality_defect(traj.R)))
    H = np.array([hamiltonian_arrays(Phase(*(a[k] for a in traj)), params, potential) for k in range(len(traj.q))])
    err = np.abs(H - H[0])
    if absolute or H[0] == 0.0:
        return defect, float(err.max()), True
    return defect, float(err.max() / abs(H[0])), False


def evaluate_trajectories(model, ds, steps=500, substeps=4, scheme=StepScheme.LIE_T2, which="val"):
    """Roll each selected trajectory's first snapshot forward ``steps`` integrator steps.

    ``model`` is a :class:`LearnedDynamics` or a :class:`StepContext`.

    Predictions are compared at the observed snapshots (every ``substeps``
    steps).  Returns ``(dq, dR, diverged_count)`` averaged over trajectories.
    """
    if steps % substeps:
        raise ValueError("steps must be a multiple of substeps")
    n_obs = steps // substeps
    if n_obs > ds.K:
        raise ValueError(f"dataset holds {ds.K} observations; {n_obs} needed")
    idx = _select(ds, which)
    start = Phase(ds.q[idx, 0], ds.p[idx, 0], ds.R[idx, 0], ds.Pi[idx, 0])
    ctx = _context(model, ds.dt / substeps)
    traj, status = rollout_arrays(start, ctx, steps, scheme, stride=substeps)
    true = Phase(*(np.moveaxis(a[idx, 1:n_obs + 1], 0, 1) for a in (ds.q, ds.p, ds.R, ds.Pi)))
    ok = status == 0
    if not ok.any():
        return math.inf, math.inf, int((~ok).sum())
    dq, dR = metric_trajectory(Phase(*(a[:, ok] for a in traj)), Phase(*(a[:, ok] for a in true)))
    if not ok.all():
        dq, dR = math.inf, math.inf
    return dq, dR, int((~ok).sum())
