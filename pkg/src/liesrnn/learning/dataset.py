"""Ground-truth trajectory datasets and their text format.

File layout (UTF-8, one record per line)::

    # liesrnn-dataset 1
    # header {"N": ..., "L": ..., "K": ..., "dt": ..., ...}     (JSON, sorted keys)
    # trajectory <index> <train|val>
    <t> <q1(3)> <p1(3)> <R1(9), row-major> <Pi1(3)> <q2(3)> ...     (K+1 lines)
    # trajectory ...

Floats are written with ``repr`` so loading reproduces every bit.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import _backend
from ..autodiff import ops as F
from ..integrators import StepContext, rollout_arrays
from ..rigidbody import BodyParams, Phase, SystemParams, SystemState

MAGIC = "# liesrnn-dataset 1"


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    """``L`` trajectories of ``K + 1`` snapshots spaced ``dt`` apart.

    Arrays have shapes ``q, p, Pi: (L, K+1, N, 3)`` and ``R: (L, K+1, N, 3, 3)``.
    """

    params: SystemParams
    dt: float
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    R: np.ndarray
    Pi: np.ndarray
    split: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def L(self):
        return self.q.shape[0]

    @property
    def K(self):
        return self.q.shape[1] - 1

    @property
    def n(self):
        return self.q.shape[2]

    def phase(self, traj=slice(None), k=slice(None)):
        return Phase(self.q[traj, k], self.p[traj, k], self.R[traj, k], self.Pi[traj, k])

    def indices(self, which):
        return np.flatnonzero(self.split == which)

    def pairs(self, which, horizon=1):
        """``(trajectory, start)`` index pairs with ``horizon`` observed successors."""
        out = [(i, k) for i in self.indices(which) for k in range(self.K - horizon + 1)]
        return np.array(out, dtype=np.int64).reshape(-1, 2)

    def header(self):
        return {
            "N": self.n,
            "L": self.L,
            "K": self.K,
            "dt": self.dt,
            "G": self.params.G,
            "masses": [b.mass for b in self.params.bodies],
            "inertias": [list(b.inertia) for b in self.params.bodies],
            **self.meta,
        }


def split_counts(L, train_fraction=0.8):
    """``floor(train_fraction * L)`` training trajectories, the rest validation."""
    n_train = int(np.floor(train_fraction * L))
    return n_train, L - n_train


def perturb(x: Phase, sigma, rng):
    """Multiplicative Gaussian noise on ``q, p, Pi``; ``R <- R exp(hat(sigma xi))``."""
    q, p, r, pi = x
    if sigma == 0:
        return Phase(q.copy(), p.copy(), r.copy(), pi.copy())
    q = q * (1.0 + sigma * rng.standard_normal(q.shape))
    p = p * (1.0 + sigma * rng.standard_normal(p.shape))
    pi = pi * (1.0 + sigma * rng.standard_normal(pi.shape))
    r = r @ F.expmap(sigma * rng.standard_normal(r.shape[:-1]))
    return Phase(q, p, r, pi)


def _fine_steps(dt, fine_h):
    ratio = dt / fine_h
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * ratio:
        raise DatasetError(f"fine_h={fine_h!r} does not divide dt={dt!r}")
    return n


def generate_dataset(params, potential, forcing, init: SystemState, L, K, dt, fine_h,
                     noise_sigma=1e-3, seed=0, train_fraction=0.8, max_retries=10, truth="", threads=None):
    """Integrate ``L`` perturbed copies of ``init`` with Lie T2 at ``fine_h``, sampling every ``dt``."""
    if L < 1 or K < 1:
        raise DatasetError("need L >= 1 and K >= 1")
    stride = _fine_steps(dt, fine_h)
    ctx = StepContext(params, potential, forcing, h=dt / stride)
    x0 = init.phase()
    seeds = np.random.SeedSequence(seed).spawn(L)

    def one(i):
        rng = np.random.default_rng(seeds[i])
        for _ in range(max_retries + 1):
            x = perturb(x0, noise_sigma, rng)
            traj, status = rollout_arrays(x, ctx, K * stride, "lie_t2", stride=stride)
            if not status:
                return Phase(*(np.concatenate([a[None], b]) for a, b in zip(x, traj)))
        raise DatasetError(f"trajectory {i} diverged {max_retries + 1} times")

    workers = threads or _backend.num_threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            trajs = list(pool.map(one, range(L)))
    else:
        trajs = [one(i) for i in range(L)]
    n_train, _ = split_counts(L, train_fraction)
    split = np.array(["train"] * n_train + ["val"] * (L - n_train))
    t = init.t + dt * np.arange(K + 1)
    meta = {"seed": int(seed), "fine_h": float(ctx.h), "noise_sigma": float(noise_sigma), "truth": truth, "units": "G-scaled"}
    return Dataset(params, float(dt), t, *(np.stack([tr[c] for tr in trajs]) for c in range(4)), split, meta)


# ---------------------------------------------------------------- text format


def _fmt(values):
    return " ".join(repr(float(v)) for v in values)


def save_dataset(ds: Dataset, path):
    lines = [MAGIC, "# header " + json.dumps(ds.header(), sort_keys=True)]
    for i in range(ds.L):
        lines.append(f"# trajectory {i} {ds.split[i]}")
        for k in range(ds.K + 1):
            row = [ds.t[k]]
            for b in range(ds.n):
                row.extend(ds.q[i, k, b])
                row.extend(ds.p[i, k, b])
                row.extend(ds.R[i, k, b].ravel())
                row.extend(ds.Pi[i, k, b])
            lines.append(_fmt(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise DatasetError(f"{path}: not a version-1 dataset file")
    if not lines[1].startswith("# header "):
        raise DatasetError(f"{path}: missing header")
    head = json.loads(lines[1][len("# header "):])
    n, L, K = head["N"], head["L"], head["K"]
    bodies = tuple(BodyParams(m, tuple(j)) for m, j in zip(head["masses"], head["inertias"]))
    params = SystemParams(bodies, head["G"])
    width = 1 + 18 * n
    rows = np.empty((L, K + 1, width))
    split = []
    pos = 2
    for i in range(L):
        tag = lines[pos].split()
        if tag[:3] != ["#", "trajectory", str(i)]:
            raise DatasetError(f"{path}: expected trajectory {i} at line {pos + 1}")
        split.append(tag[3])
        for k in range(K + 1):
            vals = [float(v) for v in lines[pos + 1 + k].split()]
            if len(vals) != width:
                raise DatasetError(f"{path}: line {pos + 2 + k} has {len(vals)} fields, expected {width}")
            rows[i, k] = vals
        pos += K + 2
    body = rows[..., 1:].reshape(L, K + 1, n, 18)
    meta = {k: v for k, v in head.items() if k not in ("N", "L", "K", "dt", "G", "masses", "inertias")}
    return Dataset(
        params, head["dt"], rows[0, :, 0].copy(),
        body[..., 0:3].copy(), body[..., 3:6].copy(),
        body[..., 6:15].reshape(L, K + 1, n, 3, 3).copy(), body[..., 15:18].copy(),
        np.array(split), meta,
    )
