"""Learned residual potential and forcing, and the dynamics model that combines them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ops as F
from ..autodiff.mlp import MlpParams, init_mlp, mlp_forward, mlp_value_and_input_grad
from ..integrators import StepContext, StepScheme, stepper
from ..potentials import ForcingModel, PointMassPotential, PotentialModel, ZeroForcing, composite_potential
from ..rigidbody import Phase, SystemParams


@dataclass
class Normalizer:
    """Per-coordinate affine map ``x -> (x - mean) / scale`` on a flat encoding."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, size):
        return cls(np.zeros(size), np.ones(size))

    def __call__(self, x):
        return (x - self.mean) / self.scale


def _group_stats(x, rel_floor=1e-2):
    """Mean and std over samples, with small stds floored at ``rel_floor`` of the group's largest."""
    flat = x.reshape(-1, x.shape[-2] * x.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    floor = rel_floor * std.max() if std.max() > 0 else 1.0
    return mean, np.maximum(std, floor)


def fit_normalizers(q, p, Pi, n, enabled=True):
    """Encodings for the potential ``(q, R)`` and forcing ``(q, R, p, Pi)`` inputs.

    ``q, p, Pi`` are standardized from the given samples; rotation entries are
    left as they are.
    """
    if not enabled:
        return Normalizer.identity(12 * n), Normalizer.identity(18 * n)
    qm, qs = _group_stats(q)
    pm, ps = _group_stats(p)
    wm, ws = _group_stats(Pi)
    rm, rs = np.zeros(9 * n), np.ones(9 * n)
    pot = Normalizer(np.concatenate([qm, rm]), np.concatenate([qs, rs]))
    frc = Normalizer(np.concatenate([qm, rm, pm, wm]), np.concatenate([qs, rs, ps, ws]))
    return pot, frc


def _flat(x, size):
    shape = np.shape(F.value(x))
    lead = shape[: len(shape) - (2 if size == 3 else 3)]
    return F.reshape(x, lead + (-1,)), lead


def encode_potential_input(q, R):
    """``(q_1..q_N, vec(R_1)..vec(R_N))``: length ``12 N``."""
    fq, lead = _flat(q, 3)
    fr, _ = _flat(R, 9)
    return F.concat([fq, fr], axis=-1), lead


def encode_forcing_input(q, R, p, Pi):
    """Potential encoding followed by ``(p, Pi)``: length ``18 N``."""
    fq, lead = _flat(q, 3)
    fr, _ = _flat(R, 9)
    fp, _ = _flat(p, 3)
    fw, _ = _flat(Pi, 3)
    return F.concat([fq, fr, fp, fw], axis=-1), lead


class LearnedPotential(PotentialModel):
    """``V_resid(q, R) = output_scale * MLP(normalize(q, R))``."""

    has_rotation_dependence = True

    def __init__(self, net: MlpParams, n, normalizer: Normalizer, output_scale=1.0):
        self.net = net
        self.n = n
        self.normalizer = normalizer
        self.output_scale = float(output_scale)

    def grad(self, q, R):
        x, lead = encode_potential_input(q, R)
        _, g = mlp_value_and_input_grad(self.net, self.normalizer(x))
        g = g * (self.output_scale / self.normalizer.scale)
        n3 = 3 * self.n
        gq = F.reshape(F.getitem(g, (Ellipsis, slice(0, n3))), lead + (self.n, 3))
        gr = F.reshape(F.getitem(g, (Ellipsis, slice(n3, None))), lead + (self.n, 3, 3))
        return gq, gr

    def value(self, q, R):
        x, _ = encode_potential_input(np.asarray(q, float), np.asarray(R, float))
        return self.output_scale * np.asarray(mlp_forward(self.net, self.normalizer(x)))[..., 0]


class LearnedForcing(ForcingModel):
    """One network with ``6 N`` outputs split into ``(F_p, F_Pi)``."""

    def __init__(self, net: MlpParams, n, normalizer: Normalizer, output_scale=1.0):
        self.net = net
        self.n = n
        self.normalizer = normalizer
        self.output_scale = float(output_scale)

    def forces(self, q, R, p, Pi):
        x, lead = encode_forcing_input(q, R, p, Pi)
        out = mlp_forward(self.net, self.normalizer(x)) * self.output_scale
        n3 = 3 * self.n
        fp = F.reshape(F.getitem(out, (Ellipsis, slice(0, n3))), lead + (self.n, 3))
        fw = F.reshape(F.getitem(out, (Ellipsis, slice(n3, None))), lead + (self.n, 3))
        return fp, fw


@dataclass
class LearnedDynamics:
    """Known point-mass gravity plus learned ``V_resid`` and (optionally) forcing."""

    params: SystemParams
    v_net: MlpParams
    f_net: MlpParams = None
    v_norm: Normalizer = None
    f_norm: Normalizer = None
    v_scale: float = 1.0
    f_scale: float = 1.0
    conservative_only: bool = True
    r_min: float = 0.0

    def __post_init__(self):
        n = self.params.n
        if self.v_norm is None:
            self.v_norm = Normalizer.identity(12 * n)
        if self.f_norm is None:
            self.f_norm = Normalizer.identity(18 * n)
        self.known = PointMassPotential(self.params, r_min=self.r_min)

    @classmethod
    def initial(cls, params, hidden=(256, 256, 256), seed=0, conservative_only=True, **kw):
        rng = np.random.default_rng(seed)
        n = params.n
        v_net = init_mlp(12 * n, 1, hidden, rng)
        f_net = None if conservative_only else init_mlp(18 * n, 6 * n, hidden, rng)
        return cls(params, v_net, f_net, conservative_only=conservative_only, **kw)

    def parameter_arrays(self):
        arrays = list(self.v_net.arrays())
        if not self.conservative_only and self.f_net is not None:
            arrays += self.f_net.arrays()
        return arrays

    def with_parameters(self, arrays):
        """Same model with ``arrays`` (numpy or tape leaves) as its weights."""
        nv = len(self.v_net.arrays())
        v_net = MlpParams.from_arrays(arrays[:nv])
        f_net = MlpParams.from_arrays(arrays[nv:]) if len(arrays) > nv else self.f_net
        return LearnedDynamics(self.params, v_net, f_net, self.v_norm, self.f_norm,
                               self.v_scale, self.f_scale, self.conservative_only, self.r_min)

    def potential(self):
        return composite_potential([self.known, LearnedPotential(self.v_net, self.params.n, self.v_norm, self.v_scale)])

    def forcing(self):
        if self.conservative_only or self.f_net is None:
            return ZeroForcing()
        return LearnedForcing(self.f_net, self.params.n, self.f_norm, self.f_scale)

    def context(self, h):
        return StepContext(self.params, self.potential(), self.forcing(), h=h)


def predict_rollout(model: LearnedDynamics, start: Phase, dt, H, K_loss=1, scheme=StepScheme.LIE_T2):
    """``K_loss`` successive predicted observations, each ``H`` steps of size ``dt / H`` apart.

    ``start`` may carry leading batch axes and tape tensors; the returned list
    holds one :class:`Phase` per observation (the start itself is excluded).
    """
    if H < 1 or K_loss < 1:
        raise ValueError("need H >= 1 and K_loss >= 1")
    ctx = model.context(dt / H)
    fn = stepper(scheme)
    x = start
    out = []
    for _ in range(K_loss):
        for _ in range(H):
            x = fn(x, ctx)
        out.append(x)
    return out


def save_model(path, model: LearnedDynamics, config=None, curve=None, optimizer=None):
    """Write ``model`` (plus optional optimizer moments and training curve) as a checkpoint."""
    from ..autodiff.checkpoint import save_checkpoint

    arrays = {}
    for prefix, net in (("v", model.v_net), ("f", model.f_net)):
        if net is None:
            continue
        for k, a in enumerate(net.arrays()):
            arrays[f"{prefix}_{k:02d}"] = np.asarray(F.value(a))
    for prefix, norm in (("v_norm", model.v_norm), ("f_norm", model.f_norm)):
        arrays[prefix + "_mean"] = norm.mean
        arrays[prefix + "_scale"] = norm.scale
    meta = {
        "G": model.params.G,
        "masses": [b.mass for b in model.params.bodies],
        "inertias": [list(b.inertia) for b in model.params.bodies],
        "v_scale": model.v_scale,
        "f_scale": model.f_scale,
        "conservative_only": model.conservative_only,
        "r_min": model.r_min,
        "curve": curve,
    }
    if optimizer is not None:
        meta["optimizer"] = {**optimizer.hyper(), "step": optimizer.step}
        for k, (m, v) in enumerate(zip(optimizer.m, optimizer.v)):
            arrays[f"adam_m_{k:02d}"] = m
            arrays[f"adam_v_{k:02d}"] = v
    save_checkpoint(path, arrays, meta, config)


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(model, meta, optimizer_or_None)``."""
    from ..autodiff.adamw import AdamWState
    from ..autodiff.checkpoint import load_checkpoint
    from ..rigidbody import BodyParams

    arrays, meta = load_checkpoint(path)
    params = SystemParams(tuple(BodyParams(m, tuple(j)) for m, j in zip(meta["masses"], meta["inertias"])), meta["G"])

    def net(prefix):
        keys = sorted(k for k in arrays if k.startswith(prefix + "_") and k[len(prefix) + 1:].isdigit())
        return MlpParams.from_arrays([arrays[k] for k in keys]) if keys else None

    model = LearnedDynamics(
        params, net("v"), net("f"),
        Normalizer(arrays["v_norm_mean"], arrays["v_norm_scale"]),
        Normalizer(arrays["f_norm_mean"], arrays["f_norm_scale"]),
        meta["v_scale"], meta["f_scale"], meta["conservative_only"], meta["r_min"],
    )
    opt = None
    if "optimizer" in meta:
        o = meta["optimizer"]
        opt = AdamWState(o["lr"], tuple(o["betas"]), o["eps"], o["weight_decay"], o["step"])
        n = len([k for k in arrays if k.startswith("adam_m_")])
        opt.m = [arrays[f"adam_m_{k:02d}"] for k in range(n)]
        opt.v = [arrays[f"adam_v_{k:02d}"] for k in range(n)]
    return model, meta, opt
