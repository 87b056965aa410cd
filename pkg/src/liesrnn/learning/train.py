"""Training loop: backpropagation through unrolled integrator steps."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..autodiff import AdamWState, Tape, adamw_update
from ..integrators import StepScheme
from ..rigidbody import Phase
from .dataset import Dataset
from .loss import DIVERGED_LOSS, srnn_loss
from .model import LearnedDynamics, fit_normalizers, predict_rollout

log = logging.getLogger(__name__)


class TrainingDiverged(ArithmeticError):
    """Every training sample diverged for a whole epoch."""

    def __init__(self, epoch, curve):
        self.epoch = epoch
        self.curve = curve
        super().__init__(f"all training samples diverged in epoch {epoch}")


@dataclass
class TrainConfig:
    batch_size: int = 256
    lr: float = 4e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-4
    substeps: int = 4
    k_loss: int = 1
    scheme: str = "lie_t2"
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    hidden: tuple = (256, 256, 256)
    normalize: bool = True
    v_scale: float = 1.0
    f_scale: float = 1.0
    conservative_only: bool = True
    loss_weights: dict = field(default_factory=lambda: {"q": 1.0, "p": 1.0, "R": 1.0, "Pi": 1.0})
    geodesic_R: bool = False

    def __post_init__(self):
        StepScheme.parse(self.scheme)
        if self.substeps < 1 or self.k_loss < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("substeps, k_loss, batch_size and max_epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        self.betas = tuple(self.betas)
        self.hidden = tuple(self.hidden)

    def as_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainResult:
    model: LearnedDynamics
    curve: list
    best_epoch: int
    stop_reason: str
    optimizer: AdamWState = None


def _batch(ds: Dataset, pairs, k_loss):
    i, k = pairs[:, 0], pairs[:, 1]
    start = Phase(ds.q[i, k], ds.p[i, k], ds.R[i, k], ds.Pi[i, k])
    targets = [Phase(ds.q[i, k + j], ds.p[i, k + j], ds.R[i, k + j], ds.Pi[i, k + j]) for j in range(1, k_loss + 1)]
    return start, targets


def _finite(pred):
    ok = np.ones(np.shape(pred[-1].values().q)[0], dtype=bool)
    for x in pred:
        ok &= x.finite()
    return ok


def _take(x: Phase, mask):
    return Phase(*(a[mask] for a in x))


def batch_loss(model, ds, pairs, cfg: TrainConfig, tape=None):
    """Loss on ``pairs``; with a ``tape`` also returns gradients for every parameter.

    Diverged samples are dropped and the rest re-run, so they add to the report
    but not to the gradient.
    """
    start, targets = _batch(ds, pairs, cfg.k_loss)
    h_args = (ds.dt, cfg.substeps, cfg.k_loss, StepScheme.parse(cfg.scheme))
    diverged = 0
    with np.errstate(all="ignore"):
        for _ in range(2):
            if tape is not None:
                tape.nodes.clear()
                leaves = [tape.leaf(a) for a in model.parameter_arrays()]
                m = model.with_parameters(leaves)
            else:
                m = model
            pred = predict_rollout(m, start, *h_args)
            ok = _finite(pred)
            if ok.all():
                break
            diverged += int((~ok).sum())
            if not ok.any():
                return None, DIVERGED_LOSS, diverged
            start = _take(start, ok)
            targets = [_take(t, ok) for t in targets]
    loss, report = srnn_loss(pred, targets, cfg.loss_weights, cfg.geodesic_R, diverged)
    grads = tape.grad(loss, leaves) if tape is not None else None
    if tape is not None:
        tape.nodes.clear()
    return grads, report, diverged


def evaluate_loss(model, ds, pairs, cfg: TrainConfig, chunk=1024):
    """Mean loss over ``pairs`` without taping (diverged samples count ``DIVERGED_LOSS``)."""
    total, count, div = 0.0, 0, 0
    for s in range(0, len(pairs), chunk):
        part = pairs[s:s + chunk]
        _, rep, d = batch_loss(model, ds, part, cfg)
        value = rep if isinstance(rep, float) else rep.total
        total += value * len(part)
        count += len(part)
        div += d
    return total / max(count, 1), div


def initial_model(ds: Dataset, cfg: TrainConfig):
    train_idx = ds.indices("train")
    v_norm, f_norm = fit_normalizers(ds.q[train_idx], ds.p[train_idx], ds.Pi[train_idx], ds.n, cfg.normalize)
    return LearnedDynamics.initial(
        ds.params, cfg.hidden, cfg.seed, cfg.conservative_only,
        v_norm=v_norm, f_norm=f_norm, v_scale=cfg.v_scale, f_scale=cfg.f_scale,
    )


def train(ds: Dataset, cfg: TrainConfig, model: LearnedDynamics = None, callback=None):
    """Minibatch AdamW with per-epoch validation and early stopping on a plateau.

    Returns the best-validation model.  Fully deterministic for a given seed.
    """
    train_pairs = ds.pairs("train", cfg.k_loss)
    val_pairs = ds.pairs("val", cfg.k_loss)
    if len(train_pairs) == 0:
        raise ValueError("dataset has no training samples")
    if len(val_pairs) == 0:
        val_pairs = train_pairs
    model = model or initial_model(ds, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    opt = AdamWState.for_params(model.parameter_arrays(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay)
    tape = Tape()
    val0, vdiv0 = evaluate_loss(model, ds, val_pairs, cfg)
    curve = [{"epoch": 0, "train_loss": None, "val_loss": val0, "train_diverged": 0, "val_diverged": vdiv0}]
    best, best_epoch, best_arrays = val0, 0, model.parameter_arrays()
    stale = 0
    reason = "max_epochs"
    n = len(train_pairs)
    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.batch_size > n:
            order = rng.integers(0, n, size=cfg.batch_size)
        else:
            order = rng.permutation(n)
        losses, weights, div = [], [], 0
        for s in range(0, len(order), cfg.batch_size):
            pairs = train_pairs[order[s:s + cfg.batch_size]]
            grads, rep, d = batch_loss(model, ds, pairs, cfg, tape)
            div += d
            losses.append(rep if isinstance(rep, float) else rep.total)
            weights.append(len(pairs))
            if grads is not None:
                model = model.with_parameters(adamw_update(opt, model.parameter_arrays(), grads))
        if div == len(order):
            raise TrainingDiverged(epoch, curve)
        val, vdiv = evaluate_loss(model, ds, val_pairs, cfg)
        train_loss = float(np.average(losses, weights=weights))
        curve.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val, "train_diverged": div, "val_diverged": vdiv})
        log.info("epoch %d train %.6e val %.6e", epoch, train_loss, val)
        if callback is not None:
            callback(curve[-1])
        if val < best:
            best, best_epoch, best_arrays, stale = val, epoch, model.parameter_arrays(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                reason = "plateau"
                break
    return TrainResult(model.with_parameters(best_arrays), curve, best_epoch, reason, opt)


def baseline_train_matrix(ds: Dataset, cfg: TrainConfig, schemes, evaluate=None):
    """Train once per scheme with otherwise identical settings.

    Returns ``{scheme: {"status": "converged" | "diverged", "curve": ..., "metrics": ...}}``.
    ``evaluate(model, scheme)`` supplies the metrics of a trained model.
    """
    out = {}
    for s in schemes:
        scheme = StepScheme.parse(s)
        run_cfg = TrainConfig(**{**cfg.as_dict(), "scheme": scheme.value})
        try:
            res = train(ds, run_cfg)
        except TrainingDiverged as exc:
            out[scheme.value] = {"status": "diverged", "curve": exc.curve, "metrics": None}
            continue
        metrics = evaluate(res.model, scheme) if evaluate is not None else None
        out[scheme.value] = {"status": "converged", "curve": res.curve, "metrics": metrics, "model": res.model}
    return out
