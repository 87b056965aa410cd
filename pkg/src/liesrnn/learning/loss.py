"""Trajectory-matching loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import ops as F

DIVERGED_LOSS = 1e6
TERMS = ("q", "p", "R", "Pi")


@dataclass
class LossReport:
    """Mean per-sample loss and its per-term parts.

    ``total = sum(weights[t] * terms[t])`` over finite samples, plus
    ``DIVERGED_LOSS`` times the diverged fraction of the batch.
    """

    total: float
    q: float
    p: float
    R: float
    Pi: float
    diverged: int = 0
    samples: int = 0
    weights: dict = field(default_factory=lambda: dict.fromkeys(TERMS, 1.0))

    def as_dict(self):
        return {"total": self.total, "q": self.q, "p": self.p, "R": self.R, "Pi": self.Pi,
                "diverged": self.diverged, "samples": self.samples}


def _sq(a, b, axes):
    d = a - b
    return F.sum(d * d, axis=axes)


def sample_terms(pred, target, geodesic_R=False):
    """Per-sample squared errors summed over bodies and averaged over the horizon.

    ``pred`` and ``target`` are lists of :class:`Phase` with batch axis 0.
    Returns a dict of ``(B,)`` arrays/tensors.
    """
    if len(pred) != len(target):
        raise ValueError("prediction and target horizons differ")
    acc = dict.fromkeys(TERMS)
    for x, y in zip(pred, target):
        parts = {
            "q": _sq(x.q, y.q, (-2, -1)),
            "p": _sq(x.p, y.p, (-2, -1)),
            "Pi": _sq(x.Pi, y.Pi, (-2, -1)),
        }
        if geodesic_R:
            rel = F.matmul(F.mT(y.R), x.R)
            tr = rel[..., 0, 0] + rel[..., 1, 1] + rel[..., 2, 2]
            parts["R"] = F.sum(3.0 - tr, axis=-1)  # 4 sin^2(theta/2) per body
        else:
            parts["R"] = _sq(x.R, y.R, (-3, -2, -1))
        for t in TERMS:
            acc[t] = parts[t] if acc[t] is None else acc[t] + parts[t]
    return {t: acc[t] * (1.0 / len(pred)) for t in TERMS}


def srnn_loss(pred, target, weights=None, geodesic_R=False, diverged=0):
    """Batch-mean loss over finite samples; returns ``(loss, LossReport)``.

    ``loss`` is taped when the predictions are; ``diverged`` samples already
    removed by the caller are accounted for in the report only.
    """
    weights = dict.fromkeys(TERMS, 1.0) if weights is None else {**dict.fromkeys(TERMS, 1.0), **weights}
    terms = sample_terms(pred, target, geodesic_R)
    b = np.shape(F.value(terms["q"]))[0] if np.ndim(F.value(terms["q"])) else 1
    loss = None
    means = {}
    for t in TERMS:
        m = F.sum(terms[t]) * (1.0 / b)
        means[t] = float(F.value(m))
        loss = m * weights[t] if loss is None else loss + m * weights[t]
    total = b + diverged
    value = (float(F.value(loss)) * b + DIVERGED_LOSS * diverged) / total
    report = LossReport(value, means["q"], means["p"], means["R"], means["Pi"], int(diverged), int(total), weights)
    return loss, report
