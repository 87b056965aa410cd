"""Fully connected SiLU network with an explicit input-gradient pass.

Layers are stored as ``(W, b)`` with ``W`` of shape ``(fan_in, fan_out)``, so a
row batch ``x`` maps to ``x @ W + b``.  Parameters may be plain arrays or
tape leaves; every operation goes through :mod:`liesrnn.autodiff.ops`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops as F


@dataclass
class MlpParams:
    weights: list
    biases: list

    @property
    def sizes(self):
        return [np.shape(F.value(self.weights[0]))[0]] + [np.shape(F.value(w))[1] for w in self.weights]

    def arrays(self):
        """Flat list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, arrays):
        return cls(list(arrays[0::2]), list(arrays[1::2]))

    def on_tape(self, tape):
        """Copy of the parameters as leaves of ``tape``."""
        return MlpParams.from_arrays([tape.leaf(a) for a in self.arrays()])

    def n_params(self):
        return int(sum(np.size(F.value(a)) for a in self.arrays()))


def init_mlp(n_in, n_out, hidden=(256, 256, 256), rng=None, zero_head=True):
    """Uniform(+-sqrt(1/fan_in)) init; the output layer starts at zero when ``zero_head``."""
    rng = np.random.default_rng(rng)
    sizes = [n_in, *hidden, n_out]
    weights, biases = [], []
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(1.0 / a)
        if zero_head and k == len(sizes) - 2:
            weights.append(np.zeros((a, b)))
            biases.append(np.zeros(b))
        else:
            weights.append(rng.uniform(-bound, bound, size=(a, b)))
            biases.append(rng.uniform(-bound, bound, size=b))
    return MlpParams(weights, biases)


def _as_rows(x):
    shape = np.shape(F.value(x))
    if len(shape) == 1:
        return F.reshape(x, (1, shape[0])), shape[:0]
    return F.reshape(x, (-1, shape[-1])), shape[:-1]


def mlp_forward(params: MlpParams, x):
    """Network output for inputs ``x (..., n_in)``; returns ``(..., n_out)``."""
    h, lead = _as_rows(x)
    n = len(params.weights)
    for k in range(n):
        h = F.matmul(h, params.weights[k]) + params.biases[k]
        if k < n - 1:
            h = F.silu(h)
    return F.reshape(h, lead + (np.shape(F.value(h))[-1],))


def mlp_value_and_input_grad(params: MlpParams, x):
    """Scalar-output network value and its gradient with respect to ``x``.

    The backward pass through the network is spelled out with ordinary ops,
    so the input gradient is itself differentiable with respect to the
    parameters when they live on a tape.
    """
    h, lead = _as_rows(x)
    n = len(params.weights)
    if np.shape(F.value(params.weights[-1]))[1] != 1:
        raise ValueError("input gradient needs a scalar-output network")
    pre = []
    for k in range(n):
        z = F.matmul(h, params.weights[k]) + params.biases[k]
        if k < n - 1:
            pre.append(z)
            h = F.silu(z)
        else:
            h = z
    g = F.mT(params.weights[-1])  # (1, width): d out / d h_last, same for every row
    for k in range(n - 2, -1, -1):
        g = F.matmul(g * F.silu_prime(pre[k]), F.mT(params.weights[k]))
    out = F.reshape(h, lead)
    n_in = np.shape(F.value(params.weights[0]))[0]
    g = F.reshape(g, lead + (n_in,))
    return out, g
