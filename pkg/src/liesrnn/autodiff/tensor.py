"""Reverse-mode AD over numpy arrays.

A :class:`Tape` records nodes in creation order; :meth:`Tape.grad` sweeps
them backwards.  Values are ordinary float64 arrays, so a forward pass run on
plain numpy inputs and the same pass run on :class:`Tensor` inputs produce
bitwise-identical numbers (see :mod:`liesrnn.autodiff.ops`).
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    """A node on a tape: forward value plus the rule to pull gradients back."""

    __slots__ = ("value", "tape", "index", "parents", "vjp", "op")
    # make ``ndarray <op> Tensor`` defer to Tensor's reflected operators
    __array_ufunc__ = None

    def __init__(self, value, tape, parents=(), vjp=None, op="leaf"):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.vjp = vjp
        self.op = op
        self.index = tape._push(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    # arithmetic is routed through ops so numpy and Tensor inputs share code
    def __add__(self, other):
        return _ops().add(self, other)

    def __radd__(self, other):
        return _ops().add(other, self)

    def __sub__(self, other):
        return _ops().sub(self, other)

    def __rsub__(self, other):
        return _ops().sub(other, self)

    def __mul__(self, other):
        return _ops().mul(self, other)

    def __rmul__(self, other):
        return _ops().mul(other, self)

    def __truediv__(self, other):
        return _ops().div(self, other)

    def __rtruediv__(self, other):
        return _ops().div(other, self)

    def __neg__(self):
        return _ops().neg(self)

    def __matmul__(self, other):
        return _ops().matmul(self, other)

    def __rmatmul__(self, other):
        return _ops().matmul(other, self)

    def __getitem__(self, idx):
        return _ops().getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)


def _ops():
    from . import ops

    return ops


class Tape:
    """Creation-ordered node list; creation order is a topological order."""

    def __init__(self):
        self.nodes = []

    def _push(self, node):
        self.nodes.append(node)
        return len(self.nodes) - 1

    def leaf(self, value):
        return Tensor(np.array(value, dtype=float), self)

    def __len__(self):
        return len(self.nodes)

    def grad(self, loss, wrt):
        """Gradients of scalar ``loss`` with respect to each tensor in ``wrt``.

        Unreached leaves get zero gradients.
        """
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise ValueError("loss must be a Tensor recorded on this tape")
        if loss.value.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        keep = {t.index for t in wrt}
        grads = [None] * (loss.index + 1)
        grads[loss.index] = np.ones_like(loss.value)
        for i in range(loss.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            node = self.nodes[i]
            if node.vjp is not None:
                for parent, pg in zip(node.parents, node.vjp(g)):
                    if parent is None or pg is None:
                        continue
                    j = parent.index
                    grads[j] = pg if grads[j] is None else grads[j] + pg
            if i not in keep:
                grads[i] = None
        out = []
        for t in wrt:
            g = grads[t.index] if t.index <= loss.index else None
            out.append(np.zeros_like(t.value) if g is None else g)
        return out


def grad(loss, wrt):
    """Functional form of :meth:`Tape.grad`."""
    return loss.tape.grad(loss, wrt)
