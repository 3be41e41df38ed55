"""Tensor and gradient tape.

A Tensor wraps a float64 numpy array. Operations from :mod:`avsep.ndgrad.ops`
record themselves on the active :class:`Tape` (when one is open and the
result requires a gradient); ``Tape.backward`` replays the records in reverse
creation order, which is a valid reverse topological order because a tensor
cannot be consumed before it exists.

Tensors are treated as immutable after creation: no op writes to its inputs,
and ``backward`` only touches the ``grad`` accumulators.
"""

from __future__ import annotations

import itertools
from typing import Callable, Optional, Sequence

import numpy as np

from avsep.errors import DimensionError, NumericError

_uid = itertools.count()


class Tensor:
    """Dense float64 array plus gradient bookkeeping.

    Construction validates finiteness (the error state the ops contract
    forbids). Internal op results skip the scan via ``_checked=True``:
    every op maps finite inputs to finite outputs, and the degenerate
    cases (zero norms, singular systems) raise their own NumericError.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "uid")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _checked: bool = False,
    ):
        arr = np.asarray(data, dtype=np.float64)
        # single-pass finiteness screen: a finite sum implies finite entries
        if not _checked and arr.size and not np.isfinite(arr.sum()):
            if not np.isfinite(arr).all():
                raise NumericError(
                    f"non-finite values in tensor{' ' + name if name else ''}"
                )
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.uid = next(_uid)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise DimensionError(
                f"gradient shape {g.shape} != tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"


class TapeNode:
    """One recorded operation: input/output ids and its backward rule."""

    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(
        self,
        op: str,
        inputs: Sequence[Tensor],
        output: Tensor,
        backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    ):
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward = backward

    @property
    def input_ids(self):
        return tuple(t.uid for t in self.inputs)

    @property
    def output_id(self):
        return self.output.uid


_ACTIVE: Optional["Tape"] = None


class Tape:
    """Ordered record of operations for one reverse pass.

    Use as a context manager around the forward computation, then call
    ``backward(loss)``. Single-threaded by contract: one tape owner per
    training step.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE
        if _ACTIVE is not None:
            raise RuntimeError("a Tape is already active")
        _ACTIVE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE
        _ACTIVE = None
        return False

    def record(self, node: TapeNode):
        self.nodes.append(node)

    def backward(self, loss: Tensor):
        """Accumulate gradients of ``loss`` into every recorded tensor."""
        if loss.data.size != 1:
            raise DimensionError("backward() requires a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            g_out = node.output.grad
            if g_out is None:
                continue
            grads = node.backward(g_out)
            for t, g in zip(node.inputs, grads):
                if g is None:
                    continue
                t.accumulate_grad(g)


def active_tape() -> Optional[Tape]:
    return _ACTIVE


def record_op(
    op: str,
    inputs: Sequence[Tensor],
    out_data: np.ndarray,
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
) -> Tensor:
    """Wrap an op result; register on the active tape when gradients flow."""
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs, _checked=True)
    if needs and _ACTIVE is not None:
        _ACTIVE.record(TapeNode(op, inputs, out, backward))
    return out
