"""Adam optimizer with bias correction and a step learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import numpy as np

from avsep.errors import NumericError
from avsep.ndgrad.tensor import Tensor


@dataclass
class OptimizerState:
    """Per-parameter moment accumulators plus the shared step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: OptimizerState,
) -> Tuple[Dict[str, np.ndarray], OptimizerState]:
    """One Adam update. Pure: returns new parameter arrays and mutated state.

    Raises NumericError naming the offending parameter when its gradient is
    non-finite.
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise NumericError(f"adam_step: gradient/param shape mismatch for {name!r}")
        if not np.isfinite(g.sum()) and not np.isfinite(g).all():
            raise NumericError(f"adam_step: non-finite gradient for parameter {name!r}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        mhat = m / bc1
        vhat = v / bc2
        new_params[name] = p - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return new_params, state


class Adam:
    """Convenience wrapper driving :func:`adam_step` over named Tensors."""

    def __init__(self, params: Dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float):
        self.state.lr = float(value)

    def step(self):
        grads = {}
        for name, p in self.params.items():
            if p.grad is None:
                grads[name] = np.zeros_like(p.data)
            else:
                grads[name] = p.grad
        arrays = {name: p.data for name, p in self.params.items()}
        new_arrays, _ = adam_step(arrays, grads, self.state)
        for name, p in self.params.items():
            p.data = new_arrays[name]

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
