"""Shared test helpers: finite-difference oracle and tolerance utilities."""

import numpy as np
import pytest

from avsep.ndgrad import Tape, Tensor


def finite_diff_grad(fn, arrays, index, h=1e-4):
    """Central-difference gradient of scalar fn(*arrays) w.r.t. arrays[index].

    Independent of the tape: calls fn forward-only on perturbed copies.
    """
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(*base)
        flat[i] = orig - h
        fm = fn(*base)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def tape_grads(fn, arrays):
    """Analytic gradients of scalar-Tensor-valued fn over all inputs."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*tensors)
    tape.backward(out)
    return [t.grad for t in tensors], out.item()


def assert_grads_close(fn_tensor, fn_value, arrays, rel=1e-4, h=1e-4):
    """Compare tape gradients of fn_tensor against finite differences of fn_value."""
    grads, _ = tape_grads(fn_tensor, arrays)
    for i, g in enumerate(grads):
        fd = finite_diff_grad(fn_value, arrays, i, h=h)
        denom = max(np.linalg.norm(fd), 1e-8)
        err = np.linalg.norm(g - fd) / denom
        assert err < rel, f"input {i}: rel grad error {err:.3e} >= {rel}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
