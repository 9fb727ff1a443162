"""Central finite-difference oracle for reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_gradient(f: Callable[[], Tensor], x: Tensor, eps: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x.data`` in place."""
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f().data.sum())
        flat[i] = orig - eps
        fm = float(f().data.sum())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative error ``|a - b| / max(|a|, |b|)``; 0 when both vanish."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def check_gradients(f: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> list[float]:
    """Relative error between backprop and finite differences for each input.

    ``f`` must rebuild the graph from ``inputs`` on every call and return a
    tensor; non-scalar outputs are reduced with a sum.
    """
    for x in inputs:
        x.grad = None
        x.requires_grad = True
    out = f()
    out.backward(np.ones_like(out.data))
    errors = []
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        errors.append(relative_error(analytic, numerical_gradient(f, x, eps)))
    return errors
