"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every op builds its output ``Tensor`` together with a closure that maps the
output adjoint to input adjoints.  The tape is the implicit DAG of parent
links; it is rebuilt on every forward pass and walked once by
:meth:`Tensor.backward`.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op = _op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'}, requires_grad={self.requires_grad})"

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every tensor requiring grad."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        adjoints: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + pg
                else:
                    adjoints[key] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


class Parameter(Tensor):
    """A learnable tensor with a unique name and the init rule that produced it."""

    __slots__ = ("name", "init")

    def __init__(self, name: str, data, init: str = "given"):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.init = init

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, init={self.init!r})"


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, _parents=tuple(parents) if needs else (), _op=op)
    if needs:
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


# ---------------------------------------------------------------- shape ops

def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose")


def getitem(x: Tensor, index) -> Tensor:
    """Basic (slice/integer) indexing; advanced indexing is not supported."""

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _make(x.data[index], (x,), backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                 lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


# ---------------------------------------------------------------- reductions

def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(x.data.sum(axis=axis), (x,), backward, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _make(x.data.mean(axis=axis), (x,), backward, "mean")


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` where ``b`` is 2-D and ``a`` has any number of leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` of shape (in_features, out_features)."""
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


def sparse_dense_matmul(S, x: Tensor) -> Tensor:
    """Product of a constant sparse (V, V) matrix with ``x`` of shape (V, F) or (B, V, F)."""
    S = sp.csr_matrix(S)
    if x.ndim not in (2, 3) or x.shape[-2] != S.shape[1]:
        raise ValueError(f"sparse_dense_matmul shape mismatch: {S.shape} @ {x.shape}")
    ST = S.T.tocsr()

    def apply(M, arr):
        if arr.ndim == 2:
            return np.asarray(M @ arr)
        nb, nv, nf = arr.shape
        flat = arr.transpose(1, 0, 2).reshape(nv, nb * nf)
        return np.asarray(M @ flat).reshape(M.shape[0], nb, nf).transpose(1, 0, 2)

    return _make(apply(S, x.data), (x,), lambda g: (apply(ST, g),), "spmm")


# ---------------------------------------------------------------- layers

def layer_norm(x: Tensor, gain: Tensor, offset: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale by ``gain`` and shift by ``offset``."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv_std = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv_std
    n = x.shape[-1]

    def backward(g):
        dxhat = g * gain.data
        dx = inv_std / n * (n * dxhat - dxhat.sum(-1, keepdims=True)
                            - xhat * (dxhat * xhat).sum(-1, keepdims=True))
        return (dx,
                _unbroadcast(g * xhat, gain.shape),
                _unbroadcast(g, offset.shape))

    return _make(xhat * gain.data + offset.data, (x, gain, offset), backward, "layer_norm")


def _conv_out(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def conv3d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """3-D cross-correlation of a (B, C, X, Y, Z) input with a (O, C, kx, ky, kz) kernel."""
    if x.ndim != 5 or kernel.ndim != 5 or x.shape[1] != kernel.shape[1]:
        raise ValueError(f"conv3d shape mismatch: input {x.shape}, kernel {kernel.shape}")
    nb, cin = x.shape[:2]
    cout, _, kx, ky, kz = kernel.shape
    out_dims = [_conv_out(n, k, stride, padding) for n, k in zip(x.shape[2:], (kx, ky, kz))]
    if min(out_dims) < 1:
        raise ValueError(f"conv3d kernel {kernel.shape[2:]} larger than padded input {x.shape[2:]}")
    ox, oy, oz = out_dims
    p = padding
    xp = np.ascontiguousarray(np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p), (p, p))) if p else x.data)
    cols = kernels.im2col3d(xp, kx, ky, kz, stride, ox, oy, oz).reshape(nb, cin * kx * ky * kz, -1)
    w2 = kernel.data.reshape(cout, -1)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[None, :, None]

    def backward(g):
        g = g.reshape(nb, cout, -1)
        gw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.shape)
        gcols = np.matmul(w2.T, g).reshape(nb, cin, kx, ky, kz, ox, oy, oz)
        gxp = kernels.col2im3d(gcols, *xp.shape[2:], stride)
        gx = gxp[:, :, p:p + x.shape[2], p:p + x.shape[3], p:p + x.shape[4]] if p else gxp
        grads = [np.ascontiguousarray(gx), gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _make(out.reshape(nb, cout, ox, oy, oz), parents, backward, "conv3d")


def gaussian_sample(mu: Tensor, logvar: Tensor, noise) -> Tensor:
    """Reparametrised draw ``mu + exp(logvar / 2) * noise`` with caller-supplied noise."""
    noise = np.asarray(noise, dtype=np.float64)
    if not (mu.shape == logvar.shape == noise.shape):
        raise ValueError(f"gaussian_sample shapes differ: {mu.shape}, {logvar.shape}, {noise.shape}")
    std = np.exp(0.5 * logvar.data)
    return _make(mu.data + std * noise, (mu, logvar),
                 lambda g: (g, 0.5 * g * noise * std), "gaussian_sample")
