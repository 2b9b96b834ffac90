"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor records the op graph as it is built; `backward(loss)` propagates
exact adjoints from a scalar terminal and returns the gradient table for
every named leaf. The op set covers what the toy model needs: elementwise
arithmetic with broadcasting, matmul, reductions, exp/log/sqrt/pow,
reshape/transpose, and row-softmax built from those.
"""
from __future__ import annotations

from typing import Callable, Dict, List, Optional, Tuple

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to the original shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "name", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False,
                 name: Optional[str] = None,
                 _parents: Tuple["Tensor", ...] = (),
                 _bwd: Optional[Callable[[np.ndarray], None]] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._bwd = _bwd

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- elementwise arithmetic ------------------------------------------

    def __add__(self, other):
        other = astensor(other)
        out = Tensor(self.data + other.data, _parents=(self, other))

        def bwd(g):
            self._accum(_unbroadcast(g, self.data.shape))
            other._accum(_unbroadcast(g, other.data.shape))
        out._bwd = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, _parents=(self,))
        out._bwd = lambda g: self._accum(-g)
        return out

    def __sub__(self, other):
        return self + (-astensor(other))

    def __rsub__(self, other):
        return astensor(other) + (-self)

    def __mul__(self, other):
        other = astensor(other)
        out = Tensor(self.data * other.data, _parents=(self, other))

        def bwd(g):
            self._accum(_unbroadcast(g * other.data, self.data.shape))
            other._accum(_unbroadcast(g * self.data, other.data.shape))
        out._bwd = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = astensor(other)
        out = Tensor(self.data / other.data, _parents=(self, other))

        def bwd(g):
            self._accum(_unbroadcast(g / other.data, self.data.shape))
            other._accum(_unbroadcast(-g * self.data / (other.data ** 2),
                                      other.data.shape))
        out._bwd = bwd
        return out

    def __rtruediv__(self, other):
        return astensor(other) / self

    def __matmul__(self, other):
        other = astensor(other)
        out = Tensor(self.data @ other.data, _parents=(self, other))

        def bwd(g):
            a, b = self.data, other.data
            if a.ndim == 1 and b.ndim == 1:
                self._accum(g * b)
                other._accum(g * a)
            elif a.ndim == 1:
                self._accum(b @ g)
                other._accum(np.outer(a, g))
            elif b.ndim == 1:
                self._accum(np.outer(g, b))
                other._accum(a.T @ g)
            else:
                self._accum(g @ b.T)
                other._accum(a.T @ g)
        out._bwd = bwd
        return out

    def pow(self, exponent: float):
        out = Tensor(self.data ** exponent, _parents=(self,))
        out._bwd = lambda g: self._accum(g * exponent * self.data ** (exponent - 1))
        return out

    # -- nonlinearities ---------------------------------------------------

    def exp(self):
        out = Tensor(np.exp(self.data), _parents=(self,))
        out._bwd = lambda g: self._accum(g * out.data)
        return out

    def log(self):
        out = Tensor(np.log(self.data), _parents=(self,))
        out._bwd = lambda g: self._accum(g / self.data)
        return out

    def sqrt(self):
        out = Tensor(np.sqrt(self.data), _parents=(self,))
        out._bwd = lambda g: self._accum(g * 0.5 / out.data)
        return out

    # -- shape and reductions --------------------------------------------

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), _parents=(self,))
        out._bwd = lambda g: self._accum(g.reshape(self.data.shape))
        return out

    def transpose(self):
        out = Tensor(self.data.T, _parents=(self,))
        out._bwd = lambda g: self._accum(g.T)
        return out

    @property
    def T(self):
        return self.transpose()

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,))

        def bwd(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.data.shape).copy())
        out._bwd = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def __getitem__(self, key):
        out = Tensor(self.data[key], _parents=(self,))

        def bwd(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            self._accum(full)
        out._bwd = bwd
        return out

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"


def astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def dot(a: Tensor, b: Tensor) -> Tensor:
    return (a * b).sum()


def softmax_rows(x: Tensor) -> Tensor:
    """Row softmax with detached max subtraction for stability."""
    shift = x - Tensor(x.data.max(axis=-1, keepdims=True))
    e = shift.exp()
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(x: Tensor) -> Tensor:
    shift = x - Tensor(x.data.max(axis=-1, keepdims=True))
    return shift - shift.exp().sum(axis=-1, keepdims=True).log()


def cosine_t(u: Tensor, v: Tensor) -> Tensor:
    """Differentiable cosine similarity of two 1-D tensors."""
    nu = (u * u).sum().sqrt()
    nv = (v * v).sum().sqrt()
    return (u * v).sum() / (nu * nv)


def _topo(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    seen = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> Dict[str, np.ndarray]:
    """Reverse-mode pass from a scalar terminal; returns {leaf name: grad}."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar terminal, got shape {loss.shape}")
    order = _topo(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)
    table: Dict[str, np.ndarray] = {}
    for node in order:
        if node.name is not None:
            table[node.name] = (node.grad.copy() if node.grad is not None
                                else np.zeros_like(node.data))
    return table
