"""Minimal define-by-run reverse-mode autodiff over float64 numpy arrays.

Every primitive builds its output eagerly and, when any input requires a
gradient, records a closure that maps the output gradient back to the inputs.
``Tensor.backward`` walks the recorded graph in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class GraphError(RuntimeError):
    pass


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = tuple(_parents)
        self._backward: Optional[BackwardFn] = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf requiring grad."""
        if not self.requires_grad:
            raise GraphError("backward called on a tensor that is not part of a recorded graph")
        if grad is None:
            if self.data.size != 1:
                raise GraphError("backward without an explicit seed needs a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise ShapeError(f"seed gradient shape {grad.shape} != output shape {self.shape}")

        order = _topological_order(self)
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topological_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError("operation produced NaN or Inf")
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc


# ---------------------------------------------------------------------------
# primitives


def add(*xs: Tensor) -> Tensor:
    """Elementwise sum of any number of tensors (numpy broadcasting)."""
    if not xs:
        raise ShapeError("add needs at least one tensor")
    try:
        np.broadcast_shapes(*(x.shape for x in xs))
    except ValueError as exc:
        raise ShapeError(f"add: incompatible shapes {[x.shape for x in xs]}") from exc
    out = xs[0].data
    for x in xs[1:]:
        out = out + x.data

    def backward(g):
        return [_unbroadcast(g, x.shape) if x.shape != g.shape else g for x in xs]

    return _make(out, xs, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward)


def total(x: Tensor) -> Tensor:
    """Sum of all elements, as a 0-d tensor."""

    def backward(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(x.data.sum()), (x,), backward)


def affine(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ W + b`` for a batch ``x`` of shape (n, d_in)."""
    if x.data.ndim != 2 or W.data.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeError(f"affine: x {x.shape} incompatible with W {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise ShapeError(f"affine: bias {b.shape} does not match W {W.shape}")
    out = x.data @ W.data
    if b is not None:
        out = out + b.data
    parents = (x, W) if b is None else (x, W, b)

    def backward(g):
        grads = [g @ W.data.T if x.requires_grad else None,
                 x.data.T @ g if W.requires_grad else None]
        if b is not None:
            grads.append(g.sum(axis=0))
        return grads

    return _make(out, parents, backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def clip(x: Tensor, lo: float = 0.0, hi: float = 1.0) -> Tensor:
    """Elementwise clip; gradient passes only strictly inside (lo, hi)."""
    inside = (x.data > lo) & (x.data < hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax over ``axis``; each slice along the other axes is one group."""
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), backward)


def batchnorm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Non-affine batch normalization over axis 0 using batch statistics."""
    if x.data.ndim != 2:
        raise ShapeError(f"batchnorm expects (batch, features), got {x.shape}")
    n = x.shape[0]
    mu = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std

    def backward(g):
        gs = g.sum(axis=0)
        gx = (g * xhat).sum(axis=0)
        return (inv_std / n * (n * g - gs - xhat * gx),)

    return _make(xhat, (x,), backward)


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    xs = list(xs)
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def backward(g):
        return np.split(g, bounds, axis=axis)

    return _make(out, xs, backward)


def weighted_sum(xs: Sequence[Optional[Tensor]], weights: Tensor, row: int, like: Tensor) -> Tensor:
    """``sum_k weights[row, k] * xs[k]``; ``None`` entries contribute nothing.

    ``like`` supplies the output shape when every entry is ``None``.
    """
    shape = like.shape
    out = np.zeros(shape)
    w = weights.data[row]
    live = []
    for k, x in enumerate(xs):
        if x is None:
            continue
        if x.shape != shape:
            raise ShapeError(f"weighted_sum: operand {x.shape} != {shape}")
        out = out + w[k] * x.data
        live.append((k, x))
    parents = [weights] + [x for _, x in live]

    def backward(g):
        gw = np.zeros_like(weights.data)
        grads = [gw]
        for k, x in live:
            gw[row, k] = float((g * x.data).sum())
            grads.append(w[k] * g)
        return grads

    return _make(out, parents, backward)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy over the batch; ``labels`` are integer classes."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), labels]))
    p = np.exp(z - logsum[:, None])

    def backward(g):
        d = p.copy()
        d[np.arange(n), labels] -= 1.0
        return (d * (g / n),)

    return _make(np.asarray(loss), (logits,), backward)
