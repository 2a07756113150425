"""Reverse-mode autodiff on numpy arrays.

A Tensor wraps an ndarray and, while gradients are enabled, remembers the
operation that produced it. backward() on a scalar walks the graph in
reverse topological order and accumulates gradients into the leaf tensors
(parameters). The op set is deliberately small: matmul, elementwise
arithmetic, a few nonlinearities, softmax, concat/stack/slice, reductions,
and take_along_axis. Nothing here is lazily evaluated; there is no global
tape, so a graph is freed as soon as its root goes out of scope.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "ShapeMismatchError",
    "no_grad",
    "is_grad_enabled",
    "as_tensor",
    "concat",
    "stack",
    "softmax",
    "log_softmax",
    "take_along_axis",
]


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the with-block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # sum over leading axes numpy added
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    # sum over axes that were broadcast from size 1
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """An ndarray with an optional gradient accumulator and graph node info.

    ``requires_grad`` marks trainable leaves; intermediate results carry it
    implicitly whenever any input does. ``grad`` is populated (accumulated)
    only on leaves.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- graph plumbing --------------------------------------------------------

    def _track(self, parents, backward):
        if _GRAD_ENABLED and any(p.requires_grad or p._parents for p in parents):
            self._parents = tuple(parents)
            self._backward = backward
            self.requires_grad = True
        return self

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad.

        Only valid on scalars; the graph is released afterwards as soon as
        this tensor goes out of scope.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and (p.requires_grad or p._parents):
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if pg is None:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] += pg
                    else:
                        grads[key] = pg
            elif node.requires_grad:
                # leaf: accumulate into .grad; intermediate grads are dropped
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g

    # -- arithmetic -------------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other, like=self)
        out = Tensor(self.data + other.data)

        def backward(g):
            return (
                (self, _unbroadcast(g, self.data.shape)),
                (other, _unbroadcast(g, other.data.shape)),
            )

        return out._track((self, other), backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other, like=self)
        out = Tensor(self.data - other.data)

        def backward(g):
            return (
                (self, _unbroadcast(g, self.data.shape)),
                (other, _unbroadcast(-g, other.data.shape)),
            )

        return out._track((self, other), backward)

    def __rsub__(self, other):
        return as_tensor(other, like=self).__sub__(self)

    def __mul__(self, other):
        other = as_tensor(other, like=self)
        out = Tensor(self.data * other.data)
        a, b = self.data, other.data

        def backward(g):
            return (
                (self, _unbroadcast(g * b, a.shape)),
                (other, _unbroadcast(g * a, b.shape)),
            )

        return out._track((self, other), backward)

    __rmul__ = __mul__

    def __neg__(self):
        out = Tensor(-self.data)

        def backward(g):
            return ((self, -g),)

        return out._track((self,), backward)

    def __matmul__(self, other):
        other = as_tensor(other, like=self)
        if self.data.shape[-1] != other.data.shape[-2]:
            raise ShapeMismatchError(
                f"matmul inner dims differ: {self.data.shape} @ {other.data.shape}"
            )
        out = Tensor(self.data @ other.data)
        a, b = self.data, other.data

        def backward(g):
            ga = g @ b.swapaxes(-1, -2)
            gb = a.swapaxes(-1, -2) @ g
            return (
                (self, _unbroadcast(ga, a.shape)),
                (other, _unbroadcast(gb, b.shape)),
            )

        return out._track((self, other), backward)

    def __getitem__(self, idx):
        out = Tensor(self.data[idx])
        shape = self.data.shape

        def backward(g):
            full = np.zeros(shape, dtype=g.dtype)
            full[idx] = g
            return ((self, full),)

        return out._track((self,), backward)

    # -- shape ops ---------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape))
        orig = self.data.shape

        def backward(g):
            return ((self, g.reshape(orig)),)

        return out._track((self,), backward)

    def transpose(self, axes: Sequence[int]):
        axes = tuple(axes)
        out = Tensor(self.data.transpose(axes))
        inv = tuple(np.argsort(axes))

        def backward(g):
            return ((self, g.transpose(inv)),)

        return out._track((self,), backward)

    # -- reductions ----------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims))
        shape = self.data.shape

        def backward(g):
            if axis is None:
                return ((self, np.broadcast_to(g, shape).copy()),)
            if not keepdims:
                g = np.expand_dims(g, axis)
            return ((self, np.broadcast_to(g, shape).copy()),)

        return out._track((self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        elif isinstance(axis, tuple):
            n = int(np.prod([self.data.shape[a] for a in axis]))
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- elementwise nonlinearities ---------------------------------------------------

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(s)

        def backward(g):
            return ((self, g * s * (1.0 - s)),)

        return out._track((self,), backward)

    def tanh(self):
        t = np.tanh(self.data)
        out = Tensor(t)

        def backward(g):
            return ((self, g * (1.0 - t * t)),)

        return out._track((self,), backward)

    def relu(self):
        out = Tensor(np.maximum(self.data, 0.0))
        mask = self.data > 0

        def backward(g):
            return ((self, g * mask),)

        return out._track((self,), backward)

    def elu(self):
        e = np.where(self.data > 0, self.data, np.expm1(self.data))
        out = Tensor(e)
        pos = self.data > 0

        def backward(g):
            return ((self, g * np.where(pos, 1.0, e + 1.0)),)

        return out._track((self,), backward)

    def abs(self):
        out = Tensor(np.abs(self.data))
        sign = np.sign(self.data)

        def backward(g):
            return ((self, g * sign),)

        return out._track((self,), backward)

    def square(self):
        out = Tensor(self.data * self.data)
        x = self.data

        def backward(g):
            return ((self, g * 2.0 * x),)

        return out._track((self,), backward)

    def sqrt(self):
        r = np.sqrt(self.data)
        out = Tensor(r)

        def backward(g):
            return ((self, g * 0.5 / r),)

        return out._track((self,), backward)

    def exp(self):
        e = np.exp(self.data)
        out = Tensor(e)

        def backward(g):
            return ((self, g * e),)

        return out._track((self,), backward)

    def log(self):
        out = Tensor(np.log(self.data))
        x = self.data

        def backward(g):
            return ((self, g / x),)

        return out._track((self,), backward)

    def clamp_min(self, floor: float):
        """Elementwise max(x, floor); gradient passes only where x > floor."""
        out = Tensor(np.maximum(self.data, floor))
        mask = self.data > floor

        def backward(g):
            return ((self, g * mask),)

        return out._track((self,), backward)


class Parameter(Tensor):
    """Trainable leaf tensor."""

    def __init__(self, data, name: str | None = None):
        super().__init__(np.array(data), requires_grad=True, name=name)


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if isinstance(value, np.ndarray) and value.dtype.kind == "f":
        return Tensor(value)  # keep caller-chosen float precision
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(value, dtype=dtype))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        moved = np.moveaxis(g, axis, 0)
        grads = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            grads.append((t, np.moveaxis(moved[lo:hi], 0, axis)))
        return tuple(grads)

    return out._track(tuple(tensors), backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors], axis=axis))

    def backward(g):
        moved = np.moveaxis(g, axis, 0)
        return tuple((t, moved[i]) for i, t in enumerate(tensors))

    return out._track(tuple(tensors), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis``."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s)

    def backward(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return ((x, s * (g - dot)),)

    return out._track((x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    logp = shifted - lse
    out = Tensor(logp)
    p = np.exp(logp)

    def backward(g):
        return ((x, g - p * g.sum(axis=axis, keepdims=True)),)

    return out._track((x,), backward)


def take_along_axis(x: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Select entries along ``axis`` by integer index (index carries no grad)."""
    x = as_tensor(x)
    indices = np.asarray(indices)
    out = Tensor(np.take_along_axis(x.data, indices, axis=axis))
    shape = x.data.shape
    out_shape = out.data.shape  # captured by value: closures must not ref out

    def backward(g):
        # scatter-add in axis-last layout so duplicate indices accumulate
        ax = axis % len(shape)
        moved_shape = shape[:ax] + shape[ax + 1 :] + (shape[ax],)
        acc = np.zeros(moved_shape, dtype=g.dtype)
        moved_idx = np.moveaxis(np.broadcast_to(indices, out_shape), ax, -1)
        moved_g = np.moveaxis(g, ax, -1)
        flat_acc = acc.reshape(-1, moved_shape[-1])
        flat_idx = moved_idx.reshape(-1, moved_idx.shape[-1])
        flat_g = moved_g.reshape(-1, moved_g.shape[-1])
        rows = np.arange(flat_acc.shape[0])[:, None]
        np.add.at(flat_acc, (rows, flat_idx), flat_g)
        return ((x, np.moveaxis(acc, -1, ax)),)

    return out._track((x,), backward)
