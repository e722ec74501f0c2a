"""Dense tensors with reverse-mode automatic differentiation.

Every tensor records the primitive op that produced it (parents plus a
backward closure), so the executed program forms a DAG rooted at the
loss. ``Tensor.backward`` walks that record once, in reverse
topological order, accumulating gradients into the leaves. 4-D
activations use NCHW layout, contiguous row-major.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from . import precision

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "set_debug_checks",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "power",
    "clamp",
]

_grad_enabled = True
_debug_checks = False


def set_debug_checks(flag: bool) -> None:
    """When on, every op asserts its output is finite (slow; tests only)."""
    global _debug_checks
    _debug_checks = bool(flag)


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / metrics)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _broadcast_check(a_shape: tuple, b_shape: tuple) -> None:
    for da, db in zip(reversed(a_shape), reversed(b_shape)):
        if da != db and da != 1 and db != 1:
            raise ValueError(
                f"shapes {a_shape} and {b_shape} are not broadcast-compatible"
            )


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original leaf shape."""
    if grad.shape == shape:
        return grad
    # extra leading dims were prepended by broadcasting
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """N-dimensional value array with an optional gradient slot.

    Leaves are created directly; interior nodes are created by ops and
    keep the parents and backward closure needed for reverse mode.
    Immutable after creation except for the grad slot (and explicit
    ``data`` rebinding on parameters by the optimizer).
    """

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=precision.dtype())
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op: str = "leaf"

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.requires_grad = False
        t.grad = None
        t._parents = ()
        t._backward = None
        t._op = "leaf"
        return t

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # -- autodiff core --------------------------------------------------------

    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor that wants one.

        The loss must be a scalar. Traversal visits each recorded op
        exactly once, in reverse topological order.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        order = self._toposort()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None:
                continue
            if node.grad is None:
                continue  # not on a path to the loss
            parent_grads = node._backward(node.grad)
            for parent, g in zip(node._parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                g = np.asarray(g, dtype=parent.data.dtype)
                if g.shape != parent.data.shape:
                    raise AssertionError(
                        f"{node._op}: gradient shape {g.shape} does not match "
                        f"parent shape {parent.data.shape}"
                    )
                parent.grad = g if parent.grad is None else parent.grad + g

    def _toposort(self) -> list["Tensor"]:
        # iterative postorder; ordered record of the executed ops
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        return order


def from_op(
    out_data: np.ndarray,
    parents: Iterable[Tensor],
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
    op: str,
) -> Tensor:
    """Wrap an op result, recording lineage when grad mode is on."""
    parents = tuple(parents)
    if _debug_checks and not np.all(np.isfinite(out_data)):
        raise precision.NumericalError(f"non-finite values in output of {op}")
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.requires_grad = track
    out._parents = parents if track else ()
    out._backward = backward if track else None
    out._op = op if track else "leaf"
    return out


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=precision.dtype()))


# -- elementwise arithmetic (broadcasting, gradients reduce-sum back) ----------


def _add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a.shape, b.shape)
    out = a.data + b.data

    def backward(g):
        return unbroadcast(g, a.data.shape), unbroadcast(g, b.data.shape)

    return from_op(out, (a, b), backward, "add")


def _mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a.shape, b.shape)
    out = a.data * b.data

    def backward(g):
        ga = unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return ga, gb

    return from_op(out, (a, b), backward, "mul")


def _sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a.shape, b.shape)
    out = a.data - b.data

    def backward(g):
        return unbroadcast(g, a.data.shape), unbroadcast(-g, b.data.shape)

    return from_op(out, (a, b), backward, "sub")


def _div(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a.shape, b.shape)
    out = a.data / b.data

    def backward(g):
        ga = unbroadcast(g / b.data, a.data.shape) if a.requires_grad else None
        gb = (
            unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
            if b.requires_grad
            else None
        )
        return ga, gb

    return from_op(out, (a, b), backward, "div")


def _neg(a: Tensor) -> Tensor:
    return from_op(-a.data, (a,), lambda g: (-g,), "neg")


def _matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)
        if b.requires_grad:
            gb = unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)
        return ga, gb

    return from_op(out, (a, b), backward, "matmul")


# -- elementwise math ----------------------------------------------------------


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return from_op(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return from_op(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return from_op(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def power(x: Tensor, exponent: float) -> Tensor:
    """x**p for real p; defined for the nonnegative inputs the losses use."""
    e = float(exponent)
    out = np.power(x.data, e)

    def backward(g):
        return (g * e * np.power(x.data, e - 1.0),)

    return from_op(out, (x,), backward, "power")


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(x.data, lo, hi)
    inside = (x.data > lo) & (x.data < hi)

    def backward(g):
        return (g * inside,)

    return from_op(out, (x,), backward, "clamp")


# -- reductions and shape ops ---------------------------------------------------


def _sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return from_op(np.asarray(out), (x,), backward, "sum")


def _mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = 1
        for ax in axes:
            n *= x.data.shape[ax]
    return _sum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def _reshape(x: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = x.data.reshape(shape)
    return from_op(out, (x,), lambda g: (g.reshape(x.data.shape),), "reshape")


def _transpose(x: Tensor, *axes) -> Tensor:
    if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    axes = tuple(axes)
    inv = np.argsort(axes)
    out = np.transpose(x.data, axes)
    return from_op(out, (x,), lambda g: (np.transpose(g, inv),), "transpose")


# -- wire methods/dunders --------------------------------------------------------

Tensor.__add__ = lambda self, other: _add(self, _coerce(other))
Tensor.__radd__ = lambda self, other: _add(_coerce(other), self)
Tensor.__sub__ = lambda self, other: _sub(self, _coerce(other))
Tensor.__rsub__ = lambda self, other: _sub(_coerce(other), self)
Tensor.__mul__ = lambda self, other: _mul(self, _coerce(other))
Tensor.__rmul__ = lambda self, other: _mul(_coerce(other), self)
Tensor.__truediv__ = lambda self, other: _div(self, _coerce(other))
Tensor.__rtruediv__ = lambda self, other: _div(_coerce(other), self)
Tensor.__neg__ = _neg
Tensor.__matmul__ = lambda self, other: _matmul(self, _coerce(other))
Tensor.__pow__ = lambda self, e: power(self, e)
Tensor.sum = _sum
Tensor.mean = _mean
Tensor.reshape = _reshape
Tensor.transpose = _transpose
