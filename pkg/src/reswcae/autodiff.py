"""A small define-by-run reverse-mode autodiff over numpy arrays.

Each op builds its output :class:`Tensor` together with a closure mapping the
upstream gradient to gradients for its parents. :func:`backward` walks the
recorded graph in reverse topological order. Leaf gradients accumulate
additively into ``Tensor.grad``; callers zero them between steps.

Broadcasting is deliberately narrow: binary ops accept equal shapes, or a
scalar (size-1, 0-d) operand on either side.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np
from scipy.special import expit


class ContractError(ValueError):
    """An operation was called outside its documented preconditions."""


class DimensionError(ValueError):
    """Array shapes are incompatible with the requested operation."""


_state = threading.local()


def grad_enabled():
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Run a block without recording graph nodes."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    @classmethod
    def _node(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        needs = grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        out._parents = tuple(parents) if needs else ()
        out._backward = backward if needs else None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self):
        return reduce("sum", self)

    def mean(self):
        return reduce("mean", self)

    def backward(self):
        backward(self)


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _is_scalar(t):
    return t.data.ndim == 0


def _binary_operands(a, b):
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise ContractError("at least one operand must be a Tensor")
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _fit(g, shape):
    # gradient of a broadcast scalar operand is the full sum
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=g.dtype).reshape(shape)


def add(a, b):
    a, b = _binary_operands(a, b)

    def bw(g):
        return _fit(g, a.shape), _fit(g, b.shape)

    return Tensor._node(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = _binary_operands(a, b)

    def bw(g):
        return _fit(g, a.shape), _fit(-g, b.shape)

    return Tensor._node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a, b = _binary_operands(a, b)

    def bw(g):
        return _fit(g * b.data, a.shape), _fit(g * a.data, b.shape)

    return Tensor._node(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = _binary_operands(a, b)
    out = a.data / b.data

    def bw(g):
        ga = g / b.data
        return _fit(ga, a.shape), _fit(-ga * out, b.shape)

    return Tensor._node(out, (a, b), bw, "div")


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    out = np.where(mask, a.data, 0).astype(a.dtype, copy=False)
    return Tensor._node(out, (a,), lambda g: (g * mask,), "relu")


def sigmoid(a):
    a = as_tensor(a)
    out = expit(a.data)
    return Tensor._node(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def log(a):
    a = as_tensor(a)
    return Tensor._node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def square(a):
    a = as_tensor(a)
    return Tensor._node(a.data * a.data, (a,), lambda g: (2 * g * a.data,), "square")


_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}
_UNARY = {"relu": relu, "sigmoid": sigmoid, "log": log, "square": square}


def elementwise(op_kind, a, b=None):
    """Dispatch an elementwise op by name (``add``, ``relu``, ...)."""
    if op_kind in _BINARY:
        if b is None:
            raise ContractError(f"{op_kind} needs two operands")
        return _BINARY[op_kind](a, b)
    if op_kind in _UNARY:
        if b is not None:
            raise ContractError(f"{op_kind} is unary")
        return _UNARY[op_kind](a)
    raise ContractError(f"unknown elementwise op {op_kind!r}")


def reduce(op_kind, a):
    a = as_tensor(a)
    if a.size == 0:
        raise ContractError("cannot reduce an empty tensor")
    if op_kind == "sum":
        scale = 1.0
    elif op_kind == "mean":
        scale = 1.0 / a.size
    else:
        raise ContractError(f"unknown reduction {op_kind!r}")
    out = np.asarray(a.data.sum() * scale, dtype=a.dtype)

    def bw(g):
        return (np.full(a.shape, g * scale, dtype=a.dtype),)

    return Tensor._node(out, (a,), bw, op_kind)


def sum(a):  # noqa: A001 - mirrors numpy naming
    return reduce("sum", a)


def mean(a):
    return reduce("mean", a)


def matmul(a, b):
    """2D matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul shapes {a.shape} @ {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._node(a.data @ b.data, (a, b), bw, "matmul")


def reshape(a, shape):
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return Tensor._node(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def getitem(a, index):
    a = as_tensor(a)

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (int, np.integer, slice)) for p in parts)

    def bw(g):
        full = np.zeros(a.shape, dtype=a.dtype)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor._node(a.data[index], (a,), bw, "getitem")


def add_bias(x, bias):
    """Add a per-channel bias to ``(N, C, ...)`` or ``(N, C)`` activations."""
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.ndim != 1 or x.ndim < 2 or x.shape[1] != bias.shape[0]:
        raise ContractError(f"bias {bias.shape} does not match activations {x.shape}")
    view = (1, -1) + (1,) * (x.ndim - 2)
    axes = (0,) + tuple(range(2, x.ndim))

    def bw(g):
        return g, g.sum(axis=axes)

    return Tensor._node(x.data + bias.data.reshape(view), (x, bias), bw, "add_bias")


def _topological(root):
    order = []
    seen = set()
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
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every leaf that ``loss`` depends on."""
    if not isinstance(loss, Tensor):
        raise ContractError("backward needs a Tensor")
    if loss.size != 1 or loss.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any tensor requiring grad")

    grads = {id(loss): np.ones((), dtype=loss.dtype)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
