"""Tape-based reverse-mode differentiation over numpy arrays.

Every backward rule is itself written with the differentiable operations in
this module, so a gradient computed with ``create_graph=True`` can be
differentiated again (this is how exact Hessian-vector products are formed).

The operation functions (``tanh``, ``matmul``, ``logsumexp`` ...) accept plain
``np.ndarray`` inputs too and then return plain arrays without recording
anything, which lets model code be written once and run either on the tape
or as a cheap numpy forward pass.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

_state = {"record": True}


@contextmanager
def recording(enabled: bool) -> Iterator[None]:
    """Enable or disable graph recording inside the block."""
    previous = _state["record"]
    _state["record"] = enabled
    try:
        yield
    finally:
        _state["record"] = previous


def no_grad():
    return recording(False)


BackwardFn = Callable[["Tensor"], Sequence["Tensor | None"]]


class Tensor:
    """An ndarray value with an optional link into the computation graph."""

    __slots__ = ("value", "parents", "backward_fn", "requires_grad", "__weakref__")
    __array_priority__ = 1000.0

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: BackwardFn | None = None
        self.requires_grad = requires_grad

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.value)

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.value!r}{flag})"

    def __len__(self) -> int:
        return len(self.value)

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    out = Tensor(value)
    if _state["record"] and any(p.requires_grad for p in parents):
        out.parents = tuple(parents)
        out.backward_fn = backward
        out.requires_grad = True
    return out


# -- shape helpers -------------------------------------------------------
def sum_to(x, shape: tuple[int, ...]):
    """Sum ``x`` down to ``shape`` (the adjoint of broadcasting)."""
    xshape = x.shape
    if xshape == tuple(shape):
        return x
    lead = len(xshape) - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, n in enumerate(shape) if n == 1 and xshape[i + lead] != 1
    )
    out = tsum(x, axis=axes, keepdims=True)
    if lead:
        out = reshape(out, tuple(shape))
    return out


def broadcast_to(x, shape: tuple[int, ...]):
    shape = tuple(shape)
    if not _is_tensor(x):
        return np.broadcast_to(x, shape)
    if x.shape == shape:
        return x
    src = x.shape
    return _node(np.broadcast_to(x.value, shape).copy(), (x,), lambda g: (sum_to(g, src),))


def reshape(x, shape):
    if not _is_tensor(x):
        return np.reshape(x, shape)
    src = x.shape
    return _node(x.value.reshape(shape), (x,), lambda g: (reshape(g, src),))


def swapaxes(x, a: int = -1, b: int = -2):
    if not _is_tensor(x):
        return np.swapaxes(x, a, b)
    return _node(np.swapaxes(x.value, a, b), (x,), lambda g: (swapaxes(g, a, b),))


def transpose(x):
    if not _is_tensor(x):
        return np.transpose(x)
    return _node(np.transpose(x.value), (x,), lambda g: (transpose(g),))


# -- elementwise arithmetic ---------------------------------------------
def add(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.add(a, b)
    a, b = _lift(a), _lift(b)
    sa, sb = a.shape, b.shape
    return _node(a.value + b.value, (a, b), lambda g: (sum_to(g, sa), sum_to(g, sb)))


def sub(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.subtract(a, b)
    a, b = _lift(a), _lift(b)
    sa, sb = a.shape, b.shape
    return _node(a.value - b.value, (a, b), lambda g: (sum_to(g, sa), sum_to(neg(g), sb)))


def neg(a):
    if not _is_tensor(a):
        return np.negative(a)
    return _node(-a.value, (a,), lambda g: (neg(g),))


def mul(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.multiply(a, b)
    a, b = _lift(a), _lift(b)
    sa, sb = a.shape, b.shape
    return _node(
        a.value * b.value,
        (a, b),
        lambda g: (sum_to(mul(g, b), sa), sum_to(mul(g, a), sb)),
    )


def div(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.divide(a, b)
    a, b = _lift(a), _lift(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        ga = div(g, b)
        return sum_to(ga, sa), sum_to(neg(mul(ga, div(a, b))), sb)

    return _node(a.value / b.value, (a, b), backward)


def power(a, exponent: float):
    if not _is_tensor(a):
        return np.power(a, exponent)
    if exponent == 1:
        return a
    return _node(
        a.value**exponent,
        (a,),
        lambda g: (mul(g, mul(exponent, power(a, exponent - 1))),),
    )


# -- nonlinearities ------------------------------------------------------
def _sigmoid_np(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def tanh(x):
    if not _is_tensor(x):
        return np.tanh(x)
    out = _node(np.tanh(x.value), (x,), None)
    if out.requires_grad:
        out.backward_fn = lambda g: (mul(g, sub(1.0, mul(out, out))),)
    return out


def sigmoid(x):
    if not _is_tensor(x):
        return _sigmoid_np(x)
    out = _node(_sigmoid_np(x.value), (x,), None)
    if out.requires_grad:
        out.backward_fn = lambda g: (mul(g, mul(out, sub(1.0, out))),)
    return out


def exp(x):
    if not _is_tensor(x):
        return np.exp(x)
    out = _node(np.exp(x.value), (x,), None)
    if out.requires_grad:
        out.backward_fn = lambda g: (mul(g, out),)
    return out


def log(x):
    if not _is_tensor(x):
        return np.log(x)
    return _node(np.log(x.value), (x,), lambda g: (div(g, x),))


# -- reductions ------------------------------------------------------------
def _normalize_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _expand(g, axes: tuple[int, ...], keepdims: bool, ndim: int):
    if keepdims or not axes:
        return g
    shape = list(g.shape)
    for a in sorted(axes):
        shape.insert(a, 1)
    return reshape(g, tuple(shape))


def tsum(x, axis=None, keepdims: bool = False):
    if not _is_tensor(x):
        return np.sum(x, axis=axis, keepdims=keepdims)
    axes = _normalize_axes(axis, x.ndim)
    src = x.shape
    return _node(
        np.sum(x.value, axis=axes, keepdims=keepdims),
        (x,),
        lambda g: (broadcast_to(_expand(g, axes, keepdims, len(src)), src),),
    )


def mean(x, axis=None, keepdims: bool = False):
    shape = x.shape
    axes = _normalize_axes(axis, len(shape))
    count = int(np.prod([shape[a] for a in axes])) if axes else 1
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def logsumexp(x, axis=-1, keepdims: bool = False):
    """Numerically stable ``log(sum(exp(x)))`` along one axis."""
    raw = x.value if _is_tensor(x) else np.asarray(x, dtype=np.float64)
    m = np.max(raw, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    value = np.log(np.sum(np.exp(raw - m), axis=axis, keepdims=True)) + m
    if not keepdims:
        value = np.squeeze(value, axis=axis)
    if not _is_tensor(x):
        return value
    axes = _normalize_axes(axis, x.ndim)
    out = _node(value, (x,), None)
    if out.requires_grad:

        def backward(g):
            full = _expand(out, axes, keepdims, x.ndim)
            probs = exp(sub(x, full))
            return (mul(_expand(g, axes, keepdims, x.ndim), probs),)

        out.backward_fn = backward
    return out


def softmax(x, axis=-1):
    return exp(sub(x, logsumexp(x, axis=axis, keepdims=True)))


# -- linear algebra --------------------------------------------------------
def matmul(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.matmul(a, b)
    a, b = _lift(a), _lift(b)
    value = np.matmul(a.value, b.value)
    sa, sb = a.shape, b.shape

    def backward(g):
        a2 = reshape(a, (1,) + sa) if len(sa) == 1 else a
        b2 = reshape(b, sb + (1,)) if len(sb) == 1 else b
        g2 = reshape(g, np.matmul(a2.value, b2.value).shape)
        ga = sum_to(matmul(g2, swapaxes(b2)), a2.shape)
        gb = sum_to(matmul(swapaxes(a2), g2), b2.shape)
        return reshape(ga, sa), reshape(gb, sb)

    return _node(value, (a, b), backward)


def dot(a, b):
    return matmul(a, b)


def outer(a, b):
    return mul(reshape(a, (-1, 1)), reshape(b, (1, -1)))


# -- indexing and assembly ---------------------------------------------------
def getitem(x, index):
    if not _is_tensor(x):
        return x[index]
    src = x.shape
    return _node(x.value[index], (x,), lambda g: (scatter(g, index, src),))


def scatter(g, index, shape: tuple[int, ...]):
    """Adjoint of ``getitem``: place ``g`` at ``index`` inside zeros(shape)."""
    out = np.zeros(shape)
    np.add.at(out, index, g.value if _is_tensor(g) else g)
    if not _is_tensor(g):
        return out
    return _node(out, (g,), lambda h: (getitem(h, index),))


def concatenate(parts: Sequence, axis: int = 0):
    if not any(_is_tensor(p) for p in parts):
        return np.concatenate(parts, axis=axis)
    parts = [_lift(p) for p in parts]
    value = np.concatenate([p.value for p in parts], axis=axis)
    ax = axis % value.ndim
    bounds = np.cumsum([0] + [p.shape[ax] for p in parts])

    def backward(g):
        lead = (slice(None),) * ax
        return tuple(getitem(g, lead + (slice(lo, hi),)) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _node(value, parts, backward)


def stack(parts: Sequence, axis: int = 0):
    if not any(_is_tensor(p) for p in parts):
        return np.stack(parts, axis=axis)
    parts = [_lift(p) for p in parts]
    value = np.stack([p.value for p in parts], axis=axis)
    ax = axis % value.ndim

    def backward(g):
        lead = (slice(None),) * ax
        return tuple(getitem(g, lead + (i,)) for i in range(len(parts)))

    return _node(value, parts, backward)


def value_of(x) -> np.ndarray:
    return x.value if _is_tensor(x) else np.asarray(x)


# -- reverse sweep -----------------------------------------------------------
def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack_.append((parent, False))
    return order


def gradients(
    output: Tensor,
    inputs: Sequence[Tensor],
    grad_output=None,
    create_graph: bool = False,
) -> list[Tensor]:
    """Vector-Jacobian product of ``output`` with respect to ``inputs``.

    With ``create_graph`` the returned gradients are themselves recorded on
    the tape and can be differentiated again.
    """
    seed = Tensor(np.ones(output.shape) if grad_output is None else value_of(grad_output))
    if isinstance(grad_output, Tensor):
        seed = grad_output
    grads: dict[int, Tensor] = {}
    keep = {id(x) for x in inputs}
    if output.requires_grad:
        grads[id(output)] = seed
        with recording(create_graph):
            for node in reversed(_topological(output)):
                if node.backward_fn is None:
                    continue
                g = grads.get(id(node)) if id(node) in keep else grads.pop(id(node), None)
                if g is None:
                    continue
                for parent, pg in zip(node.parents, node.backward_fn(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    prev = grads.get(id(parent))
                    grads[id(parent)] = pg if prev is None else add(prev, pg)
    result = []
    for x in inputs:
        g = grads.get(id(x))
        if g is None:
            g = Tensor(np.zeros(x.shape))
        elif not create_graph:
            g = Tensor(g.value)
        result.append(g)
    return result


sum = tsum  # noqa: A001  numpy-style alias
