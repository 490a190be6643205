"""Array-valued reverse-mode differentiation on an append-only tape.

Every primitive is available as a module-level function that works on plain
numpy arrays (no recording) and on :class:`Var` nodes (recorded).  Model code
is written once against these functions and runs unchanged for inference and
for gradient computation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.special import expit


class TapeError(Exception):
    """Malformed tape usage: unknown node ids, duplicate leaves, bad loss."""


class NumericError(ArithmeticError):
    """A non-finite adjoint appeared during the backward sweep."""

    def __init__(self, message: str, node_id: int):
        super().__init__(message)
        self.node_id = node_id


class Node:
    """Primitive record.  Constant operands are stored inline in ``consts``
    with a placeholder id of -1 in ``inputs``."""

    __slots__ = ("kind", "inputs", "value", "cache", "requires_grad", "consts")

    def __init__(self, kind, inputs, value, cache=None, requires_grad=True, consts=None):
        self.kind = kind
        self.inputs = inputs
        self.value = value
        self.cache = cache
        self.requires_grad = requires_grad
        self.consts = consts


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)
    leaves: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value, name: str) -> "Var":
        """Register a differentiable parameter leaf; each name only once."""
        if name in self.leaves:
            raise TapeError(f"leaf {name!r} registered twice")
        node_id = self._append(Node("leaf", (), np.asarray(value, dtype=float)))
        self.leaves[name] = node_id
        return Var(self, node_id)

    def constant(self, value) -> "Var":
        node = Node("const", (), np.asarray(value, dtype=float), requires_grad=False)
        return Var(self, self._append(node))

    def record(self, kind: str, inputs: tuple[int, ...], value, cache=None, consts=None) -> int:
        """Append a primitive application and return its node id.

        An input id of -1 refers to the matching entry of ``consts``.
        """
        if kind not in _VJPS:
            raise TapeError(f"unknown primitive {kind!r}")
        n = len(self.nodes)
        nodes = self.nodes
        requires = False
        for k, i in enumerate(inputs):
            if i == -1 and consts is not None and consts[k] is not None:
                continue
            if not 0 <= i < n:
                raise TapeError(f"input node {i} is not on the tape")
            requires = requires or nodes[i].requires_grad
        nodes.append(Node(kind, tuple(inputs), value, cache, requires, consts))
        return n

    def _append(self, node: "Node") -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def backward(self, loss: "Var") -> dict[str, np.ndarray]:
        """Gradients of a scalar node with respect to every registered leaf.

        Leaves the loss does not depend on receive zero arrays.
        """
        if loss.tape is not self:
            raise TapeError("loss node belongs to another tape")
        if np.ndim(loss.value) != 0:
            raise TapeError(f"loss must be scalar, got shape {np.shape(loss.value)}")
        grads: list[np.ndarray | None] = [None] * (loss.id + 1)
        grads[loss.id] = np.ones(())
        nodes = self.nodes
        for nid in range(loss.id, -1, -1):
            g = grads[nid]
            if g is None:
                continue
            node = nodes[nid]
            if not node.inputs or not node.requires_grad:
                continue
            consts = node.consts
            if consts is None:
                needs = [nodes[i].requires_grad for i in node.inputs]
                in_vals = [nodes[i].value for i in node.inputs]
            else:
                needs = [i >= 0 and nodes[i].requires_grad for i in node.inputs]
                in_vals = [nodes[i].value if i >= 0 else c for i, c in zip(node.inputs, consts)]
            parts = _VJPS[node.kind](g, in_vals, node.value, node.cache, needs)
            for i, part in zip(node.inputs, parts):
                if part is None:
                    continue
                grads[i] = part if grads[i] is None else grads[i] + part
        out = {}
        for name, nid in self.leaves.items():
            g = grads[nid] if nid < len(grads) else None
            out[name] = np.zeros_like(nodes[nid].value) if g is None else np.array(g, dtype=float)
        if not all(np.all(np.isfinite(g)) for g in out.values()):
            bad = self._first_nonfinite(grads)
            raise NumericError(f"non-finite adjoint at node {bad} ({nodes[bad].kind})", bad)
        return out

    @staticmethod
    def _first_nonfinite(grads) -> int:
        # the sweep runs from the loss downwards, so the highest id broke first
        for nid in range(len(grads) - 1, -1, -1):
            g = grads[nid]
            if g is not None and not np.all(np.isfinite(g)):
                return nid
        return len(grads) - 1


class Var:
    """Handle to a tape node; supports arithmetic operators."""

    __slots__ = ("tape", "id")
    __array_ufunc__ = None

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.id].value

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.shape})"

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
        return scale(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)


# --------------------------------------------------------------------------
# dispatch helpers

def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x)


def _tape_of(*args) -> Tape | None:
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None




def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


_VJPS: dict[str, Callable] = {}


def register_primitive(kind: str, vjp: Callable) -> None:
    """Make a custom primitive known to the tape.

    ``vjp(g, input_values, output_value, cache, needs)`` returns one gradient
    (or ``None``) per input.
    """
    _VJPS[kind] = vjp


def apply(kind: str, inputs: tuple, value, cache=None):
    """Record ``kind`` if any input is a Var, otherwise return ``value``."""
    tape = _tape_of(*inputs)
    if tape is None:
        return value
    ids = []
    consts = None
    for k, x in enumerate(inputs):
        if isinstance(x, Var):
            if x.tape is not tape:
                raise TapeError("operands live on different tapes")
            ids.append(x.id)
        else:
            if consts is None:
                consts = [None] * len(inputs)
            consts[k] = np.asarray(x, dtype=float)
            ids.append(-1)
    return Var(tape, tape.record(kind, tuple(ids), value, cache, consts))


# --------------------------------------------------------------------------
# primitives

def add(a, b):
    return apply("add", (a, b), value_of(a) + value_of(b))


def sub(a, b):
    return apply("sub", (a, b), value_of(a) - value_of(b))


def mul(a, b):
    if np.isscalar(b) and not isinstance(a, (int, float)):
        return scale(a, float(b))
    if np.isscalar(a):
        return scale(b, float(a))
    return apply("mul", (a, b), value_of(a) * value_of(b))


def scale(a, c: float):
    return apply("scale", (a,), c * value_of(a), cache=c)


def matvec(W, x):
    """Apply ``W`` (m x n) to the trailing axis of ``x`` (..., n) -> (..., m)."""
    return apply("matvec", (W, x), value_of(x) @ value_of(W).T)


def sigmoid(a):
    return apply("sigmoid", (a,), expit(value_of(a)))


def tanh(a):
    return apply("tanh", (a,), np.tanh(value_of(a)))


def square(a):
    return apply("square", (a,), np.square(value_of(a)))


def sum(a, axis=None):  # noqa: A001 - mirrors numpy
    return apply("sum", (a,), np.sum(value_of(a), axis=axis), cache=axis)


def mean(a, axis=None):
    v = value_of(a)
    n = v.size if axis is None else np.prod([v.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis), 1.0 / float(n))


def reshape(a, shape):
    return apply("reshape", (a,), np.reshape(value_of(a), shape))


def transpose(a, axes):
    return apply("transpose", (a,), np.transpose(value_of(a), axes), cache=tuple(axes))


def getitem(a, index):
    return apply("getitem", (a,), value_of(a)[index], cache=index)


# --------------------------------------------------------------------------
# vector-Jacobian products

def _vjp_add(g, vals, out, cache, needs):
    return [_unbroadcast(g, np.shape(v)) if n else None for v, n in zip(vals, needs)]


def _vjp_sub(g, vals, out, cache, needs):
    return [
        _unbroadcast(g, np.shape(vals[0])) if needs[0] else None,
        _unbroadcast(-g, np.shape(vals[1])) if needs[1] else None,
    ]


def _vjp_mul(g, vals, out, cache, needs):
    a, b = vals
    return [
        _unbroadcast(g * b, np.shape(a)) if needs[0] else None,
        _unbroadcast(g * a, np.shape(b)) if needs[1] else None,
    ]


def _vjp_scale(g, vals, out, c, needs):
    return [c * g]


def _vjp_matvec(g, vals, out, cache, needs):
    W, x = vals
    gW = gx = None
    if needs[0]:
        gW = g.reshape(-1, g.shape[-1]).T @ x.reshape(-1, x.shape[-1])
    if needs[1]:
        gx = g @ W
    return [gW, gx]


def _vjp_sigmoid(g, vals, out, cache, needs):
    return [g * out * (1.0 - out)]


def _vjp_tanh(g, vals, out, cache, needs):
    return [g * (1.0 - out * out)]


def _vjp_square(g, vals, out, cache, needs):
    return [2.0 * g * vals[0]]


def _vjp_sum(g, vals, out, axis, needs):
    shape = np.shape(vals[0])
    if axis is not None:
        g = np.expand_dims(g, axis)
    return [np.broadcast_to(g, shape).copy()]


def _vjp_reshape(g, vals, out, cache, needs):
    return [np.reshape(g, np.shape(vals[0]))]


def _vjp_transpose(g, vals, out, axes, needs):
    return [np.transpose(g, np.argsort(axes))]


def _vjp_getitem(g, vals, out, index, needs):
    full = np.zeros_like(vals[0])
    if _is_basic(index):
        full[index] = g
    else:
        np.add.at(full, index, g)
    return [full]


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, slice, type(Ellipsis))) or p is None for p in parts)


for _kind, _fn in {
    "add": _vjp_add,
    "sub": _vjp_sub,
    "mul": _vjp_mul,
    "scale": _vjp_scale,
    "matvec": _vjp_matvec,
    "sigmoid": _vjp_sigmoid,
    "tanh": _vjp_tanh,
    "square": _vjp_square,
    "sum": _vjp_sum,
    "reshape": _vjp_reshape,
    "transpose": _vjp_transpose,
    "getitem": _vjp_getitem,
}.items():
    register_primitive(_kind, _fn)
