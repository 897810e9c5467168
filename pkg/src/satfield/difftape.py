"""Reverse-mode differentiation on a Wengert tape of numpy array operations.

Every operation appends a node holding its forward value and a closure that
pushes the output gradient into its inputs. ``Tape.backward`` replays the
nodes in reverse recording order, which is a valid reverse topological order
because a node can only consume nodes recorded before it.

Parameters live outside the tape (``Parameter``); gradients accumulate into
``Parameter.grad`` with ``+=`` and must be cleared explicitly with
``zero_grad`` between optimizer steps.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit


class NumericError(FloatingPointError):
    """Raised when a non-finite value shows up on the tape."""

    def __init__(self, node_name: str, message: str | None = None):
        self.node_name = node_name
        super().__init__(message or f"non-finite value produced at node '{node_name}'")


class Parameter:
    """Named learnable array with an accumulating gradient buffer."""

    def __init__(self, name: str, value: np.ndarray, group: str = "tensor"):
        self.name = name
        self.value = np.asarray(value)
        self.group = group
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def astype(self, dtype):
        self.value = self.value.astype(dtype)
        self.grad = np.zeros_like(self.value)
        return self

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape}, group={self.group!r})"


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """A value recorded on a tape."""

    __array_priority__ = 1000
    _frozen = False

    def __init__(self, tape: "Tape", value: np.ndarray, parents: Sequence["Var"] = (),
                 backward: Callable[[np.ndarray], None] | None = None, name: str = ""):
        self.tape = tape
        self.value = value
        self.parents = tuple(parents)
        self._backward = backward
        self.name = name
        self.grad: np.ndarray | None = None

    # numpy-like conveniences
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var({self.name or 'anon'}, shape={self.value.shape})"

    def _accumulate(self, g: np.ndarray):
        if self._frozen:
            return
        # gradients are never modified in place, so the first one can be kept
        # without a copy
        if self.grad is None:
            self.grad = np.asarray(g).astype(self.value.dtype, copy=False)
        else:
            self.grad = self.grad + g

    # arithmetic
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return vmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Tape:
    """Records operations and replays them backwards.

    ``check_finite`` makes every recorded op verify its output; the first
    offending node raises ``NumericError`` carrying the node name.
    ``track_branches`` keeps the branch masks of piecewise ops (relu, abs,
    clipping) so finite-difference checks can tell when a step crossed a kink.
    """

    def __init__(self, check_finite: bool = True, dtype=np.float64, track_branches: bool = False):
        self.nodes: list[Var] = []
        self.check_finite = check_finite
        self.dtype = np.dtype(dtype)
        self.branches: list[np.ndarray] | None = [] if track_branches else None

    def note_branch(self, mask):
        if self.branches is not None:
            self.branches.append(np.asarray(mask).copy())

    def branch_signature(self) -> bytes:
        if self.branches is None:
            return b""
        return b"|".join(np.packbits(m.ravel()).tobytes() for m in self.branches)

    def record(self, value, parents=(), backward=None, name=""):
        value = np.asarray(value)
        if self.check_finite and value.dtype.kind == "f" and not np.isfinite(value).all():
            raise NumericError(name or f"node{len(self.nodes)}")
        var = Var(self, value, parents, backward, name)
        self.nodes.append(var)
        return var

    def constant(self, value, name: str = "const") -> Var:
        var = self.record(np.asarray(value, dtype=self.dtype), name=name)
        var._frozen = True
        return var

    def param(self, p: Parameter) -> Var:
        """Leaf node whose gradient flows into ``p.grad``."""

        def backward(g):
            p.grad += g.astype(p.grad.dtype, copy=False)

        var = self.record(p.value, (), None, name=p.name)
        var._backward = backward
        var._is_leaf_param = True
        return var

    def backward(self, root: Var, seed: np.ndarray | float = 1.0):
        if root.tape is not self:
            raise ValueError("root was recorded on a different tape")
        root.grad = np.broadcast_to(np.asarray(seed, dtype=root.value.dtype), root.value.shape).copy()
        stop = self.nodes.index(root)
        for node in reversed(self.nodes[: stop + 1]):
            if node.grad is None or node._backward is None:
                continue
            if self.check_finite and not np.isfinite(node.grad).all():
                raise NumericError(node.name or "anon", f"non-finite gradient at node '{node.name}'")
            node._backward(node.grad)

    def release(self):
        """Drop the recorded graph so its buffers are freed without waiting for gc."""
        for node in self.nodes:
            node._backward = None
            node.parents = ()
        self.nodes = []
        if self.branches is not None:
            self.branches = []


def tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def asvar(x, tape: Tape) -> Var:
    if isinstance(x, Var):
        return x
    return tape.constant(x)


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


def lift(*xs):
    """Put array inputs on a tape.

    Reuses the tape of any ``Var`` argument; otherwise opens a throwaway tape
    and reports ``plain=True`` so callers can hand back plain arrays.
    """
    tape = tape_of(*xs)
    plain = tape is None
    if plain:
        dtype = np.result_type(*[np.asarray(x).dtype for x in xs], np.float64)
        tape = Tape(check_finite=False, dtype=dtype)
    out = [x if isinstance(x, Var) else tape.constant(np.asarray(x, dtype=tape.dtype)) for x in xs]
    return tape, out, plain


def unlift(x, plain):
    if not plain:
        return x
    v = x.value
    return float(v) if v.ndim == 0 else v


def _binary(a, b):
    tape = tape_of(a, b)
    return tape, asvar(a, tape), asvar(b, tape)


def add(a, b) -> Var:
    tape, a, b = _binary(a, b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return tape.record(a.value + b.value, (a, b), backward, "add")


def sub(a, b) -> Var:
    tape, a, b = _binary(a, b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return tape.record(a.value - b.value, (a, b), backward, "sub")


def mul(a, b) -> Var:
    tape, a, b = _binary(a, b)

    def backward(g):
        a._accumulate(_unbroadcast(g * b.value, a.shape))
        b._accumulate(_unbroadcast(g * a.value, b.shape))

    return tape.record(a.value * b.value, (a, b), backward, "mul")


def div(a, b) -> Var:
    tape, a, b = _binary(a, b)
    out = a.value / b.value

    def backward(g):
        a._accumulate(_unbroadcast(g / b.value, a.shape))
        b._accumulate(_unbroadcast(-g * out / b.value, b.shape))

    return tape.record(out, (a, b), backward, "div")


def matmul(a, b) -> Var:
    tape, a, b = _binary(a, b)

    def backward(g):
        a._accumulate(g @ b.value.T)
        b._accumulate(a.value.T @ g)

    return tape.record(a.value @ b.value, (a, b), backward, "matmul")


def linear(x: Var, w: Var, b: Var, name: str = "linear") -> Var:
    """``x @ w + b`` fused into one node."""

    def backward(g):
        x._accumulate(g @ w.value.T)
        w._accumulate(x.value.T @ g)
        b._accumulate(g.sum(axis=0))

    return x.tape.record(x.value @ w.value + b.value, (x, w, b), backward, name)


def vsum(x: Var, axis=None, keepdims=False) -> Var:
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, shape))

    return x.tape.record(x.value.sum(axis=axis, keepdims=keepdims), (x,), backward, "sum")


def vmean(x: Var, axis=None, keepdims=False) -> Var:
    n = x.value.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(vsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Var, shape) -> Var:
    old = x.shape

    def backward(g):
        x._accumulate(g.reshape(old))

    return x.tape.record(x.value.reshape(shape), (x,), backward, "reshape")


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, type(Ellipsis), type(None))) for i in parts)


def getitem(x: Var, index) -> Var:
    basic = _is_basic(index)

    def backward(g):
        full = np.zeros_like(x.value)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        x._accumulate(full)

    return x.tape.record(x.value[index], (x,), backward, "getitem")


def take_rows(x: Var, rows: np.ndarray) -> Var:
    """Gather rows along axis 0 (duplicates allowed)."""

    def backward(g):
        full = np.zeros_like(x.value)
        np.add.at(full, rows, g)
        x._accumulate(full)

    return x.tape.record(x.value[rows], (x,), backward, "take_rows")


def scatter_rows(x: Var, rows: np.ndarray, n: int) -> Var:
    """Place rows of ``x`` at positions ``rows`` of a zero array with ``n`` rows.

    ``rows`` must be unique.
    """
    out = np.zeros((n,) + x.shape[1:], dtype=x.value.dtype)
    out[rows] = x.value

    def backward(g):
        x._accumulate(g[rows])

    return x.tape.record(out, (x,), backward, "scatter_rows")


def concat(xs: Sequence[Var], axis: int = -1) -> Var:
    tape = tape_of(*xs)
    xs = [asvar(x, tape) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for x, part in zip(xs, np.split(g, splits, axis=axis)):
            x._accumulate(part)

    return tape.record(np.concatenate([x.value for x in xs], axis=axis), xs, backward, "concat")


def stack_mean(xs: Sequence[Var]) -> Var:
    """Element-wise mean of equally shaped nodes."""
    tape = tape_of(*xs)
    n = len(xs)
    out = sum(x.value for x in xs) / n

    def backward(g):
        for x in xs:
            x._accumulate(g / n)

    return tape.record(out, xs, backward, "stack_mean")


def exp(x: Var) -> Var:
    out = np.exp(x.value)

    def backward(g):
        x._accumulate(g * out)

    return x.tape.record(out, (x,), backward, "exp")


def log(x: Var) -> Var:
    def backward(g):
        x._accumulate(g / x.value)

    return x.tape.record(np.log(x.value), (x,), backward, "log")


def square(x: Var) -> Var:
    def backward(g):
        x._accumulate(2.0 * g * x.value)

    return x.tape.record(x.value * x.value, (x,), backward, "square")


def sigmoid(x: Var) -> Var:
    out = np_sigmoid(x.value)

    def backward(g):
        x._accumulate(g * out * (1.0 - out))

    return x.tape.record(out, (x,), backward, "sigmoid")


def softplus(x: Var) -> Var:
    def backward(g):
        x._accumulate(g * np_sigmoid(x.value))

    return x.tape.record(np_softplus(x.value), (x,), backward, "softplus")


def relu(x: Var) -> Var:
    mask = x.value > 0
    x.tape.note_branch(mask)

    def backward(g):
        x._accumulate(g * mask)

    return x.tape.record(np.maximum(x.value, 0), (x,), backward, "relu")


def absolute(x: Var) -> Var:
    x.tape.note_branch(x.value > 0)

    def backward(g):
        x._accumulate(g * np.sign(x.value))

    return x.tape.record(np.abs(x.value), (x,), backward, "abs")


def exclusive_cumsum(x: Var, axis: int = -1) -> Var:
    """``out[..., i] = sum_{j<i} x[..., j]`` along ``axis``."""
    inclusive = np.cumsum(x.value, axis=axis)
    out = np.zeros_like(inclusive)
    src = [slice(None)] * out.ndim
    dst = [slice(None)] * out.ndim
    src[axis], dst[axis] = slice(None, -1), slice(1, None)
    out[tuple(dst)] = inclusive[tuple(src)]

    def backward(g):
        # reverse cumulative sum of g, shifted by one
        rev = np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis)
        x._accumulate(rev - g)

    return x.tape.record(out, (x,), backward, "exclusive_cumsum")


def normalize_rows(x: Var, eps: float = 1e-8, fallback=(0.0, 0.0, 1.0)):
    """Unit-normalize the last axis; rows shorter than ``eps`` get ``fallback``.

    Returns the normalized node and a boolean mask of fallback rows.
    """
    v = x.value
    norm = np.sqrt((v * v).sum(axis=-1, keepdims=True))
    bad = norm[..., 0] < eps
    x.tape.note_branch(bad)
    safe = np.where(norm < eps, 1.0, norm)
    out = v / safe
    if bad.any():
        out = out.copy()
        out[bad] = np.asarray(fallback, dtype=v.dtype)

    def backward(g):
        u = v / safe
        gx = (g - u * (g * u).sum(axis=-1, keepdims=True)) / safe
        gx[bad] = 0.0
        x._accumulate(gx)

    return x.tape.record(out, (x,), backward, "normalize"), bad


def np_sigmoid(x):
    x = np.asarray(x)
    return expit(x if x.dtype.kind == "f" else x.astype(float))


def np_softplus(x):
    x = np.asarray(x)
    return np.logaddexp(0.0, x).astype(x.dtype if x.dtype.kind == "f" else float)


def zero_grad(params: Iterable[Parameter]):
    for p in params:
        p.zero_grad()


def finite_difference(f: Callable[[], float], param: Parameter, index, eps: float = 1e-4) -> float:
    """Central difference ``(f(θ+ε) − f(θ−ε)) / 2ε`` for one parameter entry.

    ``f`` re-evaluates the scalar objective from the current parameter values;
    the entry is restored afterwards.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    old = param.value[index].copy() if isinstance(param.value[index], np.ndarray) else param.value[index]
    try:
        param.value[index] = old + eps
        f_plus = float(f())
        param.value[index] = old - eps
        f_minus = float(f())
    finally:
        param.value[index] = old
    return (f_plus - f_minus) / (2.0 * eps)
