"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations performed while a :class:`Tape` is active are recorded in
execution order, which is already a topological order of the computation.
``backward`` replays the recorded rules in reverse.  Outside a tape, the
same functions compute plain values and nothing is recorded.

Broadcasting is deliberately limited to scalar-with-tensor and equal
shapes.  Layer-level patterns that need more (bias rows, batch statistics,
row-wise softmax) are provided as fused operations with their own rules.

Example::

    x = Tensor([3.0], requires_grad=True)
    with Tape():
        loss = (x * x).sum()
        backward(loss)
    x.grad  # array([6.])
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, DomainError

__all__ = [
    "Tensor", "Tape", "backward", "active_tape",
    "add", "sub", "mul", "div", "neg", "log", "exp", "sigmoid",
    "leaky_relu", "min_clamp", "xlogx", "reduce_sum", "reduce_mean",
    "matmul", "affine", "batch_norm", "softmax", "normalize_rows",
    "take_rows", "sum_squares", "concat_rows", "slice_rows", "detach",
    "elementwise", "reduce",
]

_TAPES: list["Tape"] = []

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def active_tape() -> Optional["Tape"]:
    return _TAPES[-1] if _TAPES else None


class _Record:
    __slots__ = ("inputs", "output", "rule")

    def __init__(self, inputs, output, rule):
        self.inputs = inputs
        self.output = output
        self.rule = rule


class Tape:
    """Ordered log of differentiable operations.

    Use as a context manager; tapes nest and the innermost one records.
    Leaves created with ``requires_grad=True`` inside the context are
    registered so that ``backward`` can give them zero gradients even when
    the loss does not depend on them.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self.leaves: list[Tensor] = []
        self._next_id = 0

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def _issue_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    def _register_leaf(self, t: "Tensor") -> None:
        t.node_id = self._issue_id()
        t._tape = self
        self.leaves.append(t)

    def _record(self, inputs, output, rule) -> None:
        output.node_id = self._issue_id()
        output._tape = self
        output._op_index = len(self.records)
        self.records.append(_Record(inputs, output, rule))

    def backward(self, loss: "Tensor") -> None:
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is self and loss._op_index is not None:
            pending = {loss.node_id: np.ones_like(loss.data)}
            for rec in reversed(self.records[: loss._op_index + 1]):
                g = pending.pop(rec.output.node_id, None)
                if g is None:
                    continue
                out = rec.output
                out.grad = g.copy() if out.grad is None else out.grad + g
                for t, gi in zip(rec.inputs, rec.rule(g)):
                    if gi is None or not t.requires_grad:
                        continue
                    if t._tape is self and t._op_index is not None:
                        prev = pending.get(t.node_id)
                        pending[t.node_id] = gi if prev is None else prev + gi
                    else:
                        t.grad = np.array(gi, dtype=np.float64) if t.grad is None else t.grad + gi
        for leaf in self.leaves:
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)


def backward(loss: "Tensor") -> None:
    """Populate ``grad`` on every requires-grad tensor the loss depends on.

    Gradients accumulate across calls; reset them with ``zero_grad``.
    """
    tape = loss._tape if loss._op_index is not None else active_tape()
    if tape is None:
        raise ContractError("loss was not recorded on a tape and no tape is active")
    tape.backward(loss)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id", "_tape", "_op_index", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self._tape: Optional[Tape] = None
        self._op_index: Optional[int] = None
        self.name = name
        if requires_grad and _TAPES:
            _TAPES[-1]._register_leaf(self)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __float__(self) -> float:
        return self.item()

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=4)}{flag})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis)

    def log(self):
        return log(self)

    def exp(self):
        return exp(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, inputs: tuple, rule: BackwardFn) -> Tensor:
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._record(inputs, out, rule)
    return out


def _check_pair(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(
            f"{op}: shapes {a.shape} and {b.shape} do not broadcast "
            "(only scalar-with-tensor or equal shapes are supported)"
        )


def _fit(g: np.ndarray, shape: tuple) -> np.ndarray:
    # Undo scalar broadcasting.
    return g if g.shape == shape else np.asarray(g.sum()).reshape(shape)


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (_fit(g, a.shape), _fit(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (_fit(g, a.shape), _fit(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair(a, b, "mul")
    return _result(
        a.data * b.data, (a, b),
        lambda g: (_fit(g * b.data, a.shape), _fit(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")
    out = a.data / b.data
    return _result(
        out, (a, b),
        lambda g: (_fit(g / b.data, a.shape), _fit(-g * out / b.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        bad = a.data[a.data <= 0].reshape(-1)[0]
        raise DomainError(f"log of non-positive value {bad!r}; clamp probabilities first")
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = expit(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def leaky_relu(a, slope: float = 0.1) -> Tensor:
    a = _as_tensor(a)
    pos = a.data >= 0
    out = a.data * np.where(pos, 1.0, slope)

    def rule(g):
        return (g * np.where(pos, 1.0, slope),)

    return _result(out, (a,), rule)


def min_clamp(a, floor: float) -> Tensor:
    """``max(a, floor)`` elementwise; gradient is exactly 0 where clamped."""
    a = _as_tensor(a)
    keep = ~(a.data < floor)  # NaN passes through so divergence is not masked
    return _result(np.where(keep, a.data, floor), (a,), lambda g: (np.where(keep, g, 0.0),))


def xlogx(a) -> Tensor:
    """``a * log(a)`` with the convention ``0 log 0 = 0``."""
    a = _as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("xlogx of negative value")
    pos = a.data > 0
    safe = np.where(pos, a.data, 1.0)
    out = np.where(pos, a.data * np.log(safe), 0.0)

    def rule(g):
        with np.errstate(divide="ignore"):
            return (g * np.where(pos, np.log(safe) + 1.0, -np.inf),)

    return _result(out, (a,), rule)


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg, "log": log,
    "exp": exp, "sigmoid": sigmoid, "leaky_relu": leaky_relu, "min_clamp": min_clamp,
}


def elementwise(op_kind: str, *operands, **params) -> Tensor:
    """Dispatch by name, e.g. ``elementwise("leaky_relu", x, slope=0.1)``."""
    try:
        fn = _ELEMENTWISE[op_kind]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op_kind!r}; valid: {sorted(_ELEMENTWISE)}")
    return fn(*operands, **params)


# ----------------------------------------------------------------- reductions

def _check_axis(t: Tensor, axis) -> None:
    if axis is not None and not (-t.ndim <= axis < t.ndim):
        raise DimensionError(f"axis {axis} out of range for tensor of rank {t.ndim}")


def reduce_sum(t, axis: Optional[int] = None) -> Tensor:
    t = _as_tensor(t)
    _check_axis(t, axis)
    shape = t.shape
    if axis is None:
        return _result(np.asarray(t.data.sum()), (t,), lambda g: (np.full(shape, g),))
    return _result(
        t.data.sum(axis=axis), (t,),
        lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),),
    )


def reduce_mean(t, axis: Optional[int] = None) -> Tensor:
    t = _as_tensor(t)
    _check_axis(t, axis)
    shape = t.shape
    if axis is None:
        n = t.size
        return _result(np.asarray(t.data.mean()), (t,), lambda g: (np.full(shape, g / n),))
    n = shape[axis]
    return _result(
        t.data.mean(axis=axis), (t,),
        lambda g: (np.broadcast_to(np.expand_dims(g / n, axis), shape).copy(),),
    )


def reduce(op_kind: str, t, axis: Optional[int] = None) -> Tensor:
    if op_kind == "sum":
        return reduce_sum(t, axis)
    if op_kind == "mean":
        return reduce_mean(t, axis)
    raise ContractError(f"unknown reduction {op_kind!r}; valid: ['mean', 'sum']")


def sum_squares(t) -> Tensor:
    t = _as_tensor(t)
    return _result(np.asarray(np.sum(t.data * t.data)), (t,), lambda g: (2.0 * g * t.data,))


# ------------------------------------------------------------ linear algebra

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def affine(x, w, b) -> Tensor:
    """``x @ w + b`` with the bias row added to every row of the product."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise DimensionError(f"affine: incompatible shapes x{x.shape} w{w.shape} b{b.shape}")
    return _result(
        x.data @ w.data + b.data, (x, w, b),
        lambda g: (g @ w.data.T, x.data.T @ g, g.sum(axis=0)),
    )


def batch_norm(x, gamma, beta, eps: float = 1e-5, running=None):
    """Normalize each column of ``x`` then scale by ``gamma`` and shift by ``beta``.

    With ``running=None`` the batch statistics are used (training); pass a
    ``(mean, var)`` pair to use fixed statistics instead.  Returns the output
    tensor and the ``(mean, var)`` actually used, where var is the biased
    batch variance in training mode.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(f"batch_norm: incompatible shapes x{x.shape} gamma{gamma.shape}")
    if running is None:
        n = x.shape[0]
        if n < 2:
            raise ContractError("batch norm in training mode needs at least 2 rows")
        mu = x.data.mean(axis=0)
        centered = x.data - mu
        var = np.einsum("ij,ij->j", centered, centered) / n
        inv = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv

        def rule(g):
            gsum = g.sum(axis=0)
            dgamma = np.einsum("ij,ij->j", g, xhat)
            # dxhat = g * gamma, so its column sums follow from gsum and dgamma.
            dx = (gamma.data * inv) * (g - (gsum + xhat * dgamma) / n)
            return dx, dgamma, gsum
    else:
        mu, var = running
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv

        def rule(g):
            return g * gamma.data * inv, (g * xhat).sum(axis=0), g.sum(axis=0)

    out = _result(xhat * gamma.data + beta.data, (x, gamma, beta), rule)
    return out, (mu, var)


def softmax(t) -> Tensor:
    """Row-wise softmax of a 2-D tensor."""
    t = _as_tensor(t)
    if t.ndim != 2:
        raise DimensionError(f"softmax expects a 2-D tensor, got shape {t.shape}")
    e = np.exp(t.data - t.data.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)
    return _result(s, (t,), lambda g: (s * (g - (g * s).sum(axis=1, keepdims=True)),))


def normalize_rows(t) -> Tensor:
    """Divide each row of a positive 2-D tensor by its sum."""
    t = _as_tensor(t)
    if t.ndim != 2:
        raise DimensionError(f"normalize_rows expects a 2-D tensor, got shape {t.shape}")
    s = t.data.sum(axis=1, keepdims=True)
    out = t.data / s
    return _result(out, (t,), lambda g: ((g - (g * out).sum(axis=1, keepdims=True)) / s,))


def take_rows(t, index) -> Tensor:
    """Pick ``t[i, index[i]]`` for every row ``i``."""
    t = _as_tensor(t)
    index = np.asarray(index, dtype=np.int64)
    if t.ndim != 2 or index.shape != (t.shape[0],):
        raise DimensionError(f"take_rows: index shape {index.shape} for tensor {t.shape}")
    rows = np.arange(t.shape[0])
    shape = t.shape

    def rule(g):
        full = np.zeros(shape)
        full[rows, index] = g
        return (full,)

    return _result(t.data[rows, index], (t,), rule)


def concat_rows(tensors) -> Tensor:
    """Stack 2-D tensors with equal column counts on top of each other."""
    ts = [_as_tensor(t) for t in tensors]
    if any(t.ndim != 2 or t.shape[1] != ts[0].shape[1] for t in ts):
        raise DimensionError(f"concat_rows: incompatible shapes {[t.shape for t in ts]}")
    bounds = np.cumsum([0] + [t.shape[0] for t in ts])
    return _result(
        np.concatenate([t.data for t in ts], axis=0), tuple(ts),
        lambda g: tuple(g[a:b] for a, b in zip(bounds[:-1], bounds[1:])),
    )


def slice_rows(t, start: int, stop: int) -> Tensor:
    t = _as_tensor(t)
    if t.ndim != 2 or not 0 <= start <= stop <= t.shape[0]:
        raise DimensionError(f"slice_rows: rows [{start}, {stop}) of shape {t.shape}")
    shape = t.shape

    def rule(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _result(t.data[start:stop], (t,), rule)


def detach(t) -> Tensor:
    """Same values, cut from the tape."""
    return Tensor(_as_tensor(t).data)
