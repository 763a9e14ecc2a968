"""Dense float64 tensors with a reverse-mode gradient tape.

Every differentiable primitive lives here. Values are numpy arrays in
row-major order; shapes are explicit and slicing always copies, so no view
ever crosses the autodiff boundary. Any operation that produces a NaN or an
Inf raises immediately instead of propagating the value.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ParamStore",
    "ShapeError",
    "DomainError",
    "NonFiniteError",
    "constant",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "sqrt",
    "square",
    "sigmoid",
    "tanh",
    "relu",
    "leaky_relu",
    "softplus",
    "sin",
    "cos",
    "softmax",
    "reduce_sum",
    "reduce_mean",
    "reduce_max",
    "reshape",
    "transpose",
    "concat",
    "gradient_check",
    "uniform_init",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of the operation."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared where only finite values are allowed."""


def _check_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    # a NaN or Inf anywhere poisons the sum, so this is a cheap full scan
    if not math.isfinite(float(arr.sum())):
        raise NonFiniteError(f"non-finite value in {what}")
    return arr


class Tensor:
    """A dense float64 array plus bookkeeping for the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, name or "tensor")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{label})"

    # operator sugar; every arm routes through the primitives below
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return _getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def constant(data, name: str | None = None) -> Tensor:
    """Wrap data as a non-differentiable tensor."""
    return Tensor(data, requires_grad=False, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------

_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Ordered record of primitive operations for one backward pass.

    Nodes are appended in execution order, which is already a topological
    order, so the reverse sweep visits each node exactly once. A tape is
    single-threaded; run independent tapes for concurrent work.
    """

    def __init__(self, parameters: Iterable[Tensor] = ()):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.parameters: list[Tensor] = list(parameters)

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            t.requires_grad = True
            self.parameters.append(t)

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> "OrderedDict[str, np.ndarray]":
        """Accumulate d(loss)/d(param) for every watched parameter.

        Parameters the loss does not reach get a zero gradient. Gradients
        are also stored on each parameter's ``.grad`` attribute.
        """
        if loss.data.size != 1:
            raise ShapeError("backward requires a scalar loss")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, backward_fn in reversed(self._nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for t, gi in zip(inputs, backward_fn(g)):
                if gi is None or not t.requires_grad:
                    continue
                acc = grads.get(id(t))
                grads[id(t)] = gi if acc is None else acc + gi
        result: OrderedDict[str, np.ndarray] = OrderedDict()
        for i, p in enumerate(self.parameters):
            g = grads.get(id(p))
            if g is None:
                g = np.zeros_like(p.data)
            p.grad = g
            result[p.name or f"param_{i}"] = g
        return result


def backward(tape: Tape, loss: Tensor) -> "OrderedDict[str, np.ndarray]":
    return tape.backward(loss)


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    tape = _ACTIVE_TAPE
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._nodes.append((out, inputs, backward_fn))
    return out


def _result(arr: np.ndarray, what: str) -> Tensor:
    _check_finite(arr, what)
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.requires_grad = False
    t.grad = None
    t.name = None
    return t


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with broadcastable batch dimensions."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands need at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    out = _result(np.matmul(a.data, b.data), "matmul")

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(out, (a, b), backward_fn)


def _binary(a, b, fwd, grad_a, grad_b, what):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out_data = fwd(a.data, b.data)
    except ValueError as e:  # numpy broadcast failure
        raise ShapeError(str(e)) from e
    out = _result(out_data, what)

    def backward_fn(g):
        return (
            _unbroadcast(grad_a(g, a.data, b.data, out.data), a.shape),
            _unbroadcast(grad_b(g, a.data, b.data, out.data), b.shape),
        )

    return _record(out, (a, b), backward_fn)


def add(a, b) -> Tensor:
    return _binary(a, b, np.add, lambda g, x, y, o: g, lambda g, x, y, o: g, "add")


def sub(a, b) -> Tensor:
    return _binary(a, b, np.subtract, lambda g, x, y, o: g, lambda g, x, y, o: -g, "sub")


def mul(a, b) -> Tensor:
    return _binary(a, b, np.multiply, lambda g, x, y, o: g * y, lambda g, x, y, o: g * x, "mul")


def div(a, b) -> Tensor:
    b_t = _as_tensor(b)
    if np.any(b_t.data == 0.0):
        raise DomainError("division by zero")
    return _binary(
        a, b_t, np.divide, lambda g, x, y, o: g / y, lambda g, x, y, o: -g * o / y, "div"
    )


def _unary(a, fwd, grad, what):
    a = _as_tensor(a)
    out = _result(fwd(a.data), what)

    def backward_fn(g):
        return (grad(g, a.data, out.data),)

    return _record(out, (a,), backward_fn)


def neg(a) -> Tensor:
    return _unary(a, np.negative, lambda g, x, o: -g, "neg")


def exp(a) -> Tensor:
    return _unary(a, np.exp, lambda g, x, o: g * o, "exp")


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log of non-positive value")
    return _unary(a, np.log, lambda g, x, o: g / x, "log")


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0.0):
        raise DomainError("sqrt of negative value")
    return _unary(a, np.sqrt, lambda g, x, o: g * 0.5 / o, "sqrt")


def square(a) -> Tensor:
    return _unary(a, np.square, lambda g, x, o: g * 2.0 * x, "square")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so no exp ever overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    return _unary(a, _sigmoid, lambda g, x, o: g * o * (1.0 - o), "sigmoid")


def tanh(a) -> Tensor:
    return _unary(a, np.tanh, lambda g, x, o: g * (1.0 - o * o), "tanh")


def relu(a) -> Tensor:
    return _unary(a, lambda x: np.maximum(x, 0.0), lambda g, x, o: g * (x > 0.0), "relu")


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    return _unary(
        a,
        lambda x: np.where(x > 0.0, x, slope * x),
        lambda g, x, o: g * np.where(x > 0.0, 1.0, slope),
        "leaky_relu",
    )


def softplus(a) -> Tensor:
    return _unary(a, lambda x: np.logaddexp(0.0, x), lambda g, x, o: g * _sigmoid(x), "softplus")


def sin(a) -> Tensor:
    return _unary(a, np.sin, lambda g, x, o: g * np.cos(x), "sin")


def cos(a) -> Tensor:
    return _unary(a, np.cos, lambda g, x, o: -g * np.sin(x), "cos")


def softmax(a, axis: int = -1) -> Tensor:
    """Shift-invariant softmax along one axis (max is subtracted first)."""
    a = _as_tensor(a)
    if a.shape == () or a.shape[axis] == 0:
        raise ShapeError("softmax needs a nonempty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = _result(e / e.sum(axis=axis, keepdims=True), "softmax")

    def backward_fn(g):
        y = out.data
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _record(out, (a,), backward_fn)


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = _result(a.data.sum(axis=axes, keepdims=keepdims), "sum")

    def backward_fn(g):
        gg = g if keepdims else np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _record(out, (a,), backward_fn)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = _result(a.data.mean(axis=axes, keepdims=keepdims), "mean")

    def backward_fn(g):
        gg = g if keepdims else np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(gg, a.shape) / count,)

    return _record(out, (a,), backward_fn)


def reduce_max(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out_data = a.data.max(axis=axes, keepdims=keepdims)
    out = _result(out_data, "max")

    def backward_fn(g):
        full = a.data.max(axis=axes, keepdims=True)
        mask = (a.data == full).astype(np.float64)
        mask /= mask.sum(axis=axes, keepdims=True)  # ties share the gradient
        gg = g if keepdims else np.expand_dims(g, axes) if axes else g
        return (mask * gg,)

    return _record(out, (a,), backward_fn)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    try:
        out = _result(a.data.reshape(shape).copy(), "reshape")
    except ValueError as e:
        raise ShapeError(str(e)) from e

    def backward_fn(g):
        return (g.reshape(a.shape),)

    return _record(out, (a,), backward_fn)


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(ax % a.ndim for ax in axes)
    out = _result(a.data.transpose(axes).copy(), "transpose")
    inverse = np.argsort(axes)

    def backward_fn(g):
        return (g.transpose(inverse),)

    return _record(out, (a,), backward_fn)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat needs at least one tensor")
    axis = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim:
            raise ShapeError("concat rank mismatch")
        for ax in range(ts[0].ndim):
            if ax != axis and t.shape[ax] != ts[0].shape[ax]:
                raise ShapeError("concat non-concat extents must match")
    out = _result(np.concatenate([t.data for t in ts], axis=axis), "concat")
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def backward_fn(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(ts))
        )

    return _record(out, tuple(ts), backward_fn)


def _getitem(a: Tensor, key) -> Tensor:
    out = _result(np.array(a.data[key], dtype=np.float64), "slice")

    def backward_fn(g):
        gz = np.zeros_like(a.data)
        gz[key] = g
        return (gz,)

    return _record(out, (a,), backward_fn)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    """Named registry of leaf tensors: trainable weights plus buffers.

    Creation order is fixed by construction, which keeps checkpoints and
    optimizer sweeps deterministic.
    """

    def __init__(self):
        self._entries: "OrderedDict[str, tuple[Tensor, bool]]" = OrderedDict()

    def add(self, name: str, data, trainable: bool = True) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=trainable, name=name)
        self._entries[name] = (t, trainable)
        return t

    def uniform(self, name: str, rng: np.random.Generator, shape, fan_in: int) -> Tensor:
        return self.add(name, uniform_init(rng, shape, fan_in))

    def zeros(self, name: str, shape, trainable: bool = True) -> Tensor:
        return self.add(name, np.zeros(shape), trainable=trainable)

    def buffer(self, name: str, data) -> Tensor:
        return self.add(name, data, trainable=False)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name][0]

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return [(name, t) for name, (t, _) in self._entries.items()]

    def trainable(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict((n, t) for n, (t, tr) in self._entries.items() if tr)

    def tensors(self) -> list[Tensor]:
        return [t for t, _ in self._entries.values()]

    def total_count(self) -> int:
        return sum(t.size for t, _ in self._entries.values())

    def describe(self) -> list[dict]:
        return [
            {"name": n, "shape": list(t.shape), "size": t.size, "trainable": tr}
            for n, (t, tr) in self._entries.items()
        ]


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------


def gradient_check(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    h: float = 1e-5,
    rel_tol: float = 1e-4,
    floor: float = 1e-4,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    kink_retry_h: float | None = 1e-7,
) -> float:
    """Compare tape gradients of ``fn()`` against central finite differences.

    ``fn`` must rebuild the scalar loss from ``tensors`` on every call. When
    ``max_entries`` is set, that many entries per tensor are probed (seeded
    sampling); otherwise every entry is. Returns the worst relative error
    and raises AssertionError beyond ``rel_tol``. The denominator is floored
    so near-zero gradients are compared absolutely.

    A probe whose interval straddles a piecewise-linear kink (relu within h
    of its corner) measures the average of two slopes, not the derivative;
    such entries get one retry at ``kink_retry_h`` before counting as a
    failure.
    """
    for t in tensors:
        t.requires_grad = True
    with Tape(tensors) as tape:
        loss = fn()
    tape.backward(loss)

    def numeric_at(flat: np.ndarray, i: int, step: float) -> float:
        orig = flat[i]
        flat[i] = orig + step
        up = fn().item()
        flat[i] = orig - step
        dn = fn().item()
        flat[i] = orig
        return (up - dn) / (2.0 * step)

    worst = 0.0
    for t in tensors:
        flat = t.data.ravel()
        gflat = t.grad.ravel()
        if max_entries is not None and flat.size > max_entries:
            sampler = rng or np.random.default_rng(0)
            idxs = sampler.choice(flat.size, size=max_entries, replace=False)
        else:
            idxs = range(flat.size)
        for i in idxs:
            analytic = gflat[i]
            numeric = numeric_at(flat, i, h)
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            if err > rel_tol and kink_retry_h is not None:
                numeric = numeric_at(flat, i, kink_retry_h)
                err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, err)
            if err > rel_tol:
                raise AssertionError(
                    f"gradient mismatch for {t.name or 'tensor'}[{i}]: "
                    f"analytic={analytic:.6e} numeric={numeric:.6e} rel={err:.3e}"
                )
    return worst
