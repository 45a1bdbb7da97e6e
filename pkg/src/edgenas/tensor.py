"""Dense float64 tensors with tape-based reverse-mode differentiation.

A :class:`Tape` records operations in execution order (define-by-run); the
tape is rebuilt on every forward pass.  :func:`backward` walks the tape in
exact reverse order and accumulates gradients additively across fan-out.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, NumericError

_TAPE_STACK: list["Tape"] = []
_CHECK_FINITE = False


def set_check_finite(enabled: bool) -> None:
    """Toggle NaN/Inf detection on every op output (off by default)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


def active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """A dense multi-dimensional float64 array, optionally differentiable."""

    __slots__ = ("data", "requires_grad", "grad", "tape_node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape_node: tuple["Tape", int] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return subtract(self, _as_tensor(other))

    def __rsub__(self, other):
        return subtract(_as_tensor(other), self)

    def __mul__(self, other):
        return multiply(self, _as_tensor(other))

    def __rmul__(self, other):
        return multiply(_as_tensor(other), self)

    def __neg__(self):
        return multiply(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis=axis, keepdims=keepdims)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _TapeEntry:
    __slots__ = ("inputs", "output", "backward_fn", "name")

    def __init__(self, inputs, output, backward_fn, name):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.name = name


class Tape:
    """Ordered record of operations; inputs always precede their consumers."""

    def __init__(self):
        self.entries: list[_TapeEntry] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()
        # break the tape <-> tensor reference cycles so intermediate
        # arrays free immediately instead of waiting on the gc
        for entry in self.entries:
            entry.output.tape_node = None
        self.entries.clear()

    def record(self, inputs, output, backward_fn, name) -> None:
        output.tape_node = (self, len(self.entries))
        self.entries.append(_TapeEntry(tuple(inputs), output, backward_fn, name))


def _emit(name: str, inputs: Sequence[Tensor], data: np.ndarray,
          backward_fn: Callable) -> Tensor:
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by op '{name}'")
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(inputs, out, backward_fn, name)
    return out


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Accumulate d(loss)/d(tensor) for every tensor reachable from ``loss``.

    Returns a map from ``id(tensor)`` to gradient array and also stores the
    gradient on each ``requires_grad`` tensor's ``.grad`` attribute.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ContractError("backward() requires a scalar loss")
    if loss.tape_node is None:
        import warnings

        warnings.warn("backward() called on a detached loss; no gradients flow")
        return {}
    tape, last = loss.tape_node
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(tape.entries[: last + 1]):
        g_out = grads.get(id(entry.output))
        if g_out is None:
            continue
        in_grads = entry.backward_fn(g_out)
        for t, g in zip(entry.inputs, in_grads):
            if g is None or not t.requires_grad:
                continue
            if g.shape != t.data.shape:
                raise DimensionError(
                    f"backward of '{entry.name}' produced gradient of shape "
                    f"{g.shape} for input of shape {t.data.shape}")
            acc = grads.get(id(t))
            grads[id(t)] = g if acc is None else acc + g
    for entry in tape.entries[: last + 1]:
        for t in entry.inputs:
            if t.requires_grad and id(t) in grads:
                t.grad = grads[id(t)]
    loss.grad = grads[id(loss)]
    return grads


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _emit("add", (a, b), data, lambda g: (
        _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def subtract(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    return _emit("subtract", (a, b), data, lambda g: (
        _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    return _emit("multiply", (a, b), data, lambda g: (
        _unbroadcast(g * b.data, a.data.shape),
        _unbroadcast(g * a.data, b.data.shape)))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; on ties the gradient routes to the first operand."""
    data = np.maximum(a.data, b.data)
    mask = a.data >= b.data

    def bw(g):
        return (_unbroadcast(g * mask, a.data.shape),
                _unbroadcast(g * ~mask, b.data.shape))

    return _emit("maximum", (a, b), data, bw)


def abs_(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _emit("abs", (x,), np.abs(x.data), lambda g: (g * sign,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data
    return _emit("matmul", (a, b), data,
                 lambda g: (g @ b.data.T, a.data.T @ g))


# ---------------------------------------------------------------------------
# shape ops


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit("concat", tensors, data, bw)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.data.shape
    return _emit("reshape", (x,), x.data.reshape(shape),
                 lambda g: (g.reshape(old),))


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError("transpose expects a 2-D tensor")
    return _emit("transpose", (x,), np.ascontiguousarray(x.data.T),
                 lambda g: (g.T,))


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Select rows ``x[index]``; backward scatter-adds into the source."""
    index = np.asarray(index, dtype=np.intp)
    data = x.data[index]

    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return _emit("gather_rows", (x,), data, bw)


def take(x: Tensor, i: int) -> Tensor:
    """Scalar pick from a 1-D tensor."""
    if x.data.ndim != 1:
        raise DimensionError("take expects a 1-D tensor")

    def bw(g):
        out = np.zeros_like(x.data)
        out[i] = g
        return (out,)

    return _emit("take", (x,), x.data[i], bw)


# ---------------------------------------------------------------------------
# reductions (left-to-right order fixed by numpy's deterministic evaluation)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return _emit("sum", (x,), data, bw)


def mean_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    data = x.data.mean(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).copy() / n,)

    return _emit("mean", (x,), data, bw)


def max_(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    data = x.data.max(axis=axis, keepdims=keepdims)
    arg = np.expand_dims(x.data.argmax(axis=axis), axis)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        out = np.zeros_like(x.data)
        np.put_along_axis(out, arg, g, axis)
        return (out,)

    return _emit("max", (x,), data, bw)


# ---------------------------------------------------------------------------
# segment reductions over sorted segment ids (message aggregation)


def _segment_offsets(seg: np.ndarray, num_segments: int) -> np.ndarray:
    # clip trailing offsets of empty segments into range for reduceat;
    # their bogus results are overwritten with zeros by the callers
    offsets = np.searchsorted(seg, np.arange(num_segments))
    return np.minimum(offsets, len(seg) - 1)


def segment_sum(x: Tensor, seg: np.ndarray, num_segments: int) -> Tensor:
    """Per-segment sum of rows; ``seg`` must be sorted non-decreasing."""
    seg = np.asarray(seg, dtype=np.intp)
    counts = np.bincount(seg, minlength=num_segments)
    if len(seg) == 0:
        data = np.zeros((num_segments,) + x.data.shape[1:])
    else:
        offsets = _segment_offsets(seg, num_segments)
        data = np.add.reduceat(x.data, offsets, axis=0)
        data[counts == 0] = 0.0

    def bw(g):
        return (g[seg],)

    return _emit("segment_sum", (x,), data, bw)


def segment_mean(x: Tensor, seg: np.ndarray, num_segments: int) -> Tensor:
    seg = np.asarray(seg, dtype=np.intp)
    counts = np.bincount(seg, minlength=num_segments)
    denom = np.maximum(counts, 1).astype(np.float64)
    if len(seg) == 0:
        data = np.zeros((num_segments,) + x.data.shape[1:])
    else:
        offsets = _segment_offsets(seg, num_segments)
        data = np.add.reduceat(x.data, offsets, axis=0)
        data[counts == 0] = 0.0
        data = data / denom[:, None]

    def bw(g):
        return ((g / denom[:, None])[seg],)

    return _emit("segment_mean", (x,), data, bw)


def segment_max(x: Tensor, seg: np.ndarray, num_segments: int) -> Tensor:
    """Per-segment channel-wise max; empty segments yield zeros."""
    seg = np.asarray(seg, dtype=np.intp)
    counts = np.bincount(seg, minlength=num_segments)
    if len(seg) == 0:
        data = np.zeros((num_segments,) + x.data.shape[1:])

        def bw_empty(g):
            return (np.zeros_like(x.data),)

        return _emit("segment_max", (x,), data, bw_empty)

    offsets = _segment_offsets(seg, num_segments)
    data = np.maximum.reduceat(x.data, offsets, axis=0)
    data[counts == 0] = 0.0

    hit = x.data == data[seg]
    # route ties to the first hit within each segment and channel
    cs = np.cumsum(hit, axis=0)
    prefix = np.concatenate([np.zeros((1,) + cs.shape[1:], dtype=cs.dtype), cs])
    first_hit = hit & ((cs - prefix[offsets][seg]) == 1)

    def bw(g):
        return (first_hit * g[seg],)

    return _emit("segment_max", (x,), data, bw)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _emit("relu", (x,), x.data * mask, lambda g: (g * mask,))


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Leaky rectifier with a learnable scalar slope for the negative part."""
    if slope.data.ndim != 0:
        raise DimensionError("prelu slope must be a scalar tensor")
    neg = x.data < 0
    data = np.where(neg, slope.data * x.data, x.data)

    def bw(g):
        gx = np.where(neg, slope.data, 1.0) * g
        gs = np.sum(g * x.data * neg)
        return (gx, np.asarray(gs))

    return _emit("prelu", (x, slope), data, bw)


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)
    return _emit("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _emit("tanh", (x,), t, lambda g: (g * (1.0 - t * t),))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        e = np.exp(x.data)
    return _emit("exp", (x,), e, lambda g: (g * e,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise NumericError("log of a non-positive argument")
    return _emit("log", (x,), np.log(x.data), lambda g: (g / x.data,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - inner),)

    return _emit("softmax", (x,), s, bw)


def dropout_apply(x: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by an externally supplied (already scaled) keep mask."""
    mask = np.asarray(mask, dtype=np.float64)
    return _emit("dropout", (x,), x.data * mask, lambda g: (g * mask,))


def make_dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-scaling dropout mask: 0 with probability ``rate``, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ContractError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


# ---------------------------------------------------------------------------
# circular correlation

_CORR_IDX: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _corr_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    if d not in _CORR_IDX:
        k = np.arange(d)[:, None]
        i = np.arange(d)[None, :]
        _CORR_IDX[d] = ((i + k) % d, (i - k) % d)
    return _CORR_IDX[d]


def circular_correlation(a: Tensor, b: Tensor) -> Tensor:
    """(a ⋆ b)_k = sum_i a_i * b_{(i+k) mod d}, batched over leading axes.

    Direct O(d^2) evaluation; dimensions here are small enough that an
    FFT-based path is not worth the complexity.
    """
    if a.data.shape != b.data.shape:
        raise DimensionError("circular correlation operands must share a shape")
    d = a.data.shape[-1]
    fwd_idx, rev_idx = _corr_indices(d)
    b_g = b.data[..., fwd_idx]                       # (..., k, i)
    data = np.einsum("...i,...ki->...k", a.data, b_g)

    def bw(g):
        ga = np.einsum("...k,...ki->...i", g, b_g)
        a_g = a.data[..., rev_idx]                   # (..., k, j)
        gb = np.einsum("...k,...kj->...j", g, a_g)
        return (ga, gb)

    return _emit("circular_correlation", (a, b), data, bw)


# ---------------------------------------------------------------------------
# losses


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over all elements, computed stably."""
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.data.shape:
        raise DimensionError("bce targets must match logits shape")
    z = logits.data
    data = np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z))))
    n = z.size

    def bw(g):
        return (g * (expit(z) - y) / n,)

    return _emit("bce_with_logits", (logits,), np.asarray(data), bw)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over rows; ``labels`` are class indices."""
    labels = np.asarray(labels, dtype=np.intp)
    z = logits.data
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise DimensionError("cross_entropy expects (n, C) logits and n labels")
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    data = np.mean(lse - z[np.arange(len(labels)), labels])
    n = z.shape[0]

    def bw(g):
        p = np.exp(z - zmax)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        return (g * p / n,)

    return _emit("cross_entropy", (logits,), np.asarray(data), bw)


# ---------------------------------------------------------------------------
# generic dispatcher

_OP_TABLE: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "subtract": subtract,
    "multiply": multiply,
    "maximum": maximum,
    "abs": abs_,
    "circular_correlation": circular_correlation,
    "concat": lambda *ts, axis=-1: concat(ts, axis=axis),
    "transpose": transpose,
    "sum": sum_,
    "mean": mean_,
    "max": max_,
    "softmax": softmax,
    "log": log,
    "exp": exp,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "prelu": prelu,
    "dropout": dropout_apply,
    "bce": bce_with_logits,
    "cross_entropy": cross_entropy,
}


def forward_op(kind: str, inputs: Iterable, **kwargs) -> Tensor:
    """Apply the operation named ``kind`` to ``inputs``."""
    try:
        fn = _OP_TABLE[kind]
    except KeyError:
        raise ContractError(f"unknown operation kind '{kind}'") from None
    inputs = list(inputs)
    if not inputs:
        raise ContractError("forward_op requires at least one input")
    return fn(*inputs, **kwargs)
