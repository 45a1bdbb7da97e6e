"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError
from . import tensor as T
from .tensor import Tape, Tensor, backward


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor],
               eps: float = 1e-5) -> float:
    """Compare tape gradients of scalar ``f(*inputs)`` to central differences.

    Returns the maximum over all coordinates of
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    ``f`` must be deterministic (no live dropout).
    """
    if not (0.0 < eps <= 1e-2):
        raise ContractError("eps must lie in (0, 1e-2]")
    inputs = list(inputs)
    for t in inputs:
        t.requires_grad = True

    with Tape():
        out = f(*inputs)
        if out.data.ndim != 0 and out.data.size != 1:
            raise ContractError("grad_check requires a scalar-valued function")
        base = float(out.data)
        grads = backward(out)

    with Tape():
        out2 = f(*inputs)
    if float(out2.data) != base:
        raise ContractError("grad_check requires a deterministic function")

    worst = 0.0
    for t in inputs:
        analytic = grads.get(id(t))
        if analytic is None:
            analytic = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f(*inputs).data)
            flat[i] = orig - eps
            f_minus = float(f(*inputs).data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst


def _op_cases(rng: np.random.Generator):
    """One scalar-valued probe per differentiable op kind."""
    def r(*shape):
        return Tensor(rng.normal(size=shape))

    def rp(*shape):
        return Tensor(rng.random(shape) + 0.5)

    a, b = r(3, 4), r(3, 4)
    cases = {
        "matmul": (lambda x, y: T.sum_(T.matmul(x, y)), [r(3, 4), r(4, 5)]),
        "add": (lambda x, y: T.sum_(T.add(x, y)), [r(3, 4), r(3, 4)]),
        "subtract": (lambda x, y: T.sum_(T.subtract(x, y)), [a, b]),
        "multiply": (lambda x, y: T.sum_(T.multiply(x, y)), [r(3, 4), r(3, 4)]),
        "maximum": (lambda x, y: T.sum_(T.maximum(x, y)), [r(3, 4), r(3, 4)]),
        "abs": (lambda x: T.sum_(T.abs_(x)), [rp(3, 4)]),
        "circular_correlation": (
            lambda x, y: T.sum_(T.circular_correlation(x, y)), [r(2, 8), r(2, 8)]),
        "concat": (lambda x, y: T.sum_(T.concat([x, y], axis=1)),
                   [r(3, 2), r(3, 4)]),
        "sum": (lambda x: T.sum_(T.sum_(x, axis=0)), [r(3, 4)]),
        "mean": (lambda x: T.sum_(T.mean_(x, axis=1)), [r(3, 4)]),
        "max": (lambda x: T.sum_(T.max_(x, axis=0)), [r(3, 4)]),
        "softmax": (lambda x: T.sum_(T.multiply(T.softmax(x, axis=1), x)),
                    [r(3, 4)]),
        "log": (lambda x: T.sum_(T.log(x)), [rp(3, 4)]),
        "exp": (lambda x: T.sum_(T.exp(x)), [r(3, 4)]),
        "sigmoid": (lambda x: T.sum_(T.sigmoid(x)), [r(3, 4)]),
        "tanh": (lambda x: T.sum_(T.tanh(x)), [r(3, 4)]),
        "relu": (lambda x: T.sum_(T.relu(x)), [rp(3, 4)]),
        # inputs bounded away from the kink at 0
        "prelu": (lambda x, s: T.sum_(T.prelu(x, s)),
                  [Tensor(rng.uniform(0.2, 1.5, (3, 4))
                          * np.where(rng.random((3, 4)) < 0.5, -1.0, 1.0)),
                   Tensor(0.25)]),
        "transpose": (lambda x, y: T.sum_(T.matmul(x, T.transpose(y))),
                      [r(3, 4), r(2, 4)]),
        "reshape": (lambda x: T.sum_(T.multiply(T.reshape(x, (4, 3)),
                                                T.reshape(x, (4, 3)))), [r(3, 4)]),
        "take": (lambda x: T.take(x, 2), [r(5)]),
        "gather_rows": (lambda x: T.sum_(T.gather_rows(x, np.array([0, 2, 2]))),
                        [r(4, 3)]),
        "segment_sum": (lambda x: T.sum_(T.segment_sum(
            x, np.array([0, 0, 1, 3]), 4)), [r(4, 3)]),
        "segment_mean": (lambda x: T.sum_(T.segment_mean(
            x, np.array([0, 0, 1, 3]), 4)), [r(4, 3)]),
        "segment_max": (lambda x: T.sum_(T.segment_max(
            x, np.array([0, 0, 1, 3]), 4)), [r(4, 3)]),
        "bce": (lambda x, _y=(rng.random((3, 4)) > 0.5).astype(float):
                T.bce_with_logits(x, _y), [r(3, 4)]),
        "cross_entropy": (lambda x: T.cross_entropy(
            x, np.array([0, 2, 1])), [r(3, 4)]),
        "dropout": (lambda x: T.sum_(T.dropout_apply(
            x, np.array([[2.0, 0.0], [2.0, 2.0]]))), [r(2, 2)]),
    }
    return cases


def check_all_ops(seed: int = 0, eps: float = 1e-5) -> dict[str, float]:
    """Run the finite-difference probe for every differentiable op kind."""
    rng = np.random.default_rng(seed)
    results = {}
    for name, (f, inputs) in _op_cases(rng).items():
        results[name] = grad_check(f, inputs, eps=eps)
    return results
