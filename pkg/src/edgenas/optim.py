"""Adam optimizer over tape tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment accumulators and step counter for one parameter set."""

    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Standard Adam with bias correction, updating parameters in place."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(
            m=[np.zeros_like(p.data) for p in self.params],
            v=[np.zeros_like(p.data) for p in self.params],
            lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: list[np.ndarray] | None = None) -> None:
        """Apply one update; ``grads`` defaults to each parameter's ``.grad``.

        Parameters with no gradient this step are left untouched (their
        moments do not advance either, matching sparse-participation use).
        """
        s = self.state
        s.step_count += 1
        bc1 = 1.0 - s.beta1 ** s.step_count
        bc2 = 1.0 - s.beta2 ** s.step_count
        for i, p in enumerate(self.params):
            g = grads[i] if grads is not None else p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ContractError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"shape {p.data.shape}")
            s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g
            s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g
            m_hat = s.m[i] / bc1
            v_hat = s.v[i] / bc2
            p.data -= s.lr * m_hat / (np.sqrt(v_hat) + s.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def adam_step(params: list[Tensor], grads: list[np.ndarray],
              state: "Adam") -> "Adam":
    """Functional wrapper around :meth:`Adam.step` for one explicit update."""
    if len(params) != len(grads):
        raise ContractError("params and grads must align one-to-one")
    if params is not state.params and list(params) != state.params:
        raise ContractError("state was initialized for different parameters")
    state.step(grads)
    return state
