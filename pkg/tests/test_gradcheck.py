import numpy as np
import pytest

from edgenas import tensor as T
from edgenas.errors import ContractError
from edgenas.gradcheck import check_all_ops, grad_check
from edgenas.tensor import Tensor


def test_polynomial():
    err = grad_check(lambda x: x * x, [Tensor(3.0)], eps=1e-5)
    assert err <= 1e-8


def test_corr_composed_with_sum():
    rng = np.random.default_rng(11)
    a = Tensor(rng.normal(size=8))
    b = Tensor(rng.normal(size=8))
    err = grad_check(lambda x, y: T.sum_(T.circular_correlation(x, y)), [a, b])
    assert err <= 1e-6


def test_prelu_with_slope_away_from_kink():
    rng = np.random.default_rng(5)
    x = Tensor(rng.uniform(0.3, 1.0, 6) * np.where(rng.random(6) < 0.5, -1, 1))
    s = Tensor(0.25)
    err = grad_check(lambda a, b: T.sum_(T.prelu(a, b)), [x, s])
    assert err <= 1e-6


def test_two_layer_mlp_matches_finite_differences():
    rng = np.random.default_rng(42)
    x = Tensor(rng.normal(size=(4, 5)))
    w1 = Tensor(rng.normal(size=(5, 6)) * 0.5)
    w2 = Tensor(rng.normal(size=(6, 1)) * 0.5)

    def mlp(xi, a, b):
        return T.sum_(T.sigmoid(T.matmul(T.tanh(T.matmul(xi, a)), b)))

    err = grad_check(mlp, [x, w1, w2], eps=1e-5)
    assert err <= 1e-3


def test_eps_domain():
    with pytest.raises(ContractError):
        grad_check(lambda x: x * x, [Tensor(1.0)], eps=0.5)


def test_nondeterministic_function_rejected():
    state = {"n": 0}

    def f(x):
        state["n"] += 1
        return x * float(state["n"])

    with pytest.raises(ContractError):
        grad_check(f, [Tensor(1.0)])


def test_all_op_kinds_within_tolerance():
    results = check_all_ops(seed=0)
    worst = max(results.values())
    assert worst <= 1e-3, f"worst op error {worst}: {results}"
