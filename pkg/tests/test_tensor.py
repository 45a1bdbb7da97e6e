import numpy as np
import pytest

from edgenas import tensor as T
from edgenas.errors import ContractError, DimensionError, NumericError
from edgenas.tensor import Tape, Tensor, backward, forward_op


def test_subtract_self_is_zero():
    out = forward_op("subtract", [Tensor([1.0, 2.0, 3.0]), Tensor([1.0, 2.0, 3.0])])
    assert np.array_equal(out.data, np.zeros(3))


def test_corr_unit_impulse_identity():
    e0 = Tensor([1.0, 0.0, 0.0, 0.0])
    b = Tensor([0.3, -1.2, 2.0, 0.7])
    out = T.circular_correlation(e0, b)
    assert np.array_equal(out.data, b.data)


def test_corr_matches_double_loop_oracle():
    rng = np.random.default_rng(7)
    a = rng.normal(size=8)
    b = rng.normal(size=8)
    # definitional O(d^2) double loop
    expected = np.zeros(8)
    for k in range(8):
        for i in range(8):
            expected[k] += a[i] * b[(i + k) % 8]
    out = T.circular_correlation(Tensor(a), Tensor(b))
    assert np.max(np.abs(out.data - expected)) <= 1e-12


def test_backward_linear():
    x = Tensor([1.0, 1.0], requires_grad=True)
    with Tape():
        loss = T.sum_(x * 2.0)
        backward(loss)
    assert np.array_equal(x.grad, [2.0, 2.0])


def test_backward_sigmoid_at_zero():
    x = Tensor(0.0, requires_grad=True)
    with Tape():
        loss = T.sigmoid(x)
        backward(loss)
    assert x.grad == pytest.approx(0.25)


def test_fanout_accumulates():
    x = Tensor([3.0], requires_grad=True)
    with Tape():
        loss = T.sum_(x + x)
        backward(loss)
    assert np.array_equal(x.grad, [2.0])


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape():
        y = x * 2.0
        with pytest.raises(ContractError):
            backward(y)


def test_backward_detached_warns_empty():
    loss = T.sum_(Tensor([1.0, 2.0]))
    with pytest.warns(UserWarning):
        assert backward(loss) == {}


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_log_domain_error():
    with pytest.raises(NumericError):
        T.log(Tensor([1.0, 0.0]))


def test_forward_op_unknown_kind():
    with pytest.raises(ContractError):
        forward_op("definitely_not_an_op", [Tensor(1.0)])


def test_forward_op_deterministic():
    rng = np.random.default_rng(0)
    a, b = Tensor(rng.normal(size=(4, 4))), Tensor(rng.normal(size=(4, 4)))
    r1 = forward_op("matmul", [a, b]).data
    r2 = forward_op("matmul", [a, b]).data
    assert np.array_equal(r1, r2)


def test_check_finite_flag():
    T.set_check_finite(True)
    try:
        with pytest.raises(NumericError):
            T.exp(Tensor(1e6))
    finally:
        T.set_check_finite(False)


@pytest.mark.parametrize("segop,expected", [
    (T.segment_sum, [[3.0], [4.0], [0.0]]),
    (T.segment_mean, [[1.5], [4.0], [0.0]]),
    (T.segment_max, [[2.0], [4.0], [0.0]]),
])
def test_segment_ops(segop, expected):
    x = Tensor([[1.0], [2.0], [4.0]])
    out = segop(x, np.array([0, 0, 1]), 3)
    assert np.array_equal(out.data, expected)


def test_segment_max_gradient_routes_to_first_tie():
    x = Tensor([[2.0], [2.0], [1.0]], requires_grad=True)
    with Tape():
        out = T.segment_max(x, np.array([0, 0, 0]), 1)
        backward(T.sum_(out))
    assert np.array_equal(x.grad, [[1.0], [0.0], [0.0]])


def test_gather_rows_scatter_grad():
    x = Tensor(np.arange(6, dtype=float).reshape(3, 2), requires_grad=True)
    with Tape():
        y = T.gather_rows(x, np.array([1, 1, 0]))
        backward(T.sum_(y))
    assert np.array_equal(x.grad, [[1.0, 1.0], [2.0, 2.0], [0.0, 0.0]])


def test_reductions_bit_identical_across_calls():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(50, 7)))
    assert np.array_equal(T.sum_(x, axis=0).data, T.sum_(x, axis=0).data)
    assert np.array_equal(T.mean_(x, axis=1).data, T.mean_(x, axis=1).data)
