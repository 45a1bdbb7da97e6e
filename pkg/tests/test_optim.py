import numpy as np
import pytest

from edgenas.errors import ContractError
from edgenas.optim import Adam, adam_step
from edgenas.tensor import Tensor


def test_zero_gradient_leaves_params_unchanged():
    p = Tensor([1.0, -2.0])
    opt = Adam([p], lr=0.1)
    opt.step([np.zeros(2)])
    assert np.array_equal(p.data, [1.0, -2.0])


def test_first_step_closed_form():
    # with bias correction the first update is -lr * g / (|g| + eps')
    p = Tensor(0.0)
    opt = Adam([p], lr=0.1)
    opt.step([np.asarray(4.0)])
    assert float(p.data) == pytest.approx(-0.1, abs=1e-6)


def test_two_steps_match_reference_scalar_adam():
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    p = Tensor(1.0)
    opt = Adam([p], lr=lr, beta1=b1, beta2=b2, eps=eps)

    # independent hand-rolled reference
    theta, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        g = 0.7
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        opt.step([np.asarray(0.7)])
    assert float(p.data) == pytest.approx(theta, abs=1e-12)


def test_step_counter_and_moment_shapes():
    p = Tensor(np.zeros((2, 3)))
    opt = Adam([p])
    opt.step([np.ones((2, 3))])
    opt.step([np.ones((2, 3))])
    assert opt.state.step_count == 2
    assert opt.state.m[0].shape == p.data.shape
    assert opt.state.v[0].shape == p.data.shape


def test_shape_misalignment_rejected():
    p = Tensor(np.zeros(3))
    opt = Adam([p])
    with pytest.raises(ContractError):
        opt.step([np.zeros(4)])


def test_functional_wrapper_checks_alignment():
    p = Tensor(np.zeros(3))
    opt = Adam([p])
    with pytest.raises(ContractError):
        adam_step([p], [], opt)
