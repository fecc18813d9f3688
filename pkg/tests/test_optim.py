import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dartsprime.autodiff import ShapeError, Tensor
from dartsprime.optim import SGD, Adam, cosine_lr
from oracles import adam_reference


def param(v):
    return Tensor(np.array(v, dtype=np.float64), requires_grad=True)


def test_plain_sgd():
    p = param([1.0])
    SGD([p], lr=0.1, momentum=0.0).step([np.array([2.0])])
    assert p.data[0] == pytest.approx(0.8)


def test_zero_learning_rate_is_null_step():
    p = param([1.0, -3.0])
    SGD([p], lr=0.0, momentum=0.9).step([np.array([5.0, 5.0])])
    np.testing.assert_array_equal(p.data, [1.0, -3.0])


def test_momentum_two_steps_match_recurrence():
    p = param([1.0])
    opt = SGD([p], lr=0.1, momentum=0.9, weight_decay=0.01)
    g1, g2 = 2.0, -1.0
    opt.step([np.array([g1])])
    opt.step([np.array([g2])])
    # hand-unrolled: v1 = g1 + wd p0; p1 = p0 - lr v1; v2 = 0.9 v1 + g2 + wd p1; p2 = p1 - lr v2
    p0 = 1.0
    v1 = g1 + 0.01 * p0
    p1 = p0 - 0.1 * v1
    v2 = 0.9 * v1 + g2 + 0.01 * p1
    assert p.data[0] == pytest.approx(p1 - 0.1 * v2, abs=1e-15)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        SGD([param([1.0])], lr=0.1).step([np.zeros(2)])
    with pytest.raises(ShapeError):
        Adam([param([1.0])], lr=0.1).step([np.zeros(2)])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=5), st.integers(1, 5))
def test_adam_zero_gradient_is_identity(values, steps):
    p = param(values)
    opt = Adam([p], lr=0.1)
    for _ in range(steps):
        opt.step([np.zeros(len(values))])
    np.testing.assert_array_equal(p.data, values)


def test_adam_single_step_matches_reference():
    p = param([0.7])
    Adam([p], lr=1e-3, betas=(0.5, 0.999), eps=1e-8).step([np.array([0.3])])
    assert p.data[0] == pytest.approx(adam_reference(0.7, [0.3], 1e-3, 0.5, 0.999, 1e-8), abs=1e-15)
    # first bias-corrected step has magnitude lr * g/|g| up to eps
    assert p.data[0] == pytest.approx(0.7 - 1e-3 * 0.3 / (0.3 + 1e-8), abs=1e-15)


def test_adam_matches_reference_over_many_steps():
    rng = np.random.default_rng(1)
    grads = rng.normal(size=20)
    p = param([0.1])
    opt = Adam([p], lr=0.01, betas=(0.9, 0.99), eps=1e-8)
    for g in grads:
        opt.step([np.array([g])])
    assert p.data[0] == pytest.approx(adam_reference(0.1, grads, 0.01, 0.9, 0.99, 1e-8), abs=1e-13)


def test_adam_constant_gradient_step_tends_to_lr():
    # with constant g, mhat = g and vhat = g^2 exactly, so every step is lr * g / (|g| + eps)
    p = param([0.0])
    opt = Adam([p], lr=1e-3)
    prev = 0.0
    for _ in range(200):
        opt.step([np.array([4.0])])
        step = prev - p.data[0]
        prev = p.data[0]
    assert step == pytest.approx(1e-3, rel=1e-8)


@pytest.mark.parametrize("step, expected", [(0, 0.1), (100, 0.001), (50, (0.1 + 0.001) / 2)])
def test_cosine_lr_landmarks(step, expected):
    assert cosine_lr(step, 0.1, 0.001, 100) == pytest.approx(expected, abs=1e-15)


def test_cosine_lr_past_horizon():
    with pytest.raises(ValueError):
        cosine_lr(101, 0.1, 0.0, 100)
