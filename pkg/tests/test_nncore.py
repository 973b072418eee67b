import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citl.errors import NumericError
from citl.nncore import ParamTensor, Rng, adam_step, cross_entropy, glorot_init, grad_check, softmax


def test_rng_children_are_independent_of_draw_order():
    a = Rng(5)
    a.normal(10)  # consuming the parent must not shift a child stream
    assert np.array_equal(a.child(3).normal(4), Rng(5).child(3).normal(4))
    assert not np.array_equal(Rng(5).child(3).normal(4), Rng(5).child(4).normal(4))


def test_glorot_unit_fans_bounded():
    w = glorot_init(Rng(0), 1, 1, shape=(1000,))
    assert np.all(np.abs(w) <= np.sqrt(3.0))


def test_glorot_deterministic():
    assert np.array_equal(glorot_init(Rng(11), 4, 6), glorot_init(Rng(11), 4, 6))


def test_glorot_sample_mean_near_zero():
    w = glorot_init(Rng(1), 100, 100, shape=(10_000,))
    assert abs(w.mean()) < 0.01


@pytest.mark.parametrize("fans", [(0, 3), (3, 0)])
def test_glorot_rejects_zero_fan(fans):
    with pytest.raises(ValueError):
        glorot_init(Rng(0), *fans)


def test_adam_zero_grad_no_decay_is_fixed_point():
    p = ParamTensor("w", np.array([1.5, -2.0, 0.25]))
    before = p.value.copy()
    for _ in range(5):
        adam_step(p, lr=0.1)
    assert np.array_equal(p.value, before)


def test_adam_decay_term_at_first_step():
    lr = 4e-5
    p = ParamTensor("w", np.array([2.0, -3.0, 0.5]))
    before = p.value.copy()
    adam_step(p, lr=lr, weight_decay=0.0005)
    np.testing.assert_allclose(p.value, before - lr * 0.0005 * before, rtol=1e-15, atol=0)


def test_adam_scalar_descends_monotonically_under_constant_grad():
    p = ParamTensor("w", np.array(1.0))
    values = [float(p.value)]
    for _ in range(200):
        p.grad[...] = 0.7
        adam_step(p, lr=1e-2)
        values.append(float(p.value))
    assert all(b < a for a, b in zip(values, values[1:]))


def test_adam_zeroes_grad_and_rejects_non_finite():
    p = ParamTensor("kernel", np.zeros(3))
    p.grad[...] = 1.0
    adam_step(p, lr=1e-3)
    assert np.all(p.grad == 0)
    p.grad[1] = np.nan
    with pytest.raises(NumericError, match="kernel"):
        adam_step(p, lr=1e-3)


def test_grad_check_quadratic_is_exact():
    p = ParamTensor("w", Rng(2).normal(7))

    def loss():
        p.grad[...] = p.value
        return 0.5 * float(p.value @ p.value)

    assert grad_check(loss, [p]) < 1e-7


def test_grad_check_flags_wrong_gradient():
    p = ParamTensor("w", Rng(3).normal(4))

    def loss():
        p.grad[...] = 2.0 * p.value  # twice the true gradient
        return 0.5 * float(p.value @ p.value)

    assert grad_check(loss, [p]) > 0.1


def test_cross_entropy_reference_values():
    assert abs(cross_entropy([0.0, 0.0], 1) - np.log(2.0)) < 1e-12
    assert cross_entropy([20.0, -20.0], 0) < 1e-8


def test_cross_entropy_batch_matches_explicit_softmax():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(9, 2)) * 3
    labels = rng.integers(0, 2, 9)
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    expected = -np.mean(np.log(p[np.arange(9), labels]))
    assert abs(cross_entropy(logits, labels) - expected) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-1e3, 1e3), st.integers(0, 1))
def test_cross_entropy_nonnegative_and_shift_invariant(a, b, c, label):
    base = cross_entropy([a, b], label)
    assert base >= 0
    assert abs(cross_entropy([a + c, b + c], label) - base) < 1e-12 * max(1.0, abs(c))
    assert abs(softmax(np.array([a, b])).sum() - 1.0) < 1e-12
