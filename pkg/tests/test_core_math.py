import numpy as np
import numpy.testing as npt
import pytest

from ner_transfer.core_math import (
    SeededRng,
    affine,
    check_finite,
    clip_global_norm,
    global_norm,
    log_sum_exp,
    sigmoid,
    sigmoid_grad,
    tanh_grad,
    uniform_init,
)
from ner_transfer.errors import ContractViolation, NumericOverflowError


def test_log_sum_exp_matches_naive_on_moderate_values():
    v = np.array([0.1, -2.0, 3.5, 1.0])
    assert log_sum_exp(v) == pytest.approx(np.log(np.sum(np.exp(v))), abs=1e-12)


def test_log_sum_exp_is_stable_for_large_values():
    assert log_sum_exp(np.array([1000.0, 1000.0])) == pytest.approx(1000.0 + np.log(2.0), abs=1e-12)
    assert log_sum_exp(np.array([-1000.0, -1000.0])) == pytest.approx(-1000.0 + np.log(2.0), abs=1e-12)


def test_log_sum_exp_all_negative_infinity():
    assert log_sum_exp(np.array([-np.inf, -np.inf])) == -np.inf


def test_log_sum_exp_along_axis():
    m = np.array([[0.0, 1.0], [2.0, 3.0]])
    npt.assert_allclose(log_sum_exp(m, axis=0), np.log(np.exp(m).sum(axis=0)), atol=1e-12)
    npt.assert_allclose(log_sum_exp(m, axis=1), np.log(np.exp(m).sum(axis=1)), atol=1e-12)


def test_affine_checks_shapes():
    W = np.ones((2, 3))
    npt.assert_array_equal(affine(W, np.ones(3), np.zeros(2)), [3.0, 3.0])
    with pytest.raises(ContractViolation):
        affine(W, np.ones(4), np.zeros(2))
    with pytest.raises(ContractViolation):
        affine(W, np.ones(3), np.zeros(3))


def test_clip_global_norm_rescales_in_place():
    grads = [np.array([3.0]), np.array([4.0])]
    factor = clip_global_norm(grads, 1.0)
    assert factor == pytest.approx(0.2)
    assert global_norm(grads) == pytest.approx(1.0)


def test_clip_global_norm_leaves_small_gradients():
    grads = [np.array([0.3, 0.4])]
    assert clip_global_norm(grads, 5.0) == 1.0
    npt.assert_array_equal(grads[0], [0.3, 0.4])


def test_activations_saturate_without_overflow():
    assert sigmoid(1000.0) == 1.0
    assert sigmoid(-1000.0) == 0.0
    assert sigmoid(0.0) == 0.5
    assert sigmoid_grad(0.0) == pytest.approx(0.25)
    assert tanh_grad(0.0) == pytest.approx(1.0)


def test_check_finite_rejects_nan():
    with pytest.raises(NumericOverflowError):
        check_finite(np.array([1.0, np.nan]))


def test_seeded_rng_is_reproducible():
    a, b = SeededRng(42), SeededRng(42)
    npt.assert_array_equal(a.random(5), b.random(5))
    npt.assert_array_equal(a.permutation(10), b.permutation(10))


def test_fork_ignores_parent_state():
    rng = SeededRng(3)
    before = rng.fork("child").random(3)
    rng.random(100)
    after = rng.fork("child").random(3)
    npt.assert_array_equal(before, after)
    assert rng.fork("a").seed != rng.fork("b").seed


def test_choice_from_empty_sequence_raises():
    with pytest.raises(ContractViolation):
        SeededRng(0).choice([])


def test_uniform_init_bounds():
    w = uniform_init(SeededRng(1), (50, 12), 12)
    bound = np.sqrt(3.0 / 12)
    assert w.shape == (50, 12)
    assert np.all(np.abs(w) <= bound)


def test_log_sum_exp_hand_values():
    assert log_sum_exp(np.array([0.0, 0.0])) == pytest.approx(np.log(2.0), abs=1e-12)
    assert log_sum_exp(np.array([1.0, 2.0, 3.0])) == pytest.approx(3.40760596, abs=1e-8)


@pytest.mark.parametrize("shift", [-1e3, -2.5, 0.0, 7.0, 1e3])
def test_log_sum_exp_is_shift_invariant(shift):
    v = SeededRng(8).uniform(-5, 5, 6)
    assert log_sum_exp(v + shift) == pytest.approx(log_sum_exp(v) + shift, abs=1e-12, rel=1e-15)


def test_affine_hand_examples():
    npt.assert_array_equal(affine(np.eye(2), np.array([3.0, 4.0]), np.zeros(2)), [3.0, 4.0])
    npt.assert_array_equal(affine(np.zeros((2, 2)), np.array([3.0, 4.0]), np.array([1.0, -1.0])), [1.0, -1.0])
    W = np.array([[1.0, 2.0], [3.0, 4.0]])
    npt.assert_array_equal(affine(W, np.ones(2), np.zeros(2)), [3.0, 7.0])


def test_affine_is_linear():
    rng = SeededRng(12)
    W = rng.uniform(-1, 1, (3, 4))
    x, y = rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4)
    alpha, beta = 0.7, -1.3
    zero = np.zeros(3)
    npt.assert_allclose(
        affine(W, alpha * x + beta * y, zero),
        alpha * affine(W, x, zero) + beta * affine(W, y, zero),
        atol=1e-12,
    )


def test_clip_global_norm_hand_examples():
    at_bound = [np.array([3.0, 4.0])]
    assert clip_global_norm(at_bound, 5.0) == 1.0
    npt.assert_array_equal(at_bound[0], [3.0, 4.0])

    halved = [np.array([6.0, 8.0])]
    assert clip_global_norm(halved, 5.0) == pytest.approx(0.5)
    npt.assert_allclose(halved[0], [3.0, 4.0])

    blocks = [np.array([3.0, 0.0]), np.array([0.0, 4.0])]
    assert clip_global_norm(blocks, 2.5) == pytest.approx(0.5)
    npt.assert_allclose(blocks[0], [1.5, 0.0])
    npt.assert_allclose(blocks[1], [0.0, 2.0])


def test_clip_global_norm_is_idempotent():
    grads = [SeededRng(4).uniform(-10, 10, (3, 3)), SeededRng(5).uniform(-10, 10, 7)]
    clip_global_norm(grads, 2.0)
    once = [g.copy() for g in grads]
    clip_global_norm(grads, 2.0)
    for a, b in zip(once, grads):
        npt.assert_allclose(a, b, rtol=1e-12)


def test_sigmoid_hand_values():
    assert sigmoid(2.0) == pytest.approx(0.88079708, abs=1e-8)


def test_seeded_rng_reproduces_a_million_draws():
    npt.assert_array_equal(SeededRng(2024).random(10**6), SeededRng(2024).random(10**6))
