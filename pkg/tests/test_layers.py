import numpy as np
import numpy.testing as npt
import pytest

from ner_transfer.core_math import SeededRng, sigmoid
from ner_transfer.errors import ContractViolation
from ner_transfer.gradient_check import numeric_gradient, relative_error
from ner_transfer.layers import (
    ALL_STATES,
    FINAL_CONCAT,
    BiLstmParams,
    DenseParams,
    EmbeddingTable,
    LstmParams,
    bilstm_backward,
    bilstm_sequence,
    dense_backward,
    dense_forward,
    embedding_backward,
    embedding_forward,
    lstm_step,
)


def test_embedding_forward_selects_rows():
    table = EmbeddingTable("t", np.arange(12, dtype=float).reshape(4, 3))
    npt.assert_array_equal(embedding_forward(table, [2, 0]), [[6, 7, 8], [0, 1, 2]])
    with pytest.raises(ContractViolation):
        embedding_forward(table, [4])


def test_embedding_backward_accumulates_repeated_ids():
    grad = EmbeddingTable("t", np.zeros((3, 2)))
    embedding_backward(grad, [1, 1, 2], np.ones((3, 2)))
    npt.assert_array_equal(grad.table, [[0, 0], [2, 2], [1, 1]])


def test_lstm_initialize_sets_forget_bias():
    p = LstmParams.initialize(3, 4, SeededRng(0))
    npt.assert_array_equal(p.b[4:8], np.ones(4))
    npt.assert_array_equal(p.b[:4], np.zeros(4))
    npt.assert_array_equal(p.b[8:], np.zeros(8))


def test_lstm_step_matches_gate_equations():
    rng = SeededRng(1)
    p = LstmParams.initialize(3, 2, rng)
    x, h0, c0 = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
    z = p.W @ x + p.U @ h0 + p.b
    i, f, o, g = sigmoid(z[0:2]), sigmoid(z[2:4]), sigmoid(z[4:6]), np.tanh(z[6:8])
    c = f * c0 + i * g
    h, c_out, _ = lstm_step(p, x, h0, c0)
    npt.assert_allclose(c_out, c, atol=1e-14)
    npt.assert_allclose(h, o * np.tanh(c), atol=1e-14)


def test_lstm_step_rejects_wrong_input_size():
    p = LstmParams.initialize(3, 2, SeededRng(0))
    with pytest.raises(ContractViolation):
        lstm_step(p, np.zeros(4), np.zeros(2), np.zeros(2))


def test_final_concat_is_the_ends_of_all_states():
    rng = SeededRng(2)
    params = BiLstmParams.initialize(3, 2, True, rng)
    xs = rng.uniform(-1, 1, (5, 3))
    states, _ = bilstm_sequence(params.fwd, params.bwd, xs, ALL_STATES)
    final, _ = bilstm_sequence(params.fwd, params.bwd, xs, FINAL_CONCAT)
    assert states.shape == (5, 4)
    npt.assert_array_equal(final, np.concatenate([states[-1, :2], states[0, 2:]]))


def test_unidirectional_output():
    params = BiLstmParams.initialize(3, 2, False, SeededRng(0))
    states, _ = bilstm_sequence(params.fwd, params.bwd, np.ones((4, 3)), ALL_STATES)
    assert states.shape == (4, 2)
    assert params.output_dim == 2


@pytest.mark.parametrize("mode", [ALL_STATES, FINAL_CONCAT])
@pytest.mark.parametrize("bidirectional", [True, False])
def test_bilstm_backward_matches_finite_differences(mode, bidirectional):
    rng = SeededRng(11)
    params = BiLstmParams.initialize(3, 2, bidirectional, rng.fork("params"))
    xs = rng.uniform(-1, 1, (4, 3))
    out, _ = bilstm_sequence(params.fwd, params.bwd, xs, mode)
    weights = rng.uniform(-1, 1, out.shape)

    def loss():
        return float(np.sum(bilstm_sequence(params.fwd, params.bwd, xs, mode)[0] * weights))

    _, cache = bilstm_sequence(params.fwd, params.bwd, xs, mode)
    grads = params.zeros_like()
    dxs = bilstm_backward(params.fwd, params.bwd, cache, weights, grads.fwd, grads.bwd)

    for name, array in params.named_arrays().items():
        assert relative_error(grads.named_arrays()[name], numeric_gradient(loss, array)) < 1e-6, name
    assert relative_error(dxs, numeric_gradient(loss, xs)) < 1e-6


def test_dense_backward_matches_finite_differences():
    rng = SeededRng(5)
    p = DenseParams.initialize(4, 3, rng)
    p.b[:] = rng.uniform(-1, 1, 3)
    h = rng.uniform(-1, 1, (6, 4))
    weights = rng.uniform(-1, 1, (6, 3))

    def loss():
        return float(np.sum(dense_forward(p, h) * weights))

    dW, db, dh = dense_backward(p, h, weights)
    assert relative_error(dW, numeric_gradient(loss, p.W)) < 1e-7
    assert relative_error(db, numeric_gradient(loss, p.b)) < 1e-7
    assert relative_error(dh, numeric_gradient(loss, h)) < 1e-7


def test_dense_forward_vector_and_matrix_agree():
    p = DenseParams.initialize(4, 3, SeededRng(0))
    h = np.arange(8, dtype=float).reshape(2, 4)
    npt.assert_allclose(dense_forward(p, h)[1], dense_forward(p, h[1]))


def scalar_lstm(w, u, b):
    """One-unit LSTM with per-gate scalars (input, forget, output, candidate)."""
    W = np.array(w, dtype=float).reshape(4, 1)
    U = np.array(u, dtype=float).reshape(4, 1)
    return LstmParams(W, U, np.array(b, dtype=float))


def test_lstm_step_zero_params_hand_values():
    p = scalar_lstm([0] * 4, [0] * 4, [0] * 4)
    h, c, _ = lstm_step(p, np.zeros(1), np.zeros(1), np.zeros(1))
    npt.assert_array_equal(c, [0.0])
    npt.assert_array_equal(h, [0.0])
    h, c, _ = lstm_step(p, np.zeros(1), np.zeros(1), np.ones(1))
    npt.assert_allclose(c, [0.5], atol=1e-15)
    npt.assert_allclose(h, [0.23105858], atol=1e-8)


def test_saturated_forget_gate_carries_the_cell():
    p = scalar_lstm([0] * 4, [0] * 4, [0, 50.0, 0, 0])
    _, c, _ = lstm_step(p, np.zeros(1), np.zeros(1), np.ones(1))
    npt.assert_allclose(c, [1.0], atol=1e-12)


def test_cell_state_grows_by_at_most_one_per_step():
    rng = SeededRng(17)
    bound = 3.0
    for _ in range(50):
        p = LstmParams(rng.uniform(-20, 20, (12, 2)), rng.uniform(-20, 20, (12, 3)), rng.uniform(-20, 20, 12))
        x = rng.uniform(-1, 1, 2)
        h_prev = rng.uniform(-1, 1, 3)
        c_prev = rng.uniform(-bound, bound, 3)
        _, c, _ = lstm_step(p, x, h_prev, c_prev)
        assert np.all(np.abs(c) <= bound + 1.0)


def test_bilstm_composes_scalar_steps():
    fwd = scalar_lstm([0.5, -0.3, 0.8, 1.2], [0.1, 0.2, -0.4, 0.3], [0.0, 1.0, 0.1, -0.2])
    bwd = scalar_lstm([-0.7, 0.4, 0.2, 0.9], [0.3, -0.1, 0.5, 0.6], [0.2, 1.0, 0.0, 0.1])
    xs = np.array([[1.0], [-1.0]])

    def run(p, sequence):
        h, c, states = np.zeros(1), np.zeros(1), []
        for x in sequence:
            h, c, _ = lstm_step(p, x, h, c)
            states.append(h)
        return states

    forward_states = run(fwd, xs)
    backward_states = run(bwd, xs[::-1])[::-1]
    states, _ = bilstm_sequence(fwd, bwd, xs, ALL_STATES)
    expected = np.array([np.concatenate([f, b]) for f, b in zip(forward_states, backward_states)])
    npt.assert_allclose(states, expected, atol=1e-12)
    final, _ = bilstm_sequence(fwd, bwd, xs, FINAL_CONCAT)
    npt.assert_allclose(final, np.concatenate([forward_states[-1], backward_states[0]]), atol=1e-12)


def test_dense_forward_hand_examples():
    h = np.array([1.0, -2.0, 3.0])
    npt.assert_array_equal(dense_forward(DenseParams(np.eye(3), np.zeros(3)), h), h)
    bias_only = DenseParams(np.zeros((3, 2)), np.array([1.0, 2.0, 3.0]))
    npt.assert_array_equal(dense_forward(bias_only, np.array([4.0, -5.0])), [1.0, 2.0, 3.0])
    p = DenseParams(np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]), np.zeros(3))
    npt.assert_array_equal(dense_forward(p, np.array([2.0, 3.0])), [2.0, 6.0, 5.0])
