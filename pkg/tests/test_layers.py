import numpy as np
import numpy.testing as npt
import pytest

from helpers import scalar_lstm_step
from slangdef.layers import (EmbeddingTable, LSTMCellParams, LSTMState,
                             Projection, embed, embedding_grad, init_lstm,
                             lstm_backward, lstm_encode, lstm_step,
                             lstm_step_backward, project, project_backward)
from slangdef.numeric import finite_difference_gradient, relative_error


def zero_cell(input_dim, hidden_dim):
    shape = (input_dim + hidden_dim, hidden_dim)
    return LSTMCellParams(*[np.zeros(shape) for _ in range(4)])


def random_cell(rng, input_dim, hidden_dim, scale=0.6):
    shape = (input_dim + hidden_dim, hidden_dim)
    return LSTMCellParams(*[rng.standard_normal(shape) * scale for _ in range(4)])


class TestLstmStep:
    def test_zero_weights_zero_state(self):
        params = zero_cell(3, 2)
        state, _ = lstm_step(params, np.ones((1, 3)), LSTMState.zeros(2))
        npt.assert_array_equal(state.h, np.zeros((1, 2)))
        npt.assert_array_equal(state.m, np.zeros((1, 2)))

    def test_zero_weights_nonzero_memory(self):
        # all gates sigmoid(0)=0.5 and candidate tanh(0)=0:
        # m_t = 0.5 * m_prev, h_t = 0.5 * m_t
        params = zero_cell(3, 2)
        prev = LSTMState(np.zeros((1, 2)), np.ones((1, 2)))
        state, _ = lstm_step(params, np.ones((1, 3)), prev)
        npt.assert_array_equal(state.m, [[0.5, 0.5]])
        npt.assert_array_equal(state.h, [[0.25, 0.25]])

    def test_matches_scalar_equations(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            params = random_cell(rng, 1, 2)
            x = rng.standard_normal((1, 1))
            prev = LSTMState(rng.standard_normal((1, 2)),
                             rng.standard_normal((1, 2)))
            state, _ = lstm_step(params, x, prev)
            h_ref, m_ref = scalar_lstm_step(
                params.wi.tolist(), params.wf.tolist(), params.wo.tolist(),
                params.wc.tolist(), x.ravel().tolist(),
                prev.h.ravel().tolist(), prev.m.ravel().tolist())
            npt.assert_allclose(state.h.ravel(), h_ref, rtol=0, atol=1e-12)
            npt.assert_allclose(state.m.ravel(), m_ref, rtol=0, atol=1e-12)

    def test_shape_checks(self):
        params = zero_cell(3, 2)
        with pytest.raises(ValueError):
            lstm_step(params, np.ones((1, 4)), LSTMState.zeros(2))
        with pytest.raises(ValueError):
            lstm_step(params, np.ones((1, 3)), LSTMState.zeros(5))

    def test_hidden_bounded_at_init_scale(self):
        # with init-scale weights the memory recurrence stays bounded, so
        # h = m * o keeps strictly inside (-1, 1) on unit-scale inputs
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(50):
            params = init_lstm(2, 4, rng)
            state = LSTMState.zeros(4)
            for _ in range(20):
                state, _ = lstm_step(params, rng.standard_normal((1, 2)), state)
            worst = max(worst, float(np.max(np.abs(state.h))))
        assert worst < 1.0


class TestLstmEncode:
    def test_length_one_equals_single_step(self, each_backend):
        rng = np.random.default_rng(2)
        params = random_cell(rng, 2, 3)
        x = rng.standard_normal((1, 2))
        states, final, _ = lstm_encode(params, [x])
        step_state, _ = lstm_step(params, x, LSTMState.zeros(3))
        npt.assert_allclose(states[0], step_state.h.ravel(), rtol=0, atol=1e-12)
        npt.assert_allclose(final.h, step_state.h, rtol=0, atol=1e-12)
        npt.assert_allclose(final.m, step_state.m, rtol=0, atol=1e-12)

    def test_zero_weights_all_states_zero(self, each_backend):
        params = zero_cell(2, 3)
        states, final, _ = lstm_encode(params, np.ones((5, 2)))
        npt.assert_array_equal(states, np.zeros((5, 3)))
        npt.assert_array_equal(final.h, np.zeros((1, 3)))

    def test_composition_of_steps(self, each_backend):
        rng = np.random.default_rng(3)
        params = random_cell(rng, 2, 3)
        xs = rng.standard_normal((3, 2))
        _, final, _ = lstm_encode(params, xs)
        state = LSTMState.zeros(3)
        for t in range(3):
            state, _ = lstm_step(params, xs[t:t + 1], state)
        npt.assert_allclose(final.h, state.h, rtol=0, atol=1e-12)
        npt.assert_allclose(final.m, state.m, rtol=0, atol=1e-12)

    def test_concat_composition_bit_exact(self, each_backend):
        rng = np.random.default_rng(4)
        params = random_cell(rng, 2, 3)
        s1 = rng.standard_normal((4, 2))
        s2 = rng.standard_normal((3, 2))
        _, final_all, _ = lstm_encode(params, np.concatenate([s1, s2]))
        _, mid, _ = lstm_encode(params, s1)
        _, final_split, _ = lstm_encode(params, s2, init=mid)
        npt.assert_array_equal(final_all.h, final_split.h)
        npt.assert_array_equal(final_all.m, final_split.m)

    def test_empty_sequence_rejected(self):
        params = zero_cell(2, 3)
        with pytest.raises(ValueError, match="empty"):
            lstm_encode(params, np.zeros((0, 2)))
        with pytest.raises(ValueError, match="empty"):
            lstm_encode(params, [])


class TestLstmBackward:
    def test_zero_upstream_gives_zero_grads(self, each_backend):
        rng = np.random.default_rng(5)
        params = random_cell(rng, 2, 3)
        _, _, cache = lstm_encode(params, rng.standard_normal((4, 2)))
        grads, dxs, dinit = lstm_backward(cache, np.zeros((4, 3)))
        for g in grads.values():
            npt.assert_array_equal(g, np.zeros_like(g))
        npt.assert_array_equal(dxs, np.zeros((4, 2)))
        npt.assert_array_equal(dinit.h, np.zeros((1, 3)))

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_finite_differences(self, seed, each_backend):
        rng = np.random.default_rng(seed)
        params = random_cell(rng, 2, 3)
        xs = rng.standard_normal((4, 2))
        weights = rng.standard_normal((4, 3))   # fixed projection of the states
        final_w = rng.standard_normal((1, 3))

        def loss_for(cell):
            states, final, _ = lstm_encode(cell, xs)
            return float(np.sum(states * weights) + np.sum(final.m * final_w))

        _, _, cache = lstm_encode(params, xs)
        grads, dxs, dinit = lstm_backward(
            cache, weights, grad_final=LSTMState(np.zeros((1, 3)), final_w))
        for gate in ("wi", "wf", "wo", "wc"):
            def f(x, gate=gate):
                mats = {g: getattr(params, g) for g in ("wi", "wf", "wo", "wc")}
                mats[gate] = x
                return loss_for(LSTMCellParams(**mats))
            fd = finite_difference_gradient(f, getattr(params, gate))
            assert relative_error(grads[gate], fd) < 1e-4
        fd_x = finite_difference_gradient(
            lambda x: float(np.sum(lstm_encode(params, x)[0] * weights)
                            + np.sum(lstm_encode(params, x)[1].m * final_w)), xs)
        assert relative_error(dxs, fd_x) < 1e-4

    def test_single_step_matches_hand_chain_rule(self):
        rng = np.random.default_rng(11)
        params = random_cell(rng, 2, 3)
        x = rng.standard_normal((1, 2))
        prev = LSTMState(rng.standard_normal((1, 3)), rng.standard_normal((1, 3)))
        state, cache = lstm_step(params, x, prev)
        up = rng.standard_normal((1, 3))
        grads, dx, dh_prev, dm_prev = lstm_step_backward(
            cache, up, np.zeros((1, 3)))
        # hand-derived: dL/do = up*m, da_o = dL/do * o(1-o), dWo = z^T da_o
        z = np.concatenate([x, prev.h], axis=1)
        o = cache.o
        dao = (up * state.m) * o * (1 - o)
        npt.assert_allclose(grads["wo"], z.T @ dao, rtol=0, atol=1e-12)
        dm = up * o
        dac = (dm * cache.i) * (1 - cache.c ** 2)
        npt.assert_allclose(grads["wc"], z.T @ dac, rtol=0, atol=1e-12)
        npt.assert_allclose(dm_prev, dm * cache.f, rtol=0, atol=1e-12)

    def test_grad_shape_mismatch_rejected(self):
        rng = np.random.default_rng(12)
        params = random_cell(rng, 2, 3)
        _, _, cache = lstm_encode(params, rng.standard_normal((4, 2)))
        with pytest.raises(ValueError, match="shape"):
            lstm_backward(cache, np.zeros((3, 3)))


class TestEmbeddingAndProjection:
    def test_embed_returns_rows(self):
        table = EmbeddingTable(np.arange(12.0).reshape(4, 3))
        out = embed(table, [0, 2])
        npt.assert_array_equal(out, [[0, 1, 2], [6, 7, 8]])

    def test_embed_out_of_range(self):
        table = EmbeddingTable(np.zeros((4, 3)))
        with pytest.raises(ValueError, match="out of range"):
            embed(table, [4])

    def test_embedding_grad_sparsity(self):
        table = EmbeddingTable(np.zeros((6, 2)))
        grad = embedding_grad(table, [1, 3, 1], np.ones((3, 2)))
        npt.assert_array_equal(grad[1], [2.0, 2.0])   # repeated id accumulates
        npt.assert_array_equal(grad[3], [1.0, 1.0])
        for row in (0, 2, 4, 5):
            npt.assert_array_equal(grad[row], [0.0, 0.0])

    def test_project_zero_weight_gives_bias(self):
        p = Projection(np.zeros((3, 5)), np.arange(5.0).reshape(1, 5))
        npt.assert_array_equal(project(p, np.ones((1, 3))), p.b)

    def test_project_matches_matmul(self):
        rng = np.random.default_rng(6)
        p = Projection(rng.standard_normal((2, 5)), rng.standard_normal((1, 5)))
        s = rng.standard_normal((1, 2))
        npt.assert_allclose(project(p, s), s @ p.w + p.b, rtol=0, atol=1e-12)

    def test_project_backward_finite_differences(self):
        rng = np.random.default_rng(7)
        p = Projection(rng.standard_normal((2, 5)), rng.standard_normal((1, 5)))
        s = rng.standard_normal((1, 2))
        up = rng.standard_normal((1, 5))
        dw, db, ds = project_backward(p, s, up)
        fd_w = finite_difference_gradient(
            lambda x: float(np.sum((s @ x + p.b) * up)), p.w)
        fd_s = finite_difference_gradient(
            lambda x: float(np.sum((x @ p.w + p.b) * up)), s)
        assert relative_error(dw, fd_w) < 1e-8
        assert relative_error(ds, fd_s) < 1e-8
        npt.assert_array_equal(db, up)


def test_init_lstm_is_seeded_and_bounded():
    a = init_lstm(3, 4, np.random.default_rng(9))
    b = init_lstm(3, 4, np.random.default_rng(9))
    npt.assert_array_equal(a.wi, b.wi)
    npt.assert_array_equal(a.wc, b.wc)
    assert np.max(np.abs(a.wi)) <= 0.08
