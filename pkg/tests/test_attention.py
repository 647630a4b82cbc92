import numpy as np
import numpy.testing as npt
import pytest

from helpers import scalar_attention
from slangdef.attention import AttentionParams, attend, attend_backward
from slangdef.numeric import finite_difference_gradient, relative_error, softmax_row


def random_params(rng, hidden=3, attn=2, scale=0.7):
    return AttentionParams(rng.standard_normal((hidden, attn)) * scale,
                           rng.standard_normal((hidden, attn)) * scale,
                           rng.standard_normal((attn, 1)) * scale)


class TestAttend:
    def test_single_state_passthrough(self):
        rng = np.random.default_rng(0)
        p = random_params(rng)
        enc = rng.standard_normal((1, 3))
        out, _ = attend(p, enc, rng.standard_normal((1, 3)))
        npt.assert_array_equal(out.weights, [[1.0]])
        npt.assert_array_equal(out.context, enc)

    def test_zero_score_vector_gives_uniform(self):
        rng = np.random.default_rng(1)
        p = random_params(rng)
        p.v[...] = 0.0
        enc = rng.standard_normal((5, 3))
        out, _ = attend(p, enc, rng.standard_normal((1, 3)))
        npt.assert_allclose(out.weights, np.full((1, 5), 0.2), rtol=0, atol=1e-15)
        npt.assert_allclose(out.context, enc.mean(axis=0, keepdims=True),
                            rtol=0, atol=1e-15)

    def test_matches_scalar_formulas(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            p = random_params(rng)
            enc = rng.standard_normal((3, 3))
            dec = rng.standard_normal((1, 3))
            out, _ = attend(p, enc, dec)
            w_ref, ctx_ref = scalar_attention(
                p.w1.tolist(), p.w2.tolist(), p.v.ravel().tolist(),
                enc.tolist(), dec.ravel().tolist())
            npt.assert_allclose(out.weights.ravel(), w_ref, rtol=0, atol=1e-12)
            npt.assert_allclose(out.context.ravel(), ctx_ref, rtol=0, atol=1e-12)

    def test_combined_is_context_then_state(self):
        rng = np.random.default_rng(3)
        p = random_params(rng)
        enc = rng.standard_normal((4, 3))
        dec = rng.standard_normal((1, 3))
        out, _ = attend(p, enc, dec)
        npt.assert_array_equal(out.combined[:, :3], out.context)
        npt.assert_array_equal(out.combined[:, 3:], dec)

    def test_empty_encoder_rejected(self):
        p = random_params(np.random.default_rng(4))
        with pytest.raises(ValueError, match="at least one"):
            attend(p, np.zeros((0, 3)), np.zeros((1, 3)))


class TestAttendInvariants:
    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            p = random_params(rng)
            enc = rng.standard_normal((int(rng.integers(1, 9)), 3))
            out, _ = attend(p, enc, rng.standard_normal((1, 3)))
            assert abs(out.weights.sum() - 1.0) <= 1e-9
            assert np.all(out.weights > 0)

    def test_score_shift_invariance(self):
        # softmax(u) == softmax(u + c); checked on scores from a real cache
        rng = np.random.default_rng(6)
        p = random_params(rng)
        enc = rng.standard_normal((6, 3))
        _, cache = attend(p, enc, rng.standard_normal((1, 3)))
        u = (cache.tanh_scores @ p.v).reshape(1, -1)
        npt.assert_allclose(softmax_row(u), softmax_row(u + 17.3),
                            rtol=0, atol=1e-12)

    def test_context_in_convex_hull(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            p = random_params(rng)
            enc = rng.standard_normal((5, 3))
            out, _ = attend(p, enc, rng.standard_normal((1, 3)))
            assert np.all(out.context >= enc.min(axis=0) - 1e-12)
            assert np.all(out.context <= enc.max(axis=0) + 1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        p = random_params(rng)
        enc = rng.standard_normal((6, 3))
        dec = rng.standard_normal((1, 3))
        out, _ = attend(p, enc, dec)
        perm = rng.permutation(6)
        out_p, _ = attend(p, enc[perm], dec)
        npt.assert_allclose(out_p.weights.ravel(), out.weights.ravel()[perm],
                            rtol=0, atol=1e-12)
        npt.assert_allclose(out_p.context, out.context, rtol=0, atol=1e-12)


class TestAttendBackward:
    def test_zero_upstream(self):
        rng = np.random.default_rng(9)
        p = random_params(rng)
        _, cache = attend(p, rng.standard_normal((4, 3)),
                          rng.standard_normal((1, 3)))
        grads, denc, ddec = attend_backward(cache, np.zeros((1, 6)))
        for g in grads.values():
            npt.assert_array_equal(g, np.zeros_like(g))
        npt.assert_array_equal(denc, np.zeros((4, 3)))
        npt.assert_array_equal(ddec, np.zeros((1, 3)))

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        p = random_params(rng)
        enc = rng.standard_normal((4, 3))
        dec = rng.standard_normal((1, 3))
        up = rng.standard_normal((1, 6))

        def loss(params=p, enc_=enc, dec_=dec):
            out, _ = attend(params, enc_, dec_)
            return float(np.sum(out.combined * up))

        _, cache = attend(p, enc, dec)
        grads, denc, ddec = attend_backward(cache, up)
        checks = {
            "w1": (p.w1, lambda x: loss(AttentionParams(x, p.w2, p.v))),
            "w2": (p.w2, lambda x: loss(AttentionParams(p.w1, x, p.v))),
            "v": (p.v, lambda x: loss(AttentionParams(p.w1, p.w2, x))),
        }
        for name, (arr, f) in checks.items():
            assert relative_error(grads[name],
                                  finite_difference_gradient(f, arr)) < 1e-4
        assert relative_error(
            denc, finite_difference_gradient(lambda x: loss(enc_=x), enc)) < 1e-4
        assert relative_error(
            ddec, finite_difference_gradient(lambda x: loss(dec_=x), dec)) < 1e-4

    def test_single_state_grad_passthrough(self):
        # with one encoder state the weight is pinned at 1, so the context
        # gradient lands on that state directly
        rng = np.random.default_rng(10)
        p = random_params(rng)
        p.v[...] = 0.0   # kills the score path entirely
        enc = rng.standard_normal((1, 3))
        _, cache = attend(p, enc, rng.standard_normal((1, 3)))
        up = np.concatenate([rng.standard_normal((1, 3)), np.zeros((1, 3))], axis=1)
        _, denc, _ = attend_backward(cache, up)
        npt.assert_allclose(denc, up[:, :3], rtol=0, atol=1e-12)
