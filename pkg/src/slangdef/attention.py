"""Additive attention over encoder states.

Scores each encoder state against the current decoder state through a shared
tanh layer, normalizes with a softmax, and returns the weighted context plus
the [context ; decoder state] concatenation used for prediction. The combined
vector also rides forward into the next decoder input (the context half), so
attention participates in both prediction and the next update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import Matrix

INIT_SCALE = 0.08


@dataclass
class AttentionParams:
    """w1: hidden x attn (applied to encoder states), w2: hidden x attn
    (applied to the decoder state), v: attn x 1 (score vector)."""
    w1: Matrix
    w2: Matrix
    v: Matrix

    def __post_init__(self):
        if self.w1.shape[1] != self.w2.shape[1] or self.v.shape != (self.w1.shape[1], 1):
            raise ValueError(
                f"inconsistent attention shapes: w1 {self.w1.shape}, "
                f"w2 {self.w2.shape}, v {self.v.shape}")


def init_attention(hidden_dim: int, attn_dim: int, rng: np.random.Generator) -> AttentionParams:
    return AttentionParams(
        rng.uniform(-INIT_SCALE, INIT_SCALE, (hidden_dim, attn_dim)),
        rng.uniform(-INIT_SCALE, INIT_SCALE, (hidden_dim, attn_dim)),
        rng.uniform(-INIT_SCALE, INIT_SCALE, (attn_dim, 1)),
    )


@dataclass
class AttentionOutput:
    weights: Matrix    # 1 x T1, positive, sums to 1
    context: Matrix    # 1 x hidden, convex combination of encoder states
    combined: Matrix   # 1 x 2*hidden: [context ; decoder state]


@dataclass
class AttentionCache:
    params: AttentionParams
    encoder_states: np.ndarray
    decoder_state: Matrix
    tanh_scores: np.ndarray   # T1 x attn
    weights: np.ndarray       # T1


def attend(params: AttentionParams, encoder_states: np.ndarray,
           decoder_state: Matrix) -> tuple[AttentionOutput, AttentionCache]:
    """score_i = v . tanh(h_i W1 + d W2); weights = softmax(scores);
    context = sum_i weights_i h_i; combined = [context ; d]."""
    enc = np.atleast_2d(np.asarray(encoder_states, dtype=np.float64))
    if enc.shape[0] == 0:
        raise ValueError("attention needs at least one encoder state")
    tanh_scores = np.tanh(enc @ params.w1 + decoder_state @ params.w2)
    scores = (tanh_scores @ params.v).ravel()
    shifted = np.exp(scores - np.max(scores))
    weights = shifted / np.sum(shifted)
    context = (weights @ enc).reshape(1, -1)
    combined = np.concatenate((context, decoder_state), axis=1)
    out = AttentionOutput(weights.reshape(1, -1), context, combined)
    return out, AttentionCache(params, enc, decoder_state, tanh_scores, weights)


def attend_backward(cache: AttentionCache, grad_output: AttentionOutput | Matrix
                    ) -> tuple[dict[str, Matrix], np.ndarray, Matrix]:
    """Gradients through the weighted sum, softmax, and tanh layer.

    grad_output is either a 1 x 2*hidden gradient on the combined vector or an
    AttentionOutput carrying one in `.combined`. Returns (param grads keyed
    w1/w2/v, gradient on encoder states, gradient on the decoder state).
    """
    if isinstance(grad_output, AttentionOutput):
        grad_combined = grad_output.combined
    else:
        grad_combined = np.asarray(grad_output, dtype=np.float64)
    enc = cache.encoder_states
    hidden = enc.shape[1]
    if grad_combined.shape != (1, 2 * hidden):
        raise ValueError(
            f"grad_output shape {grad_combined.shape} != (1, {2 * hidden})")
    dctx = grad_combined[0, :hidden]
    ddec = grad_combined[:, hidden:].copy()
    w = cache.weights
    tu = cache.tanh_scores
    dweights = enc @ dctx
    denc = np.outer(w, dctx)
    dscores = w * (dweights - w @ dweights)
    dv = (tu.T @ dscores).reshape(-1, 1)
    dtanh = np.outer(dscores, cache.params.v.ravel())
    darg = dtanh * (1.0 - tu ** 2)
    dw1 = enc.T @ darg
    denc += darg @ cache.params.w1.T
    dq = darg.sum(axis=0, keepdims=True)
    dw2 = cache.decoder_state.T @ dq
    ddec += dq @ cache.params.w2.T
    return {"w1": dw1, "w2": dw2, "v": dv}, denc, ddec
