"""LSTM cell, embedding lookup, and output projection.

The cell follows the six-equation gate recurrence with NO bias terms in the
gates; that is a deliberate deviation from common LSTM practice (the
zero-weight closed-form tests depend on it). All activation vectors are
1 x n row matrices; parameters are plain float64 arrays.

`lstm_step` is the single-step reference built directly on the numeric
primitives; `lstm_encode`/`lstm_backward` run whole sequences through the
selected kernel backend and are the paths training actually exercises.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .numeric import Matrix, hadamard, matmul, sigmoid, tanh

INIT_SCALE = 0.08


@dataclass
class LSTMCellParams:
    """Gate weights, each (input_dim + hidden_dim) x hidden_dim."""
    wi: Matrix
    wf: Matrix
    wo: Matrix
    wc: Matrix

    def __post_init__(self):
        shapes = {m.shape for m in (self.wi, self.wf, self.wo, self.wc)}
        if len(shapes) != 1:
            raise ValueError(f"gate matrices must share one shape, got {shapes}")

    @property
    def hidden_dim(self) -> int:
        return self.wi.shape[1]

    @property
    def input_dim(self) -> int:
        return self.wi.shape[0] - self.wi.shape[1]


def init_lstm(input_dim: int, hidden_dim: int, rng: np.random.Generator) -> LSTMCellParams:
    """Uniform [-0.08, 0.08] initialization, one draw per gate in fixed order."""
    shape = (input_dim + hidden_dim, hidden_dim)
    return LSTMCellParams(*(rng.uniform(-INIT_SCALE, INIT_SCALE, shape) for _ in range(4)))


@dataclass
class LSTMState:
    """Recurrent state: hidden h and cell memory m, each 1 x hidden."""
    h: Matrix
    m: Matrix

    @staticmethod
    def zeros(hidden_dim: int) -> "LSTMState":
        return LSTMState(np.zeros((1, hidden_dim)), np.zeros((1, hidden_dim)))


@dataclass
class LSTMStepCache:
    params: LSTMCellParams
    z: Matrix
    i: Matrix
    f: Matrix
    o: Matrix
    c: Matrix
    m_prev: Matrix
    m: Matrix


def lstm_step(params: LSTMCellParams, x_t: Matrix, prev: LSTMState
              ) -> tuple[LSTMState, LSTMStepCache]:
    """One step of the gate recurrence:

        i = sigmoid([x, h] Wi)      f = sigmoid([x, h] Wf)
        o = sigmoid([x, h] Wo)      c = tanh([x, h] Wc)
        m_t = m ⊙ f + i ⊙ c         h_t = m_t ⊙ o
    """
    if x_t.shape != (1, params.input_dim):
        raise ValueError(f"x_t shape {x_t.shape} != (1, {params.input_dim})")
    if prev.h.shape != (1, params.hidden_dim):
        raise ValueError(f"state width {prev.h.shape} != (1, {params.hidden_dim})")
    z = np.concatenate((x_t, prev.h), axis=1)
    i = sigmoid(matmul(z, params.wi))
    f = sigmoid(matmul(z, params.wf))
    o = sigmoid(matmul(z, params.wo))
    c = tanh(matmul(z, params.wc))
    m = hadamard(prev.m, f) + hadamard(i, c)
    h = hadamard(m, o)
    cache = LSTMStepCache(params, z, i, f, o, c, prev.m, m)
    return LSTMState(h, m), cache


def lstm_step_backward(cache: LSTMStepCache, grad_h: Matrix, grad_m: Matrix
                       ) -> tuple[dict[str, Matrix], Matrix, Matrix, Matrix]:
    """Single-step chain rule; returns (gate grads, dx, dh_prev, dm_prev)."""
    p = cache.params
    din = p.input_dim
    do = grad_h * cache.m
    dm = grad_h * cache.o + grad_m
    di = dm * cache.c
    df = dm * cache.m_prev
    dc = dm * cache.i
    dm_prev = dm * cache.f
    dai = di * cache.i * (1.0 - cache.i)
    daf = df * cache.f * (1.0 - cache.f)
    dao = do * cache.o * (1.0 - cache.o)
    dac = dc * (1.0 - cache.c ** 2)
    grads = {
        "wi": cache.z.T @ dai,
        "wf": cache.z.T @ daf,
        "wo": cache.z.T @ dao,
        "wc": cache.z.T @ dac,
    }
    dz = dai @ p.wi.T + daf @ p.wf.T + dao @ p.wo.T + dac @ p.wc.T
    return grads, dz[:, :din], dz[:, din:], dm_prev


@dataclass
class LSTMSequenceCache:
    params: LSTMCellParams
    xs: np.ndarray
    h0: np.ndarray
    m0: np.ndarray
    hs: np.ndarray
    ms: np.ndarray
    is_: np.ndarray
    fs: np.ndarray
    os_: np.ndarray
    cs: np.ndarray


def lstm_encode(params: LSTMCellParams, embeddings: list[Matrix] | np.ndarray,
                init: LSTMState | None = None
                ) -> tuple[np.ndarray, LSTMState, LSTMSequenceCache]:
    """Iterate the cell over a sequence.

    Returns (all hidden states as a T x hidden array, final state, cache for
    `lstm_backward`).
    """
    if isinstance(embeddings, np.ndarray):
        xs = np.ascontiguousarray(embeddings, dtype=np.float64)
    else:
        if len(embeddings) == 0:
            raise ValueError("cannot encode an empty sequence")
        xs = np.concatenate([np.atleast_2d(e) for e in embeddings], axis=0)
    if xs.shape[0] == 0:
        raise ValueError("cannot encode an empty sequence")
    if init is None:
        init = LSTMState.zeros(params.hidden_dim)
    h0 = init.h.ravel()
    m0 = init.m.ravel()
    hs, ms, is_, fs, os_, cs = kernels.active().lstm_seq_forward(
        params.wi, params.wf, params.wo, params.wc, xs, h0, m0)
    final = LSTMState(hs[-1:].copy(), ms[-1:].copy())
    cache = LSTMSequenceCache(params, xs, h0, m0, hs, ms, is_, fs, os_, cs)
    return hs, final, cache


def lstm_backward(cache: LSTMSequenceCache, grad_states: np.ndarray,
                  grad_final: LSTMState | None = None
                  ) -> tuple[dict[str, Matrix], np.ndarray, LSTMState]:
    """Backpropagation through time over a cached forward pass.

    grad_states: T x hidden upstream gradient on every h_t. grad_final adds
    gradient on the final (h, m) pair (the fusion / decoder-init path).
    Returns (param grads keyed wi/wf/wo/wc, gradient on the inputs, gradient
    on the initial state).
    """
    seq_len = cache.xs.shape[0]
    grad_states = np.asarray(grad_states, dtype=np.float64)
    if grad_states.shape != cache.hs.shape:
        raise ValueError(
            f"grad_states shape {grad_states.shape} != states shape {cache.hs.shape}")
    dh = cache.h0.shape[0]
    if grad_final is None:
        dh_last = np.zeros(dh)
        dm_last = np.zeros(dh)
    else:
        dh_last = grad_final.h.ravel()
        dm_last = grad_final.m.ravel()
    dwi, dwf, dwo, dwc, dxs, dh0, dm0 = kernels.active().lstm_seq_backward(
        cache.params.wi, cache.params.wf, cache.params.wo, cache.params.wc,
        cache.xs, cache.h0, cache.m0,
        cache.hs, cache.ms, cache.is_, cache.fs, cache.os_, cache.cs,
        grad_states, dh_last, dm_last)
    assert seq_len == dxs.shape[0]
    grads = {"wi": dwi, "wf": dwf, "wo": dwo, "wc": dwc}
    return grads, dxs, LSTMState(dh0.reshape(1, -1), dm0.reshape(1, -1))


@dataclass
class EmbeddingTable:
    """vocab_size x embed_dim lookup table."""
    table: Matrix

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.table.shape[1]


def init_embedding(vocab_size: int, embed_dim: int, rng: np.random.Generator) -> EmbeddingTable:
    return EmbeddingTable(rng.uniform(-INIT_SCALE, INIT_SCALE, (vocab_size, embed_dim)))


def embed(table: EmbeddingTable, ids: list[int]) -> np.ndarray:
    """Row lookups, stacked into a len(ids) x embed_dim array."""
    for v in ids:
        if not 0 <= v < table.vocab_size:
            raise ValueError(f"token id {v} out of range for vocab of {table.vocab_size}")
    return table.table[np.asarray(ids, dtype=np.int64)].copy()


def embedding_grad(table: EmbeddingTable, ids: list[int],
                   grad_rows: np.ndarray) -> Matrix:
    """Scatter-add row gradients; ids absent from the batch get exact zeros."""
    grad = np.zeros_like(table.table)
    np.add.at(grad, np.asarray(ids, dtype=np.int64), grad_rows)
    return grad


@dataclass
class Projection:
    """Affine map onto vocabulary logits: s W + b."""
    w: Matrix
    b: Matrix


def init_projection(in_dim: int, vocab_size: int, rng: np.random.Generator) -> Projection:
    return Projection(rng.uniform(-INIT_SCALE, INIT_SCALE, (in_dim, vocab_size)),
                      np.zeros((1, vocab_size)))


def project(p: Projection, s: Matrix) -> Matrix:
    return matmul(s, p.w) + p.b


def project_backward(p: Projection, s: Matrix, grad_logits: Matrix
                     ) -> tuple[Matrix, Matrix, Matrix]:
    """Returns (dW, db, ds)."""
    return s.T @ grad_logits, grad_logits.copy(), grad_logits @ p.w.T
