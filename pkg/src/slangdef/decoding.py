"""Inference-time generation: greedy and beam search.

Both searches share the same stepping primitive as training (embed previous
token + previous attention context, advance the decoder LSTM, attend, project).
Greedy takes the argmax at each step (ties resolved toward the lowest token
id) and stops at EOS or max_len; EOS is never part of the returned sequence.

Beam search keeps the `beam_width` best partial hypotheses by summed log
probability. A hypothesis retires to the finished pool when it picks EOS (the
EOS log probability is part of its score); anything still alive at max_len is
force-finished as-is. Finished hypotheses are ranked by score / len^alpha
(len floored at 1), ties broken by lexicographic token ids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vocab as vocab_mod
from .attention import attend
from .layers import LSTMState, embed, lstm_step, project
from .model import DualEncoderModel, fuse
from .numeric import log_softmax_row


@dataclass
class DecodeConfig:
    max_len: int = 32
    mode: str = "greedy"          # greedy | beam
    beam_width: int = 4
    length_norm: float = 0.0      # alpha in score / len**alpha

    def __post_init__(self):
        if self.max_len < 1 or self.beam_width < 1:
            raise ValueError("max_len and beam_width must be >= 1")
        if self.mode not in ("greedy", "beam"):
            raise ValueError(f"mode must be greedy or beam, got {self.mode!r}")


def init_decoder(model: DualEncoderModel, context_ids: list[int],
                 target_char_ids: list[int]
                 ) -> tuple[np.ndarray, LSTMState, np.ndarray]:
    """Encode the inputs and return (encoder states, initial decoder state,
    initial attention context = zeros)."""
    if len(context_ids) == 0:
        raise ValueError("empty context")
    from .layers import lstm_encode  # local import keeps module load light
    ctx_emb = embed(model.context_table(), list(context_ids))
    henc, ctx_final, _ = lstm_encode(model.context_cell, ctx_emb)
    if model.variant == "dual":
        tgt_emb = embed(model.char_emb, list(target_char_ids))
        _, tgt_final, _ = lstm_encode(model.target_cell, tgt_emb)
        state = LSTMState(fuse(ctx_final.h, tgt_final.h, model.fusion_h),
                          fuse(ctx_final.m, tgt_final.m, model.fusion_m))
    else:
        state = ctx_final
    return henc, state, np.zeros((1, model.config.hidden))


def decode_step(model: DualEncoderModel, henc: np.ndarray, state: LSTMState,
                ctx: np.ndarray, token_id: int
                ) -> tuple[np.ndarray, LSTMState, np.ndarray]:
    """One decoder step; returns (log-probability row, new state, new context)."""
    x = np.concatenate((model.word_emb.table[token_id:token_id + 1], ctx), axis=1)
    new_state, _ = lstm_step(model.decoder_cell, x, state)
    out, _ = attend(model.attention, henc, new_state.h)
    logits = project(model.projection, out.combined)
    return log_softmax_row(logits), new_state, out.context


def greedy_decode(model: DualEncoderModel, context_ids: list[int],
                  target_char_ids: list[int], cfg: DecodeConfig | None = None
                  ) -> list[int]:
    cfg = cfg or DecodeConfig()
    henc, state, ctx = init_decoder(model, context_ids, target_char_ids)
    tokens: list[int] = []
    prev = vocab_mod.BOS
    for _ in range(cfg.max_len):
        logp, state, ctx = decode_step(model, henc, state, ctx, prev)
        tok = int(np.argmax(logp))   # first max = lowest id on ties
        if tok == vocab_mod.EOS:
            break
        tokens.append(tok)
        prev = tok
    return tokens


@dataclass
class _Hyp:
    tokens: tuple[int, ...]
    score: float
    state: LSTMState
    ctx: np.ndarray
    prev: int


def _normalized(score: float, length: int, alpha: float) -> float:
    return score / max(length, 1) ** alpha


def beam_decode(model: DualEncoderModel, context_ids: list[int],
                target_char_ids: list[int], cfg: DecodeConfig | None = None
                ) -> list[tuple[list[int], float]]:
    """Returns up to beam_width finished hypotheses as (tokens, normalized
    score), best first."""
    cfg = cfg or DecodeConfig(mode="beam")
    henc, state, ctx = init_decoder(model, context_ids, target_char_ids)
    live = [_Hyp((), 0.0, state, ctx, vocab_mod.BOS)]
    finished: list[tuple[tuple[int, ...], float]] = []
    for _ in range(cfg.max_len):
        candidates: list[tuple[float, tuple[int, ...], int, LSTMState, np.ndarray]] = []
        for hyp in live:
            logp, new_state, new_ctx = decode_step(
                model, henc, hyp.state, hyp.ctx, hyp.prev)
            row = logp.ravel()
            k = min(cfg.beam_width, row.shape[0])
            top = np.lexsort((np.arange(row.shape[0]), -row))[:k]
            for tok in top:
                candidates.append((hyp.score + float(row[tok]),
                                   hyp.tokens + (int(tok),),
                                   int(tok), new_state, new_ctx))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        live = []
        for score, tokens, tok, new_state, new_ctx in candidates[:cfg.beam_width]:
            if tok == vocab_mod.EOS:
                finished.append((tokens[:-1], score))
            else:
                live.append(_Hyp(tokens, score, new_state, new_ctx, tok))
        if not live:
            break
    for hyp in live:   # horizon reached without EOS
        finished.append((hyp.tokens, hyp.score))
    ranked = sorted(
        finished,
        key=lambda f: (-_normalized(f[1], len(f[0]), cfg.length_norm), f[0]))
    return [(list(tokens), _normalized(score, len(tokens), cfg.length_norm))
            for tokens, score in ranked[:cfg.beam_width]]
