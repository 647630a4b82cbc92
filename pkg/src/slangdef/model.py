"""The dual-encoder attentive sequence-to-sequence model and its variants.

A word-level LSTM reads the context sentence; for the dual variant a second,
character-level LSTM reads the target expression, and the two final states are
merged by a learned affine fusion (applied to the hidden state and the cell
memory separately) to initialize the decoder. The decoder is an LSTM whose
step-t input is [embedding of the previous output token ; previous attention
context]; attention always runs over the context-encoder states, and the
[context ; state] concatenation feeds the output projection.

Variants:
  single - context encoder only; the decoder starts from its final state.
  dual   - context + target encoders merged by fusion.
  char   - the context itself is character-level; otherwise like single.

Checkpoints are a small binary container: 8 magic bytes, a format version,
a JSON header (variant, dims, vocab hashes, seed, named parameter shapes,
optional extras), then the raw little-endian float64 parameter blocks in
header order. See README for the byte-level layout.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, vocab as vocab_mod
from .attention import AttentionParams, init_attention
from .layers import (
    INIT_SCALE,
    EmbeddingTable,
    LSTMCellParams,
    LSTMSequenceCache,
    LSTMState,
    Projection,
    embed,
    embedding_grad,
    init_embedding,
    init_lstm,
    init_projection,
    lstm_backward,
    lstm_encode,
)
from .numeric import Matrix, matmul
from .seeding import derive_seed

log = logging.getLogger(__name__)

VARIANTS = ("single", "dual", "char")

CONTEXT_CAP = 64   # words (or chars for the char variant)
TARGET_CAP = 32    # characters
OUTPUT_CAP = 32    # words

CHECKPOINT_MAGIC = b"SLANGDEF"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    """Unreadable, corrupt, or incompatible checkpoint file."""


@dataclass
class ModelConfig:
    """Architecture knobs; embedding and attention widths default to hidden."""
    variant: str = "dual"
    hidden: int = 64
    word_embed: int | None = None
    char_embed: int | None = None
    attn: int | None = None
    layers: int = 1   # knob kept for completeness; all provided math assumes 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.word_embed is None:
            self.word_embed = self.hidden
        if self.char_embed is None:
            self.char_embed = self.hidden
        if self.attn is None:
            self.attn = self.hidden
        if self.layers != 1:
            raise NotImplementedError("multi-layer encoders are not implemented")


@dataclass
class FusionParams:
    """h_new = h1 W1 + h2 W2 + B, merging the two encoder representations."""
    w1: Matrix
    w2: Matrix
    b: Matrix


def init_fusion(hidden_dim: int, rng: np.random.Generator) -> FusionParams:
    return FusionParams(
        rng.uniform(-INIT_SCALE, INIT_SCALE, (hidden_dim, hidden_dim)),
        rng.uniform(-INIT_SCALE, INIT_SCALE, (hidden_dim, hidden_dim)),
        np.zeros((1, hidden_dim)),
    )


def fuse(h1: Matrix, h2: Matrix, p: FusionParams) -> Matrix:
    """The affine combination h1 W1 + h2 W2 + B."""
    return matmul(h1, p.w1) + matmul(h2, p.w2) + p.b


def fuse_backward(h1: Matrix, h2: Matrix, p: FusionParams, grad: Matrix
                  ) -> tuple[dict[str, Matrix], Matrix, Matrix]:
    grads = {"w1": h1.T @ grad, "w2": h2.T @ grad, "b": grad.copy()}
    return grads, grad @ p.w1.T, grad @ p.w2.T


class DualEncoderModel:
    """Parameter container for all three variants plus forward/backward."""

    def __init__(self, config: ModelConfig, word_vocab_size: int,
                 char_vocab_size: int, seed: int,
                 word_vocab_hash: str = "", char_vocab_hash: str = ""):
        self.config = config
        self.word_vocab_size = word_vocab_size
        self.char_vocab_size = char_vocab_size
        self.seed = seed
        self.word_vocab_hash = word_vocab_hash
        self.char_vocab_hash = char_vocab_hash
        # groups are created lazily by init_model / load_checkpoint
        self.word_emb: EmbeddingTable | None = None
        self.char_emb: EmbeddingTable | None = None
        self.context_cell: LSTMCellParams | None = None
        self.target_cell: LSTMCellParams | None = None
        self.fusion_h: FusionParams | None = None
        self.fusion_m: FusionParams | None = None
        self.decoder_cell: LSTMCellParams | None = None
        self.attention: AttentionParams | None = None
        self.projection: Projection | None = None

    # -- structure ---------------------------------------------------------

    @property
    def variant(self) -> str:
        return self.config.variant

    def context_table(self) -> EmbeddingTable:
        return self.char_emb if self.variant == "char" else self.word_emb

    def parameters(self) -> dict[str, np.ndarray]:
        """Name -> array, in a fixed order; the arrays are the live ones."""
        groups: list[tuple[str, object]] = [("word_emb", self.word_emb)]
        if self.variant in ("dual", "char"):
            groups.append(("char_emb", self.char_emb))
        groups.append(("ctx", self.context_cell))
        if self.variant == "dual":
            groups += [("tgt", self.target_cell),
                       ("fuse_h", self.fusion_h), ("fuse_m", self.fusion_m)]
        groups += [("dec", self.decoder_cell), ("attn", self.attention),
                   ("proj", self.projection)]
        out: dict[str, np.ndarray] = {}
        for name, group in groups:
            if isinstance(group, EmbeddingTable):
                out[name] = group.table
            elif isinstance(group, LSTMCellParams):
                out[f"{name}.wi"] = group.wi
                out[f"{name}.wf"] = group.wf
                out[f"{name}.wo"] = group.wo
                out[f"{name}.wc"] = group.wc
            elif isinstance(group, FusionParams):
                out[f"{name}.w1"] = group.w1
                out[f"{name}.w2"] = group.w2
                out[f"{name}.b"] = group.b
            elif isinstance(group, AttentionParams):
                out[f"{name}.w1"] = group.w1
                out[f"{name}.w2"] = group.w2
                out[f"{name}.v"] = group.v
            elif isinstance(group, Projection):
                out[f"{name}.w"] = group.w
                out[f"{name}.b"] = group.b
            else:
                raise AssertionError(f"parameter group {name} missing")
        return out

    # -- forward / backward --------------------------------------------------

    def forward(self, context_ids: list[int], target_char_ids: list[int],
                output_ids: list[int]) -> "ForwardResult":
        """Teacher-forced forward pass; returns per-step logits, the summed
        cross-entropy over the output tokens plus EOS, and backward caches."""
        if len(context_ids) == 0:
            raise ValueError("empty context")
        if len(output_ids) == 0:
            raise ValueError("empty output")
        ctx_emb = embed(self.context_table(), list(context_ids))
        henc, ctx_final, ctx_cache = lstm_encode(self.context_cell, ctx_emb)
        tgt_cache = None
        tgt_final = None
        if self.variant == "dual":
            if len(target_char_ids) == 0:
                raise ValueError("empty target expression")
            tgt_emb = embed(self.char_emb, list(target_char_ids))
            _, tgt_final, tgt_cache = lstm_encode(self.target_cell, tgt_emb)
            h0 = fuse(ctx_final.h, tgt_final.h, self.fusion_h)
            m0 = fuse(ctx_final.m, tgt_final.m, self.fusion_m)
        else:
            h0, m0 = ctx_final.h, ctx_final.m
        dec_input_ids = [vocab_mod.BOS] + list(output_ids)
        targets = list(output_ids) + [vocab_mod.EOS]
        dec_emb = embed(self.word_emb, dec_input_ids)
        k = kernels.active()
        (loss, xs, hs, ms, is_, fs, os_, cs, tus, ats, ctxs, logits, probs,
         _hw1) = k.decoder_forward(
            self.decoder_cell.wi, self.decoder_cell.wf,
            self.decoder_cell.wo, self.decoder_cell.wc,
            self.attention.w1, self.attention.w2, self.attention.v.ravel(),
            self.projection.w, self.projection.b.ravel(),
            dec_emb, henc, h0.ravel(), m0.ravel(),
            np.asarray(targets, dtype=np.int64))
        cache = ForwardCache(
            context_ids=list(context_ids), target_char_ids=list(target_char_ids),
            dec_input_ids=dec_input_ids, targets=targets,
            ctx_cache=ctx_cache, tgt_cache=tgt_cache,
            ctx_final=ctx_final, tgt_final=tgt_final, h0=h0, m0=m0,
            henc=henc, dec_emb=dec_emb,
            dec_arrays=(xs, hs, ms, is_, fs, os_, cs, tus, ats, ctxs, probs))
        return ForwardResult(float(loss), logits, cache)

    def backward(self, cache: "ForwardCache") -> dict[str, np.ndarray]:
        """Analytic gradients of the forward loss for every parameter."""
        k = kernels.active()
        xs, hs, ms, is_, fs, os_, cs, tus, ats, ctxs, probs = cache.dec_arrays
        (dwi, dwf, dwo, dwc, dwa1, dwa2, dva, dwp, dbp, demb_rows, dhenc,
         dh0, dm0) = k.decoder_backward(
            self.decoder_cell.wi, self.decoder_cell.wf,
            self.decoder_cell.wo, self.decoder_cell.wc,
            self.attention.w1, self.attention.w2, self.attention.v.ravel(),
            self.projection.w, self.projection.b.ravel(),
            cache.dec_emb, cache.henc, cache.h0.ravel(), cache.m0.ravel(),
            np.asarray(cache.targets, dtype=np.int64),
            xs, hs, ms, is_, fs, os_, cs, tus, ats, ctxs, probs)
        grads: dict[str, np.ndarray] = {
            "dec.wi": dwi, "dec.wf": dwf, "dec.wo": dwo, "dec.wc": dwc,
            "attn.w1": dwa1, "attn.w2": dwa2, "attn.v": dva.reshape(-1, 1),
            "proj.w": dwp, "proj.b": dbp.reshape(1, -1),
        }
        word_grad = embedding_grad(self.word_emb, cache.dec_input_ids, demb_rows)
        dh0 = dh0.reshape(1, -1)
        dm0 = dm0.reshape(1, -1)
        if self.variant == "dual":
            fh_grads, dh1, dh2 = fuse_backward(
                cache.ctx_final.h, cache.tgt_final.h, self.fusion_h, dh0)
            fm_grads, dm1, dm2 = fuse_backward(
                cache.ctx_final.m, cache.tgt_final.m, self.fusion_m, dm0)
            for key, g in fh_grads.items():
                grads[f"fuse_h.{key}"] = g
            for key, g in fm_grads.items():
                grads[f"fuse_m.{key}"] = g
            tgt_zeros = np.zeros_like(cache.tgt_cache.hs)
            tgt_grads, dxs_tgt, _ = lstm_backward(
                cache.tgt_cache, tgt_zeros, LSTMState(dh2, dm2))
            for key, g in tgt_grads.items():
                grads[f"tgt.{key}"] = g
            grads["char_emb"] = embedding_grad(
                self.char_emb, cache.target_char_ids, dxs_tgt)
            enc_final_grad = LSTMState(dh1, dm1)
        else:
            enc_final_grad = LSTMState(dh0, dm0)
        ctx_grads, dxs_ctx, _ = lstm_backward(cache.ctx_cache, dhenc, enc_final_grad)
        for key, g in ctx_grads.items():
            grads[f"ctx.{key}"] = g
        if self.variant == "char":
            grads["char_emb"] = embedding_grad(
                self.char_emb, cache.context_ids, dxs_ctx)
            grads["word_emb"] = word_grad
        else:
            grads["word_emb"] = word_grad + embedding_grad(
                self.word_emb, cache.context_ids, dxs_ctx)
        return grads


@dataclass
class ForwardCache:
    context_ids: list[int]
    target_char_ids: list[int]
    dec_input_ids: list[int]
    targets: list[int]
    ctx_cache: LSTMSequenceCache
    tgt_cache: LSTMSequenceCache | None
    ctx_final: LSTMState
    tgt_final: LSTMState | None
    h0: Matrix
    m0: Matrix
    henc: np.ndarray
    dec_emb: np.ndarray
    dec_arrays: tuple = field(repr=False, default=())


@dataclass
class ForwardResult:
    loss: float
    logits: np.ndarray   # steps x vocab
    cache: ForwardCache


def init_model(config: ModelConfig, word_vocab_size: int, char_vocab_size: int,
               seed: int, word_vocab_hash: str = "", char_vocab_hash: str = "",
               zero_init: bool = False) -> DualEncoderModel:
    """Build a model with uniform [-0.08, 0.08] seeded parameters.

    `seed` is the master run seed; the draws come from its "init" sub-stream.
    Groups are created in a fixed order (word_emb, char_emb, context cell,
    target cell, fusions, decoder cell, attention, projection) so a given
    (config, seed) pair always yields bit-identical parameters.
    """
    m = DualEncoderModel(config, word_vocab_size, char_vocab_size, seed,
                         word_vocab_hash, char_vocab_hash)
    cfg = config
    if zero_init:
        class _Zeros:
            def uniform(self, lo, hi, shape):
                return np.zeros(shape)
        rng = _Zeros()
    else:
        rng = np.random.default_rng(derive_seed(seed, "init"))
    m.word_emb = init_embedding(word_vocab_size, cfg.word_embed, rng)
    if cfg.variant in ("dual", "char"):
        if char_vocab_size <= 0:
            raise ValueError(f"variant {cfg.variant!r} needs a character vocabulary")
        m.char_emb = init_embedding(char_vocab_size, cfg.char_embed, rng)
    ctx_in = cfg.char_embed if cfg.variant == "char" else cfg.word_embed
    m.context_cell = init_lstm(ctx_in, cfg.hidden, rng)
    if cfg.variant == "dual":
        m.target_cell = init_lstm(cfg.char_embed, cfg.hidden, rng)
        m.fusion_h = init_fusion(cfg.hidden, rng)
        m.fusion_m = init_fusion(cfg.hidden, rng)
    m.decoder_cell = init_lstm(cfg.word_embed + cfg.hidden, cfg.hidden, rng)
    m.attention = init_attention(cfg.hidden, cfg.attn, rng)
    m.projection = init_projection(2 * cfg.hidden, word_vocab_size, rng)
    return m


def clip_ids(ids: list[int], cap: int, what: str) -> list[int]:
    """Truncate to the module cap, warning once per call when it bites."""
    if len(ids) > cap:
        log.warning("%s length %d exceeds cap %d; truncating", what, len(ids), cap)
        return list(ids[:cap])
    return list(ids)


# -- checkpoint I/O -----------------------------------------------------------


def save_checkpoint(model: DualEncoderModel, path: str | Path,
                    extra: dict | None = None) -> None:
    """Write the versioned binary container described in the module docstring."""
    params = model.parameters()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "variant": model.config.variant,
        "dims": {
            "hidden": model.config.hidden,
            "word_embed": model.config.word_embed,
            "char_embed": model.config.char_embed,
            "attn": model.config.attn,
            "word_vocab": model.word_vocab_size,
            "char_vocab": model.char_vocab_size,
        },
        "word_vocab_sha256": model.word_vocab_hash,
        "char_vocab_sha256": model.char_vocab_hash,
        "seed": model.seed,
        "params": [
            {"name": name, "rows": int(a.shape[0]), "cols": int(a.shape[1])}
            for name, a in params.items()
        ],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for a in params.values():
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_header(path: str | Path) -> tuple[dict, int]:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a slangdef checkpoint (bad magic)")
        raw = f.read(8)
        if len(raw) < 8:
            raise CheckpointError(f"{path}: truncated header")
        version, hlen = struct.unpack("<II", raw)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: format version {version} unsupported "
                f"(expected {CHECKPOINT_VERSION})")
        blob = f.read(hlen)
        if len(blob) < hlen:
            raise CheckpointError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    return header, len(CHECKPOINT_MAGIC) + 8 + hlen


def peek_checkpoint(path: str | Path) -> dict:
    """Read and validate just the header."""
    return _read_header(path)[0]


def load_checkpoint(path: str | Path,
                    word_vocab: "vocab_mod.Vocabulary | None" = None,
                    char_vocab: "vocab_mod.Vocabulary | None" = None
                    ) -> DualEncoderModel:
    """Rebuild a model bit-exactly; optional vocabularies are hash-checked."""
    header, offset = _read_header(path)
    dims = header["dims"]
    config = ModelConfig(variant=header["variant"], hidden=dims["hidden"],
                         word_embed=dims["word_embed"],
                         char_embed=dims["char_embed"], attn=dims["attn"])
    if word_vocab is not None:
        if len(word_vocab) != dims["word_vocab"]:
            raise CheckpointError(
                f"{path}: word vocabulary size {len(word_vocab)} does not match "
                f"checkpoint ({dims['word_vocab']})")
        if header["word_vocab_sha256"] and \
                word_vocab.content_hash() != header["word_vocab_sha256"]:
            raise CheckpointError(
                f"{path}: word vocabulary hash mismatch; the checkpoint was "
                f"trained with a different vocabulary")
    if char_vocab is not None and config.variant in ("dual", "char"):
        if len(char_vocab) != dims["char_vocab"]:
            raise CheckpointError(
                f"{path}: char vocabulary size {len(char_vocab)} does not match "
                f"checkpoint ({dims['char_vocab']})")
        if header["char_vocab_sha256"] and \
                char_vocab.content_hash() != header["char_vocab_sha256"]:
            raise CheckpointError(
                f"{path}: char vocabulary hash mismatch; the checkpoint was "
                f"trained with a different vocabulary")
    model = init_model(config, dims["word_vocab"], dims["char_vocab"],
                       header["seed"], header["word_vocab_sha256"],
                       header["char_vocab_sha256"], zero_init=True)
    params = model.parameters()
    declared = header["params"]
    if [d["name"] for d in declared] != list(params.keys()):
        raise CheckpointError(f"{path}: parameter blocks do not match the "
                              f"{config.variant} variant layout")
    data = Path(path).read_bytes()
    pos = offset
    for d in declared:
        arr = params[d["name"]]
        if arr.shape != (d["rows"], d["cols"]):
            raise CheckpointError(
                f"{path}: parameter {d['name']} has shape {d['rows']}x{d['cols']} "
                f"but the {config.variant} layout expects {arr.shape}")
        nbytes = d["rows"] * d["cols"] * 8
        chunk = data[pos:pos + nbytes]
        if len(chunk) < nbytes:
            raise CheckpointError(f"{path}: truncated parameter block {d['name']}")
        arr[...] = np.frombuffer(chunk, dtype="<f8").reshape(d["rows"], d["cols"])
        pos += nbytes
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return model
