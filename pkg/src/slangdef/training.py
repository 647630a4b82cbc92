"""Mini-batch SGD with plateau-halving learning rate and gradient clipping.

The paper-style recipe pinned down concretely: per step, per-example losses
are summed over the batch, gradients are scaled by 1/batch and clipped to a
global norm, then applied with plain SGD. After every epoch the dev loss is
measured; `patience` epochs without improvement halve the learning rate, and
training stops at max_epochs or once the rate falls below 1e-4.

Shuffling is seed-owned: pairs are put into a canonical order first, so the
trajectory depends only on (multiset of pairs, seed), never on input order.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .data import SequencePair
from .model import DualEncoderModel, ModelConfig
from .seeding import derive_seed

log = logging.getLogger(__name__)

MIN_LR = 1e-4


class NonFiniteLossError(Exception):
    """Training produced NaN/Inf; carries the step, lr, and batch summary."""

    def __init__(self, step: int, lr: float, batch_note: str):
        super().__init__(f"non-finite loss at step {step} (lr={lr:g}); "
                         f"batch: {batch_note}")
        self.step = step
        self.lr = lr
        self.batch_note = batch_note


@dataclass
class TrainConfig:
    initial_lr: float = 0.5
    lr_decay: float = 0.5
    patience: int = 1
    clip_norm: float = 5.0
    batch_size: int = 8
    max_epochs: int = 20
    seed: int = 0
    model: ModelConfig | None = None

    def __post_init__(self):
        if min(self.clip_norm, self.batch_size,
               self.max_epochs, self.patience) <= 0:
            raise ValueError("all training knobs must be positive")
        if self.initial_lr < 0:   # exactly 0 is the null-update sanity mode
            raise ValueError(f"initial_lr must be >= 0, got {self.initial_lr}")
        if not 0.0 < self.lr_decay < 1.0:
            raise ValueError(f"lr_decay must be in (0, 1), got {self.lr_decay}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float
    lr: float
    seconds: float

    def as_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "dev_loss": self.dev_loss, "lr": self.lr,
                "seconds": self.seconds}


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    lr: float = 0.5
    best_dev: float = math.inf
    bad_epochs: int = 0
    history: list[EpochRecord] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"epoch": self.epoch, "step": self.step, "lr": self.lr,
                "best_dev": self.best_dev, "bad_epochs": self.bad_epochs,
                "history": [r.as_dict() for r in self.history]}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainState":
        return cls(epoch=d["epoch"], step=d["step"], lr=d["lr"],
                   best_dev=d["best_dev"], bad_epochs=d["bad_epochs"],
                   history=[EpochRecord(**r) for r in d["history"]])


def pair_tokens(pair: SequencePair) -> int:
    """Predicted positions for one pair: the output tokens plus EOS."""
    return len(pair.output_ids) + 1


def evaluate_loss(model: DualEncoderModel, pairs: list[SequencePair]) -> float:
    """Mean per-token cross-entropy; pure, no parameter mutation."""
    if not pairs:
        raise ValueError("cannot evaluate on an empty set")
    total = 0.0
    tokens = 0
    for p in pairs:
        total += model.forward(list(p.context_ids), list(p.target_char_ids),
                               list(p.output_ids)).loss
        tokens += pair_tokens(p)
    return total / tokens


def _epoch_batches(pairs: list[SequencePair], batch_size: int,
                   shuffle_seed: int, epoch: int) -> list[list[SequencePair]]:
    """Seed-shuffle, then stable-sort into context-length buckets, then
    shuffle the batch order. Depends only on the pair multiset and the seed."""
    rng = np.random.default_rng([shuffle_seed, epoch])
    order = rng.permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    shuffled.sort(key=lambda p: len(p.context_ids))  # stable: keeps shuffle within a length
    batches = [shuffled[i:i + batch_size]
               for i in range(0, len(shuffled), batch_size)]
    if len(batches) > 1:
        border = rng.permutation(len(batches))
        batches = [batches[i] for i in border]
    return batches


def clip_global_norm(grads: dict[str, np.ndarray], clip_norm: float) -> float:
    """Scale the whole gradient dict so its global L2 norm is <= clip_norm.
    Returns the pre-clip norm."""
    sq = 0.0
    for g in grads.values():
        sq += float(np.sum(g * g))
    norm = math.sqrt(sq)
    if norm > clip_norm:
        scale = clip_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train(model: DualEncoderModel, pairs_train: list[SequencePair],
          pairs_dev: list[SequencePair], cfg: TrainConfig,
          state: TrainState | None = None,
          epoch_hook: Callable[[DualEncoderModel, TrainState, bool], None] | None = None
          ) -> tuple[DualEncoderModel, TrainState]:
    """Run (or resume) the training loop; mutates the model in place.

    `epoch_hook(model, state, improved)` fires after every epoch (the
    checkpoint cadence: every epoch, plus best-so-far when improved is True).
    """
    if not pairs_train:
        raise ValueError("training set is empty")
    if state is None:
        state = TrainState(lr=cfg.initial_lr)
    canonical = sorted(pairs_train, key=lambda p: (
        p.context_ids, p.target_char_ids, p.output_ids))
    shuffle_seed = derive_seed(cfg.seed, "shuffle")
    params = model.parameters()
    while state.epoch < cfg.max_epochs and not 0.0 < state.lr < MIN_LR:
        started = time.perf_counter()
        epoch_loss = 0.0
        epoch_tokens = 0
        for batch in _epoch_batches(canonical, cfg.batch_size, shuffle_seed,
                                    state.epoch):
            grads: dict[str, np.ndarray] = {}
            batch_loss = 0.0
            for p in batch:
                result = model.forward(list(p.context_ids),
                                       list(p.target_char_ids),
                                       list(p.output_ids))
                batch_loss += result.loss
                for name, g in model.backward(result.cache).items():
                    if name in grads:
                        grads[name] += g
                    else:
                        grads[name] = g
                epoch_tokens += pair_tokens(p)
            if not math.isfinite(batch_loss):
                raise NonFiniteLossError(
                    state.step, state.lr,
                    f"{len(batch)} pairs, first context {batch[0].context_ids}")
            epoch_loss += batch_loss
            inv = 1.0 / len(batch)
            for g in grads.values():
                g *= inv
            clip_global_norm(grads, cfg.clip_norm)
            for name, arr in params.items():
                arr -= state.lr * grads[name]
            state.step += 1
        state.epoch += 1
        dev_loss = evaluate_loss(model, pairs_dev) if pairs_dev else \
            epoch_loss / epoch_tokens
        improved = dev_loss < state.best_dev
        if improved:
            state.best_dev = dev_loss
            state.bad_epochs = 0
        else:
            state.bad_epochs += 1
            if state.bad_epochs >= cfg.patience:
                state.lr *= cfg.lr_decay
                state.bad_epochs = 0
                log.info("epoch %d: no dev improvement, lr -> %g",
                         state.epoch, state.lr)
        record = EpochRecord(state.epoch, epoch_loss / epoch_tokens, dev_loss,
                             state.lr, time.perf_counter() - started)
        state.history.append(record)
        log.info("epoch %d: train %.4f dev %.4f lr %g (%.1fs)", record.epoch,
                 record.train_loss, record.dev_loss, record.lr, record.seconds)
        if epoch_hook is not None:
            epoch_hook(model, state, improved)
    return model, state
