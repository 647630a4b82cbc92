"""Corpus ingestion, entry-disjoint splitting, and training-pair construction.

The corpus is UTF-8 JSON lines, one record per line with string fields
`target`, `definition`, `example`; unknown fields are ignored. Malformed lines
are counted and reported, and loading aborts only when more than 1% of the
non-blank lines are bad. A dictionary entry with several definitions or
examples arrives flattened as several records.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import CONTEXT_CAP, OUTPUT_CAP, TARGET_CAP
from .seeding import derive_seed
from .vocab import Vocabulary, tokenize_chars, tokenize_words

log = logging.getLogger(__name__)

MALFORMED_ABORT_FRACTION = 0.01


class DataError(Exception):
    """Unusable corpus, manifest, or split request."""


@dataclass(frozen=True)
class Entry:
    """One dictionary record: a target expression, its definition, and a
    usage example containing (usually) the target."""
    target: str
    definition: str
    example: str


@dataclass(frozen=True)
class SequencePair:
    """One training item: context word ids, target char ids, output word ids."""
    context_ids: tuple[int, ...]
    target_char_ids: tuple[int, ...]
    output_ids: tuple[int, ...]


def _parse_line(line: str) -> Entry | None:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    fields = {}
    for key in ("target", "definition", "example"):
        val = obj.get(key)
        if not isinstance(val, str):
            return None
        fields[key] = val
    if not fields["target"] or not fields["definition"]:
        return None
    return Entry(**fields)


def load_corpus(path: str | Path, strict: bool = False) -> list[Entry]:
    """Load all well-formed records; abort if more than 1% of lines are bad.

    With strict=True, entries whose example does not contain the target
    (case-folded substring test) are dropped; by default they are kept since
    crowd-sourced examples are noisy.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    entries: list[Entry] = []
    malformed: list[int] = []
    total = 0
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        total += 1
        entry = _parse_line(line)
        if entry is None:
            malformed.append(lineno)
        else:
            entries.append(entry)
    if total == 0:
        log.warning("corpus %s is empty", path)
        return []
    if len(malformed) / total > MALFORMED_ABORT_FRACTION:
        shown = ", ".join(map(str, malformed[:20]))
        raise DataError(
            f"{path}: {len(malformed)} of {total} lines malformed "
            f"(>{MALFORMED_ABORT_FRACTION:.0%}); first bad lines: {shown}")
    if malformed:
        log.warning("%s: skipped %d malformed lines (%s)", path, len(malformed),
                    ", ".join(map(str, malformed[:20])))
    if strict:
        kept = [e for e in entries
                if e.target.casefold() in e.example.casefold()]
        dropped = len(entries) - len(kept)
        if dropped:
            log.info("strict mode dropped %d entries whose example does not "
                     "contain the target", dropped)
        entries = kept
    return entries


def split_entries(entries: list[Entry], test_fraction: float, seed: int
                  ) -> tuple[list[Entry], list[Entry]]:
    """Split by case-folded target expression: every distinct target lands
    wholly in train or test. Deterministic under the seed."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    targets = sorted({e.target.casefold() for e in entries})
    if len(targets) < 2:
        raise DataError(f"need at least 2 distinct targets to split, "
                        f"got {len(targets)}")
    k = round(len(targets) * test_fraction)
    if k < 1 or k >= len(targets):
        raise DataError(
            f"test_fraction {test_fraction} leaves no usable split of "
            f"{len(targets)} targets (test side would take {k})")
    rng = np.random.default_rng(derive_seed(seed, "split"))
    order = rng.permutation(len(targets))
    test_targets = {targets[i] for i in order[:k]}
    train = [e for e in entries if e.target.casefold() not in test_targets]
    test = [e for e in entries if e.target.casefold() in test_targets]
    return train, test


def make_pairs(entries: list[Entry], word_vocab: Vocabulary,
               char_vocab: Vocabulary, char_context: bool = False
               ) -> list[SequencePair]:
    """One pair per entry: context = tokenized example (characters when
    char_context, for the full char-level variant), target = characters of the
    expression, output = tokenized definition. Sequence caps are applied by
    truncation; entries that tokenize to an empty context or output are
    dropped and counted."""
    pairs: list[SequencePair] = []
    dropped = 0
    truncated = 0
    for entry in entries:
        if char_context:
            context_tokens = tokenize_chars(entry.example)
        else:
            context_tokens = tokenize_words(entry.example)
        output_tokens = tokenize_words(entry.definition)
        target_tokens = tokenize_chars(entry.target)
        if not context_tokens or not output_tokens or not target_tokens:
            dropped += 1
            continue
        context_vocab = char_vocab if char_context else word_vocab
        context = context_vocab.encode(context_tokens)
        target = char_vocab.encode(target_tokens)
        output = word_vocab.encode(output_tokens)
        if len(context) > CONTEXT_CAP or len(target) > TARGET_CAP \
                or len(output) > OUTPUT_CAP:
            truncated += 1
        pairs.append(SequencePair(
            tuple(context[:CONTEXT_CAP]),
            tuple(target[:TARGET_CAP]),
            tuple(output[:OUTPUT_CAP])))
    if dropped:
        log.warning("dropped %d entries with empty tokenizations", dropped)
    if truncated:
        log.warning("truncated %d pairs to caps (context %d, target %d, output %d)",
                    truncated, CONTEXT_CAP, TARGET_CAP, OUTPUT_CAP)
    return pairs


def save_entries(entries: list[Entry], path: str | Path) -> None:
    """Write entries as canonical JSON lines (byte-stable across runs)."""
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(json.dumps(
                {"target": e.target, "definition": e.definition,
                 "example": e.example},
                ensure_ascii=False, sort_keys=True, separators=(",", ":")))
            f.write("\n")
