"""Tokenization and vocabulary construction.

Word tokens are lowercased alphanumeric runs with each punctuation mark split
off as its own token; character tokens are the Unicode scalars of the
lowercased text (whitespace normalized to a single space so tokens survive the
one-token-per-line vocabulary file). Every vocabulary reserves ids 0-3 for
<pad>, <bos>, <eos>, <unk>.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")

_WORD_RE = re.compile(r"\w+|[^\w\s]")
_WS_RE = re.compile(r"\s")


def tokenize_words(text: str) -> list[str]:
    """Lowercase word split: "loltastic!!1!" -> [loltastic, !, !, 1, !]."""
    return _WORD_RE.findall(text.lower())


def tokenize_chars(text: str) -> list[str]:
    """Lowercased characters, any whitespace mapped to a plain space."""
    return list(_WS_RE.sub(" ", text.lower()))


@dataclass
class Vocabulary:
    """Dense bidirectional token<->id map; specials always occupy ids 0-3."""
    tokens: list[str]
    kind: str = "word"
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != SPECIALS:
            raise ValueError(f"first four tokens must be {SPECIALS}")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(tok, UNK) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise ValueError(f"token id {i} out of range for vocabulary of {len(self.tokens)}")
            out.append(self.tokens[i])
        return out

    def content_hash(self) -> str:
        return hashlib.sha256(self._serialize().encode("utf-8")).hexdigest()

    def _serialize(self) -> str:
        return "\n".join(self.tokens) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self._serialize(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, kind: str = "word") -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines, kind=kind)


def build(sequences: Iterable[list[str]], max_size: int | None = 50_000,
          min_count: int = 1, kind: str = "word") -> Vocabulary:
    """Keep the most frequent tokens (ties broken lexicographically) after the
    min_count filter; `max_size` counts the four specials."""
    if max_size is not None and max_size <= len(SPECIALS):
        raise ValueError(f"max_size must exceed {len(SPECIALS)}, got {max_size}")
    counts = Counter()
    for seq in sequences:
        counts.update(seq)
    candidates = [tok for tok, n in counts.items()
                  if n >= min_count and tok not in SPECIALS]
    candidates.sort(key=lambda tok: (-counts[tok], tok))
    if max_size is not None:
        candidates = candidates[: max_size - len(SPECIALS)]
    return Vocabulary(list(SPECIALS) + candidates, kind=kind)
