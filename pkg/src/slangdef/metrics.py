"""Corpus-level BLEU-1 / BLEU-2.

Modified n-gram precision with per-candidate clipping, aggregated over the
whole corpus before dividing; brevity penalty min(1, e^(1 - r/c)) from total
lengths; geometric mean over orders; reported on the 0-100 scale. Exactly one
reference per candidate, no smoothing: zero bigram matches honestly give
b2 = 0. An empty candidate contributes zero matches and zero length.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass


@dataclass
class BleuReport:
    b1: float
    b2: float
    brevity_penalty: float
    p1: float
    p2: float
    candidate_tokens: int
    reference_tokens: int
    matched_1: int
    total_1: int
    matched_2: int
    total_2: int

    def as_dict(self) -> dict:
        return {
            "b1": self.b1, "b2": self.b2,
            "brevity_penalty": self.brevity_penalty,
            "p1": self.p1, "p2": self.p2,
            "candidate_tokens": self.candidate_tokens,
            "reference_tokens": self.reference_tokens,
            "matched_1": self.matched_1, "total_1": self.total_1,
            "matched_2": self.matched_2, "total_2": self.total_2,
        }


def _ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: list[Sequence], references: list[Sequence]) -> BleuReport:
    """Score a corpus of (candidate, single reference) token sequences."""
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs "
                         f"{len(references)} references")
    if not candidates:
        raise ValueError("empty corpus")
    matched = [0, 0]
    total = [0, 0]
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for idx, n in enumerate((1, 2)):
            cgrams = _ngrams(cand, n)
            rgrams = _ngrams(ref, n)
            matched[idx] += sum(min(count, rgrams[g])
                                for g, count in cgrams.items())
            total[idx] += max(len(cand) - n + 1, 0)
    p1 = matched[0] / total[0] if total[0] else 0.0
    p2 = matched[1] / total[1] if total[1] else 0.0
    if cand_len == 0:
        bp = 0.0
    else:
        bp = min(1.0, math.exp(1.0 - ref_len / cand_len))
    b1 = 100.0 * bp * p1
    b2 = 100.0 * bp * math.sqrt(p1 * p2)
    return BleuReport(b1, b2, bp, p1, p2, cand_len, ref_len,
                      matched[0], total[0], matched[1], total[1])
