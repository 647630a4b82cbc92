"""Shared test fixtures: independent oracles and synthetic corpora.

Everything here is deliberately written from the definitions, not from the
package code paths it checks.
"""

from __future__ import annotations

import math
from collections import Counter
from pathlib import Path

import numpy as np

from slangdef.data import Entry
from slangdef.model import DualEncoderModel, ModelConfig, init_model

REPO_ROOT = Path(__file__).resolve().parent.parent
SAMPLE_CORPUS = REPO_ROOT / "data" / "sample_corpus.jsonl"


# -- numeric oracles ------------------------------------------------------------


def triple_loop_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def scalar_lstm_step(wi, wf, wo, wc, x, h_prev, m_prev):
    """The six gate equations evaluated entry by entry with math.* calls."""
    z = list(x) + list(h_prev)
    hidden = len(h_prev)

    def gate(w, col, squash):
        acc = 0.0
        for j, zj in enumerate(z):
            acc += zj * w[j][col]
        return squash(acc)

    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    h_new, m_new = [], []
    for k in range(hidden):
        i = gate(wi, k, sig)
        f = gate(wf, k, sig)
        o = gate(wo, k, sig)
        c = gate(wc, k, math.tanh)
        m = m_prev[k] * f + i * c
        h_new.append(m * o)
        m_new.append(m)
    return h_new, m_new


def scalar_attention(w1, w2, v, encoder_states, decoder_state):
    """Direct evaluation of score / softmax / weighted-sum formulas."""
    t1 = len(encoder_states)
    attn_dim = len(v)
    hidden = len(decoder_state)
    scores = []
    for i in range(t1):
        s = 0.0
        for a in range(attn_dim):
            arg = 0.0
            for j in range(hidden):
                arg += encoder_states[i][j] * w1[j][a] + decoder_state[j] * w2[j][a]
            s += v[a] * math.tanh(arg)
        scores.append(s)
    mx = max(scores)
    exps = [math.exp(s - mx) for s in scores]
    total = sum(exps)
    weights = [e / total for e in exps]
    context = [sum(weights[i] * encoder_states[i][j] for i in range(t1))
               for j in range(hidden)]
    return weights, context


def reference_bleu(candidates, references):
    """Clean-room corpus BLEU-1/2 (clipped counts, corpus totals, BP)."""
    stats = {1: [0, 0], 2: [0, 0]}   # n -> [matched, total]
    c_len = sum(len(c) for c in candidates)
    r_len = sum(len(r) for r in references)
    for cand, ref in zip(candidates, references):
        for n in (1, 2):
            c_counts = Counter(tuple(cand[i:i + n])
                               for i in range(len(cand) - n + 1))
            r_counts = Counter(tuple(ref[i:i + n])
                               for i in range(len(ref) - n + 1))
            stats[n][0] += sum(min(c_counts[g], r_counts[g]) for g in c_counts)
            stats[n][1] += max(0, len(cand) - n + 1)
    p1 = stats[1][0] / stats[1][1] if stats[1][1] else 0.0
    p2 = stats[2][0] / stats[2][1] if stats[2][1] else 0.0
    bp = min(1.0, math.exp(1.0 - r_len / c_len)) if c_len else 0.0
    return 100.0 * bp * p1, 100.0 * bp * math.sqrt(p1 * p2), bp


# -- model builders ---------------------------------------------------------------


def toy_model(variant="dual", seed=0, hidden=3, word_vocab=7, char_vocab=6,
              word_embed=2, char_embed=2, attn=2, scale=0.6) -> DualEncoderModel:
    """Tiny model with unit-ish random parameters so finite differences are
    well above the double-precision noise floor."""
    cfg = ModelConfig(variant=variant, hidden=hidden, word_embed=word_embed,
                      char_embed=char_embed, attn=attn)
    m = init_model(cfg, word_vocab, char_vocab, seed)
    rng = np.random.default_rng(seed + 7919)
    for arr in m.parameters().values():
        arr[...] = rng.standard_normal(arr.shape) * scale
    return m


def random_probe(rng, variant="dual", word_vocab=7, char_vocab=6,
                 max_ctx=5, max_tgt=4, max_out=4):
    """Random (context, target, output) id lists valid for `toy_model` sizes."""
    ctx_vocab = char_vocab if variant == "char" else word_vocab
    ctx = list(rng.integers(4, ctx_vocab, rng.integers(1, max_ctx + 1)))
    tgt = list(rng.integers(4, char_vocab, rng.integers(1, max_tgt + 1)))
    out = list(rng.integers(4, word_vocab, rng.integers(1, max_out + 1)))
    return [int(i) for i in ctx], [int(i) for i in tgt], [int(i) for i in out]


def model_grad_check(model, ctx, tgt, out, h=1e-5):
    """Max norm-relative error between analytic and central-difference
    gradients over every parameter group."""
    from slangdef.numeric import finite_difference_gradient, relative_error
    result = model.forward(ctx, tgt, out)
    grads = model.backward(result.cache)
    worst = 0.0
    for name, arr in model.parameters().items():
        def f(x, arr=arr):
            saved = arr.copy()
            arr[...] = x
            loss = model.forward(ctx, tgt, out).loss
            arr[...] = saved
            return loss
        fd = finite_difference_gradient(f, arr, h=h)
        worst = max(worst, relative_error(grads[name], fd))
    return worst


# -- synthetic corpora -------------------------------------------------------------


CONSONANTS = "bdfgklmnprstvz"
VOWELS = "aeiou"


def pseudo_word(rng) -> str:
    n = rng.integers(2, 4)
    return "".join(CONSONANTS[rng.integers(len(CONSONANTS))]
                   + VOWELS[rng.integers(len(VOWELS))] for _ in range(n))


def two_slang_corpus(n_sentences=200, n_terms=20, seed=13) -> list[Entry]:
    """Sentences that each contain TWO distinct pseudo-slang terms; every
    sentence yields one entry per term, so a context-only model cannot tell
    which definition is being asked for."""
    rng = np.random.default_rng(seed)
    terms = []
    seen = set()
    while len(terms) < n_terms:
        w = pseudo_word(rng)
        if w not in seen:
            seen.add(w)
            terms.append(w)
    definitions = {}
    fillers = ["thing", "person", "place", "mood", "habit", "snack", "game",
               "dance", "noise", "plan"]
    styles = ["a very %s word", "the %s one", "a kind of %s", "truly %s stuff"]
    for idx, term in enumerate(terms):
        filler = fillers[idx % len(fillers)]
        style = styles[idx % len(styles)]
        definitions[term] = style % filler
    templates = [
        "honestly the %s was so %s today",
        "my friend called the %s rather %s again",
        "that %s felt completely %s last night",
        "everyone said the %s went %s at the party",
    ]
    entries = []
    for i in range(n_sentences):
        a, b = rng.choice(len(terms), size=2, replace=False)
        sentence = templates[int(rng.integers(len(templates)))] % (terms[a], terms[b])
        entries.append(Entry(terms[a], definitions[terms[a]], sentence))
        entries.append(Entry(terms[b], definitions[terms[b]], sentence))
    return entries


MORPHEMES = {
    "zorp": "angry", "blin": "happy", "quev": "sleepy", "drak": "loud",
    "mulf": "quiet", "snib": "clever", "trop": "clumsy", "gwen": "shiny",
    "plar": "rotten", "vusk": "frozen",
}
HEADS = {
    "ling": "person", "dorf": "place", "mex": "snack", "tano": "song",
    "ruff": "dog", "pilk": "drink", "sarn": "game", "wob": "hat",
}


def morph_corpus(n_entries=5000, seed=29) -> list[Entry]:
    """UD-style corpus whose slang words are morpheme compounds: the
    definition is readable off the characters ("zorpling" -> "an angry
    person"), so a character-level target encoder generalizes to unseen
    targets while a context-only model cannot."""
    rng = np.random.default_rng(seed)
    mods = list(MORPHEMES)
    heads = list(HEADS)
    templates = [
        "saw a real %s down by the station",
        "no way that %s shows up before noon",
        "my cousin keeps talking about some %s",
        "they sold the old %s at the market",
        "everyone online is obsessed with the %s now",
        "apparently the %s was outside all weekend",
    ]
    entries = []
    for _ in range(n_entries):
        mod = mods[int(rng.integers(len(mods)))]
        head = heads[int(rng.integers(len(heads)))]
        sep = "" if rng.random() < 0.5 else "o"
        term = mod + sep + head
        definition = f"an {MORPHEMES[mod]} {HEADS[head]}" \
            if MORPHEMES[mod][0] in "aeiou" else \
            f"a {MORPHEMES[mod]} {HEADS[head]}"
        sentence = templates[int(rng.integers(len(templates)))] % term
        entries.append(Entry(term, definition, sentence))
    return entries
