"""Classification F1 and the rationale-quality metric suite.

The four rationale metrics are operationalized here as deterministic,
embedding- and surface-based scores in [0, 1]: Relevance and SemSim are
cosine similarities of mean-pooled toy-encoder embeddings, Coherence chains
adjacent-sentence similarity, and Readability is a normalized Flesch Reading
Ease score. Reports note this operationalization in their footer.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .encoders import EncoderParams, encode_text, tokenize
from .errors import ValidationError
from .heads import Category

_SENTENCE_RE = re.compile(r"[.!?](?:\s+|$)")
_WORD_RE = re.compile(r"[A-Za-z0-9']+")
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")


# -- F1 ------------------------------------------------------------------------

def f1(preds: list[bool], golds: list[bool]) -> float:
    """Binary F1 on the positive class; 0.0 by convention when no true or
    predicted positives exist."""
    if len(preds) != len(golds):
        raise ValidationError(f"length mismatch {len(preds)} vs {len(golds)}")
    if not preds:
        raise ValidationError("empty prediction list")
    tp = sum(1 for p, g in zip(preds, golds) if p and g)
    fp = sum(1 for p, g in zip(preds, golds) if p and not g)
    fn = sum(1 for p, g in zip(preds, golds) if not p and g)
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def macro_f1(preds: list[Category], golds: list[Category]) -> float:
    """Unweighted mean of per-class F1 over all five categories.

    A class absent from both predictions and golds contributes 0.
    """
    if len(preds) != len(golds):
        raise ValidationError(f"length mismatch {len(preds)} vs {len(golds)}")
    per_class = []
    for cat in Category:
        tp = sum(1 for p, g in zip(preds, golds) if p == cat and g == cat)
        fp = sum(1 for p, g in zip(preds, golds) if p == cat and g != cat)
        fn = sum(1 for p, g in zip(preds, golds) if p != cat and g == cat)
        denom = 2 * tp + fp + fn
        per_class.append(2 * tp / denom if denom else 0.0)
    return sum(per_class) / len(per_class)


# -- readability -----------------------------------------------------------------

def split_sentences(text: str) -> list[str]:
    """Split on ., ! or ? followed by whitespace or end of text."""
    parts = [p.strip() for p in _SENTENCE_RE.split(text)]
    return [p for p in parts if p]


def count_syllables(word: str) -> int:
    """Vowel-group heuristic: contiguous [aeiouy] runs, dropping a silent
    trailing 'e' unless that would leave zero; at least 1 per word."""
    w = word.lower()
    n = len(_VOWEL_GROUP_RE.findall(w))
    if w.endswith("e") and n > 1:
        n -= 1
    return max(n, 1)


def readability(text: str) -> float:
    """Flesch Reading Ease clamped to [0, 100] and normalized to [0, 1]."""
    words = _WORD_RE.findall(text)
    if not words:
        raise ValidationError("readability needs at least one word")
    sentences = max(len(split_sentences(text)), 1)
    syllables = sum(count_syllables(w) for w in words)
    score = 206.835 - 1.015 * (len(words) / sentences) \
        - 84.6 * (syllables / len(words))
    return min(max(score, 0.0), 100.0) / 100.0


# -- embedding similarity ----------------------------------------------------------

def _pooled_embedding(text: str, enc: EncoderParams):
    tokens = tokenize(text, enc.vocab_size)[: enc.max_len]
    return encode_text(tokens, enc).values.mean_rows()


def semsim(a: str, b: str, enc: EncoderParams) -> float:
    """Cosine similarity of mean-pooled embeddings mapped to [0, 1]."""
    if not a.strip() or not b.strip():
        raise ValidationError("semsim needs non-empty strings")
    va = _pooled_embedding(a, enc)
    vb = _pooled_embedding(b, enc)
    dot = sum(x * y for x, y in zip(va.data, vb.data))
    na = math.sqrt(sum(x * x for x in va.data))
    nb = math.sqrt(sum(x * x for x in vb.data))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("degenerate zero-norm embedding")
    cos = max(-1.0, min(1.0, dot / (na * nb)))
    return (cos + 1.0) / 2.0


def relevance(rationale: str, meme_text: str, enc: EncoderParams) -> float:
    """How close the rationale stays to the meme content."""
    if not rationale.strip():
        raise ValidationError("empty rationale")
    return semsim(rationale, meme_text, enc)


def coherence(rationale: str, enc: EncoderParams) -> float:
    """Mean adjacent-sentence similarity; 1.0 for single-sentence rationales."""
    if not rationale.strip():
        raise ValidationError("empty rationale")
    sentences = split_sentences(rationale)
    if not sentences:
        raise ValidationError("rationale has no sentences")
    if len(sentences) == 1:
        return 1.0
    pair_scores = [semsim(sentences[i], sentences[i + 1], enc)
                   for i in range(len(sentences) - 1)]
    return sum(pair_scores) / len(pair_scores)


# -- report assembly -----------------------------------------------------------------

@dataclass
class MetricReport:
    mmc_f1: float
    macro_f1: float
    relevance: float
    coherence: float
    readability: float
    semsim: float


REPORT_COLUMNS = ["Model", "MMC (F1)", "Relevance", "Coherence",
                  "Readability", "SemSim"]

REPORT_FOOTER = ("Rationale metrics are deterministic embedding/surface "
                 "operationalizations computed by this tool.")


def round2(x: float) -> float:
    """Round half-up to 2 decimals (0.895 -> 0.90)."""
    return float(Decimal(repr(x)).quantize(Decimal("0.01"),
                                           rounding=ROUND_HALF_UP))


def report(rows: list[tuple[str, str, MetricReport]]) -> str:
    """Plain-text table of (setup, model, metrics), grouped by setup."""
    if not rows:
        raise ValidationError("no report rows")
    widths = [22, 9, 10, 10, 12, 7]
    header = " | ".join(c.ljust(w) for c, w in zip(REPORT_COLUMNS, widths))
    lines = [header, "-" * len(header)]
    current_setup = None
    for setup, model_name, m in rows:
        if setup != current_setup:
            lines.append(f"[{setup}]")
            current_setup = setup
        vals = [m.mmc_f1, m.relevance, m.coherence, m.readability, m.semsim]
        cells = [model_name.ljust(widths[0])]
        cells += [f"{round2(v):.2f}".ljust(w) for v, w in zip(vals, widths[1:])]
        lines.append(" | ".join(cells))
    lines.append("")
    lines.append(REPORT_FOOTER)
    return "\n".join(lines)


def report_csv_rows(rows: list[tuple[str, str, MetricReport]]) -> list[list]:
    out = [["setup", "model", "mmc_f1", "relevance", "coherence",
            "readability", "semsim"]]
    for setup, model_name, m in rows:
        out.append([setup, model_name] +
                   [f"{round2(v):.2f}" for v in
                    (m.mmc_f1, m.relevance, m.coherence, m.readability,
                     m.semsim)])
    return out
