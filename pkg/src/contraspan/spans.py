"""Span extraction, mean-pooling of span embeddings, and negative mining.

Spans are half-open word-index intervals ``[start, end)`` over a single
sentence. Pooling averages the word vectors inside the interval; the
result feeds the contrastive objective, so it works on torch tensors
(keeping gradients) as well as numpy arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch

from .corpus import LabeledSentence, is_valid_iob2, tag_class

SPAN_SOURCES = ("gold", "predicted", "mined-negative", "label-agnostic")


class SpanError(ValueError):
    pass


class DegenerateSpanError(SpanError):
    """Normalization requested on a (numerically) zero vector."""


@dataclass(frozen=True)
class Span:
    sentence_id: str
    start: int
    end: int
    label: str
    source: str = "gold"

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise SpanError(f"need 0 <= start < end, got [{self.start}, {self.end})")
        if self.source not in SPAN_SOURCES:
            raise SpanError(f"unknown span source {self.source!r}")

    def __len__(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end

    def text(self, sentence: LabeledSentence) -> str:
        return " ".join(sentence.tokens[self.start:self.end])


@dataclass
class SpanEmbedding:
    span: Span
    z: Any
    normalized: bool

    def __post_init__(self):
        vec = self.z.detach().cpu().numpy() if isinstance(self.z, torch.Tensor) else np.asarray(self.z)
        if not np.all(np.isfinite(vec)):
            raise SpanError("span embedding contains non-finite values")
        if self.normalized and abs(float(np.linalg.norm(vec)) - 1.0) > 1e-6:
            raise SpanError("normalized flag set but vector norm differs from 1")


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def extract_gold_spans(sentence: LabeledSentence) -> list[Span]:
    """One span per maximal B-...I-... run; O positions yield nothing."""
    if not is_valid_iob2(sentence.labels):
        raise SpanError(f"sentence {sentence.id!r}: labels violate IOB2; repair first")
    spans: list[Span] = []
    start = None
    for i, tag in enumerate(sentence.labels + ["O"]):
        if start is not None and not tag.startswith("I-"):
            spans.append(Span(sentence.id, start, i, tag_class(sentence.labels[start]), "gold"))
            start = None
        if tag.startswith("B-"):
            start = i
    return spans


def extract_label_agnostic_spans(labels: list[str], sentence_id: str = "") -> list[Span]:
    """Cover the sentence with maximal same-class runs, O runs included.

    A B- tag opens a new run even after the same class, so adjacent gold
    spans stay separate and non-O runs match ``extract_gold_spans`` exactly
    on valid IOB2 input.
    """
    spans: list[Span] = []
    start = 0
    for i in range(1, len(labels) + 1):
        boundary = (
            i == len(labels)
            or tag_class(labels[i]) != tag_class(labels[start])
            or labels[i].startswith("B-")
        )
        if boundary:
            spans.append(Span(sentence_id, start, i, tag_class(labels[start]), "label-agnostic"))
            start = i
    return spans


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

def pool_span(enc: Any, span: Span, normalize: bool = True) -> SpanEmbedding:
    """Mean of word vectors ``start..end-1``, optionally L2-normalized.

    ``enc`` is an encoded sentence (uses its ``word_vectors``) or a bare
    (words, d) matrix. Torch input stays torch so pooling participates in
    autograd.
    """
    mat = getattr(enc, "word_vectors", enc)
    n_words = mat.shape[0]
    if span.end > n_words:
        raise SpanError(f"span [{span.start}, {span.end}) exceeds {n_words} words")
    rows = mat[span.start:span.end]
    if isinstance(mat, torch.Tensor):
        z = rows.mean(dim=0)
        if normalize:
            norm = torch.linalg.vector_norm(z)
            if float(norm.detach()) < 1e-12:
                raise DegenerateSpanError(f"zero vector for span {span}")
            z = z / norm
    else:
        z = np.mean(np.asarray(rows, dtype=np.float64), axis=0)
        if normalize:
            norm = float(np.linalg.norm(z))
            if norm < 1e-12:
                raise DegenerateSpanError(f"zero vector for span {span}")
            z = z / norm
    return SpanEmbedding(span=span, z=z, normalized=normalize)


# ---------------------------------------------------------------------------
# Negative mining
# ---------------------------------------------------------------------------

@dataclass
class MiningPolicy:
    """How to mine O-region spans as contrastive negatives.

    kind "surface-match" mines O windows whose tokens equal a known phrase,
    "random-window" samples O windows of length 1..max_window, and
    "surface-then-random" (default) pads surface matches with random
    windows. At most ``max_per_sentence`` spans are mined and none overlap
    gold spans or each other.
    """

    kind: str = "surface-then-random"
    phrases: list[str] = field(default_factory=list)
    max_per_sentence: int = 2
    max_window: int = 4

    def __post_init__(self):
        if self.kind not in ("surface-match", "random-window", "surface-then-random"):
            raise SpanError(f"unknown mining policy {self.kind!r}")
        if self.max_per_sentence < 0 or self.max_window < 1:
            raise SpanError("mining caps must be positive")


def _o_runs(labels: list[str]) -> list[tuple[int, int]]:
    return [(s.start, s.end) for s in extract_label_agnostic_spans(labels) if s.label == "O"]


def mine_negative_spans(
    sentence: LabeledSentence, policy: MiningPolicy, seed: int
) -> list[Span]:
    """Mine up to ``max_per_sentence`` non-gold spans, labeled O.

    Surface matches scan O regions left to right against the policy's
    phrase list; random windows are drawn with a generator seeded per call,
    so results are reproducible and never touch labeled positions.
    """
    runs = _o_runs(sentence.labels)
    mined: list[Span] = []

    def free(start: int, end: int) -> bool:
        return all(not Span(sentence.id, start, end, "O", "mined-negative").overlaps(m) for m in mined)

    if policy.kind in ("surface-match", "surface-then-random"):
        phrase_tokens = [p.split() for p in policy.phrases]
        positions = [i for run_start, run_end in runs for i in range(run_start, run_end)]
        run_end_at = {i: run_end for run_start, run_end in runs for i in range(run_start, run_end)}
        for i in positions:
            if len(mined) >= policy.max_per_sentence:
                break
            for words in phrase_tokens:
                j = i + len(words)
                if j <= run_end_at[i] and sentence.tokens[i:j] == words and free(i, j):
                    mined.append(Span(sentence.id, i, j, "O", "mined-negative"))
                    break

    if policy.kind in ("random-window", "surface-then-random"):
        rng = np.random.default_rng(seed)
        candidates = [
            (i, i + w)
            for run_start, run_end in runs
            for w in range(1, policy.max_window + 1)
            for i in range(run_start, run_end - w + 1)
        ]
        order = rng.permutation(len(candidates))
        for idx in order:
            if len(mined) >= policy.max_per_sentence:
                break
            i, j = candidates[idx]
            if free(i, j):
                mined.append(Span(sentence.id, i, j, "O", "mined-negative"))

    mined.sort(key=lambda s: (s.start, s.end))
    return mined


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def spans_to_jsonl(spans: list[Span]) -> str:
    lines = [
        json.dumps(
            {"sentence_id": s.sentence_id, "start": s.start, "end": s.end,
             "label": s.label, "source": s.source}
        )
        for s in spans
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def spans_from_jsonl(text: str) -> list[Span]:
    spans = []
    for raw in text.splitlines():
        if raw.strip():
            rec = json.loads(raw)
            spans.append(Span(rec["sentence_id"], rec["start"], rec["end"], rec["label"], rec["source"]))
    return spans
