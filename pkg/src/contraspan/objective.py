"""Training objective: token slot loss plus span contrastive loss.

The span loss scores a batch of pooled span embeddings against each other
with temperature-scaled dot products. Two variants are averaged: the
regular supervised contrastive loss, and a hard-negative variant whose
denominator counts the top-k most similar negatives twice. Anchors
without a positive partner are ineligible and contribute nothing.

Everything runs in float64 torch so values match scalar reference
computations to tight tolerances and gradients flow to the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import torch

from .spans import Span, SpanEmbedding

# The hard-negative denominator adds each selected negative once more on
# top of its regular appearance, i.e. counts it exactly twice.
HARD_NEGATIVE_WEIGHT = 2.0


class ObjectiveError(ValueError):
    pass


@dataclass
class ContrastiveConfig:
    temperature: float = 0.07
    top_k: int = 5
    normalize_spans: bool = True
    lambda_span: float = 0.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ObjectiveError(f"temperature must be positive, got {self.temperature}")
        if self.top_k < 1:
            raise ObjectiveError(f"top_k must be at least 1, got {self.top_k}")
        if self.lambda_span < 0:
            raise ObjectiveError(f"lambda_span must be non-negative, got {self.lambda_span}")

    @property
    def hard_negative_weight(self) -> float:
        return HARD_NEGATIVE_WEIGHT


@dataclass
class SpanBatch:
    """Pooled span embeddings with their class labels, scored jointly."""

    embeddings: torch.Tensor
    labels: list[str]
    spans: list[Span] = field(default_factory=list)

    def __post_init__(self):
        self.embeddings = torch.as_tensor(self.embeddings, dtype=torch.float64)
        if self.embeddings.ndim != 2:
            raise ObjectiveError("embeddings must be a 2-d (spans x dim) matrix")
        if self.embeddings.shape[0] != len(self.labels):
            raise ObjectiveError(
                f"{self.embeddings.shape[0]} embeddings but {len(self.labels)} labels"
            )
        if not bool(torch.isfinite(self.embeddings).all()):
            raise ObjectiveError("embeddings contain non-finite values")
        if self.spans and len(self.spans) != len(self.labels):
            raise ObjectiveError("provenance span count must match label count")

    @classmethod
    def from_embeddings(cls, pooled: Sequence[SpanEmbedding]) -> "SpanBatch":
        if not pooled:
            return cls(torch.zeros((0, 1), dtype=torch.float64), [])
        rows = [
            e.z if isinstance(e.z, torch.Tensor) else torch.as_tensor(np.asarray(e.z), dtype=torch.float64)
            for e in pooled
        ]
        return cls(torch.stack(rows), [e.span.label for e in pooled], [e.span for e in pooled])

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class LossBreakdown:
    """Scalar view of one training step's objective terms."""

    slot: float
    span_reg: float
    span_hard: float
    span: float
    total: float
    eligible_anchors: int

    def __post_init__(self):
        if self.eligible_anchors > 0:
            expected = (self.span_reg + self.span_hard) / 2.0
        else:
            expected = 0.0
        if abs(self.span - expected) > 1e-9:
            raise ObjectiveError(
                f"span term {self.span} inconsistent with halves {self.span_reg}, {self.span_hard}"
            )

    def as_dict(self) -> dict[str, float]:
        return {
            "slot": self.slot,
            "span_reg": self.span_reg,
            "span_hard": self.span_hard,
            "span": self.span,
            "total": self.total,
            "eligible_anchors": self.eligible_anchors,
        }


# ---------------------------------------------------------------------------
# Slot loss
# ---------------------------------------------------------------------------

def slot_loss(
    logits: torch.Tensor,
    gold_ids: Sequence[int],
    mask: Sequence[bool],
) -> torch.Tensor:
    """Mean cross-entropy over unmasked positions of one sentence.

    ``logits`` is (positions x labels); ``gold_ids`` indexes the label set
    at every position (ignored where the mask is false).
    """
    logits = torch.as_tensor(logits, dtype=torch.float64)
    if logits.ndim != 2:
        raise ObjectiveError("logits must be (positions x labels)")
    n = logits.shape[0]
    if len(gold_ids) != n or len(mask) != n:
        raise ObjectiveError(
            f"length mismatch: {n} logit rows, {len(gold_ids)} gold ids, {len(mask)} mask entries"
        )
    keep = torch.as_tensor(list(mask), dtype=torch.bool)
    if not bool(keep.any()):
        raise ObjectiveError("all positions masked; nothing to supervise")
    rows = logits[keep]
    targets = torch.as_tensor(list(gold_ids), dtype=torch.long)[keep]
    if int(targets.min()) < 0 or int(targets.max()) >= logits.shape[1]:
        raise ObjectiveError("gold id outside the label set")
    log_probs = torch.log_softmax(rows, dim=1)
    return -log_probs.gather(1, targets.unsqueeze(1)).mean()


# ---------------------------------------------------------------------------
# Span contrastive loss
# ---------------------------------------------------------------------------

def similarity_logits(batch: SpanBatch | torch.Tensor, temperature: float) -> torch.Tensor:
    """Pairwise scaled dot products ``z_i . z_j / temperature`` (n x n)."""
    if temperature <= 0:
        raise ObjectiveError(f"temperature must be positive, got {temperature}")
    z = batch.embeddings if isinstance(batch, SpanBatch) else torch.as_tensor(batch, dtype=torch.float64)
    return z @ z.T / temperature


def _pair_masks(labels: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
    """(positive-pair mask, off-diagonal mask), both (n x n) bool."""
    n = len(labels)
    same = torch.tensor(
        [[labels[i] == labels[j] for j in range(n)] for i in range(n)], dtype=torch.bool
    )
    off_diag = ~torch.eye(n, dtype=torch.bool)
    return same & off_diag, off_diag


def _masked_logsumexp_rows(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Row-wise logsumexp restricted to masked entries; rows must be non-empty."""
    neg_inf = torch.tensor(float("-inf"), dtype=logits.dtype)
    return torch.logsumexp(torch.where(mask, logits, neg_inf), dim=1)


def span_contrastive_regular(
    logits: torch.Tensor, labels: Sequence[str]
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-anchor supervised contrastive loss and eligibility mask.

    Anchor i is eligible when some other span shares its label; its loss is
    -log of the positives' share of the full off-diagonal denominator.
    Ineligible anchors get loss 0 and a false flag.
    """
    logits = torch.as_tensor(logits, dtype=torch.float64)
    n = logits.shape[0]
    losses = torch.zeros(n, dtype=torch.float64)
    pos, off_diag = _pair_masks(labels)
    eligible = pos.any(dim=1)
    if n < 2 or not bool(eligible.any()):
        return losses, eligible
    idx = eligible.nonzero(as_tuple=True)[0]
    num = _masked_logsumexp_rows(logits[idx], pos[idx])
    den = _masked_logsumexp_rows(logits[idx], off_diag[idx])
    return losses.index_put((idx,), den - num), eligible


def topk_hard_negatives(
    logits: torch.Tensor, labels: Sequence[str], k: int
) -> list[list[int]]:
    """Per anchor, indices of the <= k most similar different-label spans.

    Sorted by descending logit, ties broken toward the lower index.
    """
    if k < 1:
        raise ObjectiveError(f"k must be at least 1, got {k}")
    logits = torch.as_tensor(logits, dtype=torch.float64)
    n = logits.shape[0]
    rows = logits.detach().tolist() if n else []
    out: list[list[int]] = []
    for i in range(n):
        negatives = [j for j in range(n) if j != i and labels[j] != labels[i]]
        negatives.sort(key=lambda j: (-rows[i][j], j))
        out.append(negatives[:k])
    return out


def span_contrastive_hard(
    logits: torch.Tensor, labels: Sequence[str], k: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Hard-negative variant: the top-k negatives enter the denominator twice."""
    logits = torch.as_tensor(logits, dtype=torch.float64)
    n = logits.shape[0]
    losses = torch.zeros(n, dtype=torch.float64)
    pos, off_diag = _pair_masks(labels)
    eligible = pos.any(dim=1)
    if n < 2 or not bool(eligible.any()):
        return losses, eligible
    log_weights = torch.zeros((n, n), dtype=torch.float64)
    for i, chosen in enumerate(topk_hard_negatives(logits, labels, k)):
        for j in chosen:
            log_weights[i, j] = float(np.log(HARD_NEGATIVE_WEIGHT))
    idx = eligible.nonzero(as_tuple=True)[0]
    num = _masked_logsumexp_rows(logits[idx], pos[idx])
    den = _masked_logsumexp_rows(logits[idx] + log_weights[idx], off_diag[idx])
    return losses.index_put((idx,), den - num), eligible


def span_contrastive_loss(
    batch: SpanBatch, config: ContrastiveConfig
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, int]:
    """Mean over eligible anchors of the reg/hard average.

    Returns (span, span_reg, span_hard, eligible_count) where the first
    three are scalar tensors; all zeros when no anchor is eligible.
    """
    zero = torch.zeros((), dtype=torch.float64)
    if len(batch) < 2:
        return zero, zero.clone(), zero.clone(), 0
    logits = similarity_logits(batch, config.temperature)
    reg, eligible = span_contrastive_regular(logits, batch.labels)
    hard, _ = span_contrastive_hard(logits, batch.labels, config.top_k)
    count = int(eligible.sum())
    if count == 0:
        return zero, zero.clone(), zero.clone(), 0
    reg_mean = reg[eligible].mean()
    hard_mean = hard[eligible].mean()
    return (reg_mean + hard_mean) / 2.0, reg_mean, hard_mean, count


def total_loss(slot: Any, span: Any, lambda_span: float) -> Any:
    """Weighted objective ``slot + lambda_span * span``."""
    if lambda_span < 0:
        raise ObjectiveError(f"lambda_span must be non-negative, got {lambda_span}")
    return slot + lambda_span * span
