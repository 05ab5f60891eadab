"""Evaluation metrics: sequence accuracy, entity-level P/R/F1, the
geometric-mean summary, and cross-dataset aggregation.

Entities are (start, end, class) triples with exact-boundary, exact-class
set semantics; a partial overlap is both a false positive and a false
negative. All ratios use the zero-denominator convention (0, not NaN).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .corpus import repair_labels, tag_class


class MetricsError(ValueError):
    pass


Entity = tuple[int, int, str]


def entities_from_labels(labels: list[str]) -> set[Entity]:
    """Entity set of one tag sequence; stray I- tags are read as B- first."""
    fixed = repair_labels(list(labels))
    entities: set[Entity] = set()
    start = None
    for i, tag in enumerate(fixed + ["O"]):
        if start is not None and not tag.startswith("I-"):
            entities.add((start, i, tag_class(fixed[start])))
            start = None
        if tag.startswith("B-"):
            start = i
    return entities


def sequence_accuracy(pred: list[list[str]], gold: list[list[str]]) -> float:
    """Fraction of sentences whose tag sequences match exactly."""
    if len(pred) != len(gold):
        raise MetricsError(f"{len(pred)} predictions for {len(gold)} gold sentences")
    if not gold:
        raise MetricsError("no sentences to score")
    for i, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise MetricsError(f"sentence {i}: {len(p)} predicted tags for {len(g)} gold tags")
    return sum(p == g for p, g in zip(pred, gold)) / len(gold)


def entity_counts(
    pred_entities: list[set[Entity]], gold_entities: list[set[Entity]]
) -> tuple[int, int, int]:
    """(TP, FP, FN) summed over parallel per-sentence entity sets."""
    if len(pred_entities) != len(gold_entities):
        raise MetricsError("prediction and gold sentence counts differ")
    tp = fp = fn = 0
    for pred, gold in zip(pred_entities, gold_entities):
        tp += len(pred & gold)
        fp += len(pred - gold)
        fn += len(gold - pred)
    return tp, fp, fn


def prf1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if min(tp, fp, fn) < 0:
        raise MetricsError("counts must be non-negative")
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def geometric_mean(f1: float, sa: float) -> float:
    if not (0 <= f1 <= 1 and 0 <= sa <= 1):
        raise MetricsError(f"inputs must lie in [0, 1], got F1={f1}, SA={sa}")
    return math.sqrt(f1 * sa)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def percent(value: float) -> str:
    """Render a [0, 1] ratio as a percentage with 2 decimals, half-up."""
    return str(Decimal(repr(value * 100)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def quadruple(sa: float, f1: float, p: float, r: float) -> str:
    """The compact ``SA/F1/P/R`` percentage rendering used in result tables."""
    return "/".join(percent(v) for v in (sa, f1, p, r))


@dataclass
class EvalReport:
    """One model on one dataset split."""

    n_sentences: int
    tp: int
    fp: int
    fn: int
    sa: float
    precision: float
    recall: float
    f1: float
    gm: float

    def __post_init__(self):
        p, r, f1 = prf1(self.tp, self.fp, self.fn)
        for name, got, want in [
            ("precision", self.precision, p),
            ("recall", self.recall, r),
            ("f1", self.f1, f1),
            ("gm", self.gm, geometric_mean(f1, self.sa)),
        ]:
            if abs(got - want) > 1e-9:
                raise MetricsError(f"inconsistent report: {name} {got} does not match counts ({want})")

    def quadruple(self) -> str:
        return quadruple(self.sa, self.f1, self.precision, self.recall)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_sentences": self.n_sentences,
                "tp": self.tp, "fp": self.fp, "fn": self.fn,
                "sa": self.sa, "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "gm": self.gm,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(d["n_sentences"], d["tp"], d["fp"], d["fn"], d["sa"],
                   d["precision"], d["recall"], d["f1"], d["gm"])

    def to_text(self) -> str:
        rows = [
            ("sentences", str(self.n_sentences)),
            ("TP/FP/FN", f"{self.tp}/{self.fp}/{self.fn}"),
            ("SA", percent(self.sa)),
            ("F1", percent(self.f1)),
            ("precision", percent(self.precision)),
            ("recall", percent(self.recall)),
            ("GM", percent(self.gm)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def evaluate_sequences(pred: list[list[str]], gold: list[list[str]]) -> EvalReport:
    """Score predicted tag sequences against gold and assemble a report."""
    sa = sequence_accuracy(pred, gold)
    tp, fp, fn = entity_counts(
        [entities_from_labels(p) for p in pred],
        [entities_from_labels(g) for g in gold],
    )
    p, r, f1 = prf1(tp, fp, fn)
    return EvalReport(len(gold), tp, fp, fn, sa, p, r, f1, geometric_mean(f1, sa))


# ---------------------------------------------------------------------------
# Cross-dataset summaries
# ---------------------------------------------------------------------------

@dataclass
class CrossEvalSummary:
    """μ and worst-case (R) aggregates over per-dataset rows."""

    rows: list[tuple[str, float, float, float]]
    mu_sa: float
    mu_f1: float
    mu_gm: float
    hardest: str
    r_sa: float
    r_f1: float
    r_gm: float

    @property
    def k(self) -> int:
        return len(self.rows)

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows": [
                    {"dataset": n, "sa": sa, "f1": f1, "gm": gm} for n, sa, f1, gm in self.rows
                ],
                "mu_sa": self.mu_sa, "mu_f1": self.mu_f1, "mu_gm": self.mu_gm,
                "hardest": self.hardest,
                "r_sa": self.r_sa, "r_f1": self.r_f1, "r_gm": self.r_gm,
                "k": self.k,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "CrossEvalSummary":
        d = json.loads(text)
        rows = [(r["dataset"], r["sa"], r["f1"], r["gm"]) for r in d["rows"]]
        return cls(rows, d["mu_sa"], d["mu_f1"], d["mu_gm"], d["hardest"],
                   d["r_sa"], d["r_f1"], d["r_gm"])

    def to_text(self) -> str:
        header = ("dataset", "SA", "F1", "GM")
        body = [(n, percent(sa), percent(f1), percent(gm)) for n, sa, f1, gm in self.rows]
        body.append(("mean", percent(self.mu_sa), percent(self.mu_f1), percent(self.mu_gm)))
        body.append(("worst (R)", percent(self.r_sa), percent(self.r_f1), percent(self.r_gm)))
        widths = [max(len(str(row[c])) for row in [header] + body) for c in range(4)]
        lines = ["  ".join(f"{cell:<{w}}" for cell, w in zip(row, widths)).rstrip()
                 for row in [header] + body]
        lines.append(f"hardest dataset: {self.hardest}")
        return "\n".join(lines)


def summarize_cross_eval(rows: list[tuple[str, float, float]]) -> CrossEvalSummary:
    """Aggregate (name, SA, F1) rows.

    μ values are plain means; R_SA and R_F1 are independent minima (so R_GM
    is not necessarily any row's GM); hardest is the argmin of per-dataset
    GM with ties going to the first row.
    """
    if not rows:
        raise MetricsError("need at least one dataset row")
    gms = [geometric_mean(f1, sa) for _, sa, f1 in rows]
    full = [(name, sa, f1, gm) for (name, sa, f1), gm in zip(rows, gms)]
    k = len(rows)
    mu_sa = sum(sa for _, sa, _ in rows) / k
    mu_f1 = sum(f1 for _, _, f1 in rows) / k
    mu_gm = sum(gms) / k
    hardest = full[min(range(k), key=lambda i: gms[i])][0]
    r_sa = min(sa for _, sa, _ in rows)
    r_f1 = min(f1 for _, _, f1 in rows)
    return CrossEvalSummary(full, mu_sa, mu_f1, mu_gm, hardest, r_sa, r_f1,
                            math.sqrt(r_sa * r_f1))
