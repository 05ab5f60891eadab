from __future__ import annotations

import math

import numpy as np
import pytest

from contraspan.metrics import (
    CrossEvalSummary,
    EvalReport,
    MetricsError,
    entities_from_labels,
    entity_counts,
    evaluate_sequences,
    geometric_mean,
    percent,
    prf1,
    quadruple,
    sequence_accuracy,
    summarize_cross_eval,
)

from oracles import oracle_entities, oracle_prf1, random_tag_sequence


# ---------------------------------------------------------------------------
# Entity extraction
# ---------------------------------------------------------------------------

def test_entities_basic_runs():
    labels = ["O", "B-idiom", "I-idiom", "I-idiom", "O", "B-verb"]
    assert entities_from_labels(labels) == {(1, 4, "idiom"), (5, 6, "verb")}


def test_entities_adjacent_b_tags_stay_separate():
    assert entities_from_labels(["B-idiom", "B-idiom", "I-idiom"]) == {
        (0, 1, "idiom"),
        (1, 3, "idiom"),
    }


def test_entities_repair_stray_i_first():
    assert entities_from_labels(["O", "I-idiom", "I-idiom"]) == {(1, 3, "idiom")}
    assert entities_from_labels(["B-verb", "I-idiom"]) == {(0, 1, "verb"), (1, 2, "idiom")}


def test_entities_all_o_is_empty():
    assert entities_from_labels(["O", "O", "O"]) == set()


def test_entities_match_interval_scan_oracle():
    rng = np.random.default_rng(41)
    for _ in range(300):
        tags = random_tag_sequence(rng, int(rng.integers(1, 14)))
        assert entities_from_labels(tags) == oracle_entities(tags)


# ---------------------------------------------------------------------------
# Sequence accuracy and counts
# ---------------------------------------------------------------------------

def test_sequence_accuracy_fraction():
    gold = [["O", "B-idiom"], ["O"], ["B-idiom"]]
    pred = [["O", "B-idiom"], ["B-idiom"], ["O"]]
    assert sequence_accuracy(pred, gold) == pytest.approx(1 / 3)
    assert sequence_accuracy(gold, gold) == 1.0


def test_sequence_accuracy_errors():
    with pytest.raises(MetricsError):
        sequence_accuracy([["O"]], [["O"], ["O"]])
    with pytest.raises(MetricsError):
        sequence_accuracy([["O", "O"]], [["O"]])
    with pytest.raises(MetricsError):
        sequence_accuracy([], [])


def test_partial_overlap_is_both_fp_and_fn():
    gold = ["O", "B-idiom", "I-idiom", "I-idiom", "O"]
    pred = ["O", "O", "B-idiom", "I-idiom", "O"]
    tp, fp, fn = entity_counts([entities_from_labels(pred)], [entities_from_labels(gold)])
    assert (tp, fp, fn) == (0, 1, 1)
    assert sequence_accuracy([pred], [gold]) == 0.0


def test_exact_match_counts():
    labels = ["B-idiom", "I-idiom", "O"]
    tp, fp, fn = entity_counts([entities_from_labels(labels)], [entities_from_labels(labels)])
    assert (tp, fp, fn) == (1, 0, 0)


def test_counts_are_per_sentence():
    # the same (start, end, class) triple in different sentences must not cancel
    gold = [entities_from_labels(["B-idiom"]), set()]
    pred = [set(), entities_from_labels(["B-idiom"])]
    assert entity_counts(pred, gold) == (0, 1, 1)


# ---------------------------------------------------------------------------
# Ratios
# ---------------------------------------------------------------------------

def test_prf1_zero_denominators():
    assert prf1(0, 0, 0) == (0.0, 0.0, 0.0)
    assert prf1(0, 0, 5) == (0.0, 0.0, 0.0)
    assert prf1(0, 5, 0) == (0.0, 0.0, 0.0)


def test_prf1_matches_oracle():
    rng = np.random.default_rng(43)
    for _ in range(200):
        tp, fp, fn = (int(rng.integers(0, 8)) for _ in range(3))
        assert prf1(tp, fp, fn) == pytest.approx(oracle_prf1(tp, fp, fn))
    with pytest.raises(MetricsError):
        prf1(-1, 0, 0)


def test_geometric_mean():
    assert geometric_mean(0.0, 0.5) == 0.0
    assert geometric_mean(1.0, 1.0) == 1.0
    assert abs(geometric_mean(0.1256, 0.1339) - 0.1297) < 5e-5
    with pytest.raises(MetricsError):
        geometric_mean(1.2, 0.5)
    with pytest.raises(MetricsError):
        geometric_mean(0.5, -0.1)


# ---------------------------------------------------------------------------
# Percentage formatting
# ---------------------------------------------------------------------------

def test_percent_two_decimals_half_up():
    assert percent(0.0) == "0.00"
    assert percent(1.0) == "100.00"
    assert percent(0.8) == "80.00"
    assert percent(2 / 3) == "66.67"
    assert percent(0.98765) == "98.77"
    # exact .5 at the third decimal must round up, not to even
    assert percent(0.25545) == "25.55"
    assert percent(0.33335) == "33.34"


def test_quadruple_order_is_sa_f1_p_r():
    assert quadruple(0.8, 0.888888888, 0.8, 1.0) == "80.00/88.89/80.00/100.00"


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def test_evaluate_sequences_end_to_end():
    gold = [
        ["O", "B-idiom", "I-idiom", "I-idiom", "O"],
        ["B-verb", "O"],
        ["O", "O"],
    ]
    pred = [
        ["O", "B-idiom", "I-idiom", "I-idiom", "O"],  # exact
        ["O", "O"],                                   # missed entity
        ["B-verb", "O"],                              # spurious entity
    ]
    report = evaluate_sequences(pred, gold)
    assert report.n_sentences == 3
    assert (report.tp, report.fp, report.fn) == (1, 1, 1)
    assert report.sa == pytest.approx(1 / 3)
    assert report.precision == pytest.approx(0.5)
    assert report.recall == pytest.approx(0.5)
    assert report.f1 == pytest.approx(0.5)
    assert report.gm == pytest.approx(math.sqrt(0.5 / 3))
    assert report.quadruple() == "33.33/50.00/50.00/50.00"


def test_report_consistency_guard():
    with pytest.raises(MetricsError):
        EvalReport(n_sentences=1, tp=1, fp=0, fn=0, sa=1.0,
                   precision=0.9, recall=1.0, f1=1.0, gm=1.0)


def test_report_json_round_trip():
    report = evaluate_sequences([["B-x", "O"]], [["B-x", "B-y"]])
    again = EvalReport.from_json(report.to_json())
    assert again == report


def test_report_text_contains_all_fields():
    report = evaluate_sequences([["B-x"]], [["B-x"]])
    text = report.to_text()
    for token in ("SA", "F1", "precision", "recall", "GM", "TP/FP/FN", "100.00"):
        assert token in text


# ---------------------------------------------------------------------------
# Cross-dataset aggregation
# ---------------------------------------------------------------------------

EXAMPLE_ROWS = [
    ("alpha", 0.80, 0.90),
    ("beta", 0.20, 0.10),
    ("gamma", 0.50, 0.60),
]


def test_summary_means_and_minima():
    summary = summarize_cross_eval(EXAMPLE_ROWS)
    assert summary.k == 3
    assert summary.mu_sa == pytest.approx((0.8 + 0.2 + 0.5) / 3)
    assert summary.mu_f1 == pytest.approx((0.9 + 0.1 + 0.6) / 3)
    gms = [math.sqrt(0.8 * 0.9), math.sqrt(0.2 * 0.1), math.sqrt(0.5 * 0.6)]
    assert summary.mu_gm == pytest.approx(sum(gms) / 3)
    assert summary.hardest == "beta"
    assert summary.r_sa == 0.2
    assert summary.r_f1 == 0.1
    assert summary.r_gm == pytest.approx(math.sqrt(0.2 * 0.1))


def test_summary_minima_are_independent():
    # worst SA and worst F1 come from different datasets
    rows = [("a", 0.2, 0.9), ("b", 0.8, 0.3)]
    summary = summarize_cross_eval(rows)
    assert summary.r_sa == 0.2
    assert summary.r_f1 == 0.3
    assert summary.r_gm == pytest.approx(math.sqrt(0.2 * 0.3))
    # r_gm is not any single row's GM
    assert all(abs(summary.r_gm - gm) > 1e-6 for _, _, _, gm in summary.rows)


def test_summary_hardest_tie_goes_first():
    rows = [("first", 0.4, 0.4), ("second", 0.4, 0.4)]
    assert summarize_cross_eval(rows).hardest == "first"


def test_summary_empty_rejected():
    with pytest.raises(MetricsError):
        summarize_cross_eval([])


def test_summary_json_round_trip():
    summary = summarize_cross_eval(EXAMPLE_ROWS)
    again = CrossEvalSummary.from_json(summary.to_json())
    assert again == summary


def test_summary_text_layout():
    text = summarize_cross_eval(EXAMPLE_ROWS).to_text()
    assert "hardest dataset: beta" in text
    assert "mean" in text and "worst (R)" in text
    for name, _, _ in EXAMPLE_ROWS:
        assert name in text
