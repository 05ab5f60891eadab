from __future__ import annotations

import numpy as np
import pytest
import torch

from contraspan.corpus import LabeledSentence, TagError, is_valid_iob2
from contraspan.spans import (
    DegenerateSpanError,
    MiningPolicy,
    Span,
    SpanEmbedding,
    SpanError,
    extract_gold_spans,
    extract_label_agnostic_spans,
    mine_negative_spans,
    pool_span,
    spans_from_jsonl,
    spans_to_jsonl,
)

from oracles import random_tag_sequence


def sent(sid, text, labels):
    return LabeledSentence(sid, text.split(), labels.split())


# ---------------------------------------------------------------------------
# Span container
# ---------------------------------------------------------------------------

def test_span_rejects_empty_interval():
    with pytest.raises(SpanError):
        Span("s", 2, 2, "idiom")
    with pytest.raises(SpanError):
        Span("s", 3, 1, "idiom")
    with pytest.raises(SpanError):
        Span("s", -1, 2, "idiom")


def test_span_rejects_unknown_source():
    with pytest.raises(SpanError):
        Span("s", 0, 1, "idiom", source="guessed")


def test_span_overlap_and_text():
    a = Span("s", 1, 4, "idiom")
    assert a.overlaps(Span("s", 3, 5, "O"))
    assert not a.overlaps(Span("s", 4, 6, "O"))  # half-open: touching is disjoint
    assert not a.overlaps(Span("s", 0, 1, "O"))
    s = sent("s", "he saw the light today", "O B-idiom I-idiom I-idiom O")
    assert a.text(s) == "saw the light"


def test_span_embedding_checks_norm():
    with pytest.raises(SpanError):
        SpanEmbedding(Span("s", 0, 1, "x"), np.array([3.0, 4.0]), normalized=True)
    ok = SpanEmbedding(Span("s", 0, 1, "x"), np.array([0.6, 0.8]), normalized=True)
    assert ok.normalized
    with pytest.raises(SpanError):
        SpanEmbedding(Span("s", 0, 1, "x"), np.array([np.nan, 0.0]), normalized=False)


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def test_gold_spans_single_run():
    s = sent("s1", "he saw the light today", "O B-idiom I-idiom I-idiom O")
    spans = extract_gold_spans(s)
    assert len(spans) == 1
    assert (spans[0].start, spans[0].end, spans[0].label) == (1, 4, "idiom")
    assert spans[0].source == "gold"
    assert spans[0].sentence_id == "s1"


def test_gold_spans_adjacent_and_multi_class():
    s = sent("x", "a b c d", "B-idiom B-idiom I-idiom B-verb")
    got = [(p.start, p.end, p.label) for p in extract_gold_spans(s)]
    assert got == [(0, 1, "idiom"), (1, 3, "idiom"), (3, 4, "verb")]


def test_gold_spans_rejects_stray_i():
    s = LabeledSentence("x", ["a", "b"], ["O", "O"])
    s.labels = ["O", "I-idiom"]  # bypass constructor-time repair assumptions
    with pytest.raises((SpanError, TagError)):
        extract_gold_spans(s)


def test_label_agnostic_covers_sentence():
    labels = ["O", "B-idiom", "I-idiom", "O", "O", "B-verb"]
    spans = extract_label_agnostic_spans(labels, "s")
    assert [(p.start, p.end, p.label) for p in spans] == [
        (0, 1, "O"),
        (1, 3, "idiom"),
        (3, 5, "O"),
        (5, 6, "verb"),
    ]
    assert all(p.source == "label-agnostic" for p in spans)


def test_label_agnostic_splits_adjacent_b():
    spans = extract_label_agnostic_spans(["B-idiom", "B-idiom"], "s")
    assert [(p.start, p.end) for p in spans] == [(0, 1), (1, 2)]


def test_label_agnostic_matches_gold_on_valid_input():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 12))
        labels = random_tag_sequence(rng, n)
        if not is_valid_iob2(labels):
            continue
        s = LabeledSentence("r", ["w"] * n, labels)
        gold = {(p.start, p.end, p.label) for p in extract_gold_spans(s)}
        agnostic = {
            (p.start, p.end, p.label)
            for p in extract_label_agnostic_spans(labels, "r")
            if p.label != "O"
        }
        assert gold == agnostic
        # coverage: spans tile [0, n) without gaps or overlap
        tiles = sorted((p.start, p.end) for p in extract_label_agnostic_spans(labels, "r"))
        assert tiles[0][0] == 0 and tiles[-1][1] == n
        assert all(a[1] == b[0] for a, b in zip(tiles, tiles[1:]))


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

def test_pool_span_mean_and_normalize():
    mat = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [9.0, 9.0]])
    span = Span("s", 0, 3, "idiom")
    emb = pool_span(mat, span)
    mean = np.array([2.0 / 3, 2.0 / 3])
    np.testing.assert_allclose(emb.z, mean / np.linalg.norm(mean), atol=1e-12)
    raw = pool_span(mat, span, normalize=False)
    np.testing.assert_allclose(raw.z, mean, atol=1e-12)
    assert not raw.normalized


def test_pool_span_torch_matches_numpy_and_keeps_grad():
    mat = torch.tensor([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], dtype=torch.float64, requires_grad=True)
    span = Span("s", 1, 3, "idiom")
    emb = pool_span(mat, span)
    ref = pool_span(mat.detach().numpy(), span)
    np.testing.assert_allclose(emb.z.detach().numpy(), ref.z, atol=1e-12)
    assert emb.z.requires_grad
    emb.z.sum().backward()
    assert mat.grad is not None
    assert float(mat.grad[0].abs().sum()) == 0.0  # rows outside the span untouched


def test_pool_span_degenerate_zero_vector():
    mat = np.array([[1.0, -1.0], [-1.0, 1.0]])
    with pytest.raises(DegenerateSpanError):
        pool_span(mat, Span("s", 0, 2, "idiom"))


def test_pool_span_out_of_range():
    with pytest.raises(SpanError):
        pool_span(np.eye(2), Span("s", 0, 3, "idiom"))


# ---------------------------------------------------------------------------
# Negative mining
# ---------------------------------------------------------------------------

LITERAL = sent(
    "lit", "from the window she saw the light of the lamp", "O O O O O O O O O O"
)
FIGURATIVE = sent(
    "fig", "the committee finally saw the light about the plan", "O O O B-idiom I-idiom I-idiom O O O"
)


def test_surface_match_finds_phrase_in_o_region():
    policy = MiningPolicy(kind="surface-match", phrases=["saw the light"], max_per_sentence=2)
    mined = mine_negative_spans(LITERAL, policy, seed=0)
    assert [(m.start, m.end) for m in mined] == [(4, 7)]
    assert mined[0].label == "O"
    assert mined[0].source == "mined-negative"


def test_surface_match_skips_gold_positions():
    policy = MiningPolicy(kind="surface-match", phrases=["saw the light"])
    assert mine_negative_spans(FIGURATIVE, policy, seed=0) == []


def test_mining_respects_cap_and_no_overlap():
    policy = MiningPolicy(kind="surface-then-random", phrases=["saw the light"], max_per_sentence=3)
    mined = mine_negative_spans(LITERAL, policy, seed=4)
    assert len(mined) == 3
    for a in mined:
        assert set(LITERAL.labels[a.start:a.end]) == {"O"}
        assert a.end - a.start <= policy.max_window
    for a, b in zip(mined, mined[1:]):
        assert not a.overlaps(b)
        assert (a.start, a.end) <= (b.start, b.end)  # sorted output
    # the surface match is always present
    assert (4, 7) in [(m.start, m.end) for m in mined]


def test_mining_never_touches_labeled_positions():
    policy = MiningPolicy(kind="random-window", max_per_sentence=4, max_window=3)
    for seed in range(20):
        for m in mine_negative_spans(FIGURATIVE, policy, seed=seed):
            assert set(FIGURATIVE.labels[m.start:m.end]) == {"O"}


def test_mining_deterministic_per_seed():
    policy = MiningPolicy(kind="random-window", max_per_sentence=2)
    a = mine_negative_spans(LITERAL, policy, seed=11)
    b = mine_negative_spans(LITERAL, policy, seed=11)
    assert a == b
    seen = {tuple((m.start, m.end) for m in mine_negative_spans(LITERAL, policy, seed=s)) for s in range(30)}
    assert len(seen) > 1  # seed actually drives the draw


def test_mining_policy_validation():
    with pytest.raises(SpanError):
        MiningPolicy(kind="greedy")
    with pytest.raises(SpanError):
        MiningPolicy(max_window=0)


def test_all_o_sentence_has_no_gold_but_mines():
    s = sent("o", "just some plain words here", "O O O O O")
    assert extract_gold_spans(s) == []
    policy = MiningPolicy(kind="random-window", max_per_sentence=1)
    assert len(mine_negative_spans(s, policy, seed=0)) == 1


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def test_spans_jsonl_round_trip():
    spans = [
        Span("s1", 1, 4, "idiom", "gold"),
        Span("s2", 0, 2, "O", "mined-negative"),
    ]
    assert spans_from_jsonl(spans_to_jsonl(spans)) == spans
    assert spans_to_jsonl([]) == ""
