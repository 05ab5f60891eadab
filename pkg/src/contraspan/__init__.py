"""Span-aware sequence labeling with a contrastive span objective.

The package trains token-level BIO taggers whose span representations are
additionally pulled together (same class) and pushed apart (different
class), with the hardest negatives counted twice. It ships a synthetic
figurative/literal corpus generator, evaluation and cross-dataset
summaries, and embedding map tooling.
"""

from .corpus import (
    DatasetSplit,
    LabeledSentence,
    SubwordAlignment,
    SynthesisConfig,
    align_to_subwords,
    generate_synthetic_corpus,
    load_sentences,
    parse_conll,
    parse_jsonl,
    repair_labels,
    save_sentences,
    serialize_conll,
    serialize_jsonl,
    split_dataset,
)
from .encoder import (
    ClassifierHead,
    EncodedSentence,
    Encoder,
    EncoderConfig,
    TokenPredictions,
    classify_tokens,
    decode_labels,
)
from .checkpoint import load_checkpoint, read_metadata, save_checkpoint
from .metrics import (
    CrossEvalSummary,
    EvalReport,
    entity_counts,
    evaluate_sequences,
    geometric_mean,
    prf1,
    sequence_accuracy,
    summarize_cross_eval,
)
from .objective import (
    ContrastiveConfig,
    LossBreakdown,
    SpanBatch,
    similarity_logits,
    slot_loss,
    span_contrastive_hard,
    span_contrastive_loss,
    span_contrastive_regular,
    topk_hard_negatives,
    total_loss,
)
from .spans import (
    MiningPolicy,
    Span,
    SpanEmbedding,
    extract_gold_spans,
    extract_label_agnostic_spans,
    mine_negative_spans,
    pool_span,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
