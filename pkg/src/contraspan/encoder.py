"""Contextual encoders and the token classification head.

Two interchangeable backbones produce per-word vectors (first-subword
convention) plus a pooled CLS vector:

* ``tiny-from-scratch``: a small float64 transformer over hashed subword
  pieces. Deterministic, dependency-light, fast enough to train in tests.
* ``pretrained-transformer``: a Hugging Face masked-LM backbone (loaded
  lazily so the package works without ``transformers`` installed).

The classifier head maps word vectors to tag logits; softmax rows and
argmax tags come out of ``classify_tokens`` / ``decode_labels``.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .corpus import LabeledSentence, SubwordAlignment, align_to_subwords, repair_labels

logger = logging.getLogger(__name__)

MODES = ("pretrained-transformer", "tiny-from-scratch")
CLS_ID = 0
MAX_PIECE_CHARS = 8


class EncoderError(ValueError):
    pass


@dataclass
class EncoderConfig:
    mode: str = "tiny-from-scratch"
    hidden_size: int = 32
    num_layers: int = 2
    num_heads: int = 4
    max_seq_len: int = 128
    seed: int = 0
    vocab_size: int = 4096
    model_name: str = "bert-base-uncased"
    on_overflow: str = "truncate"

    def __post_init__(self):
        if self.mode not in MODES:
            raise EncoderError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.hidden_size < 8:
            raise EncoderError(f"hidden_size must be at least 8, got {self.hidden_size}")
        if self.hidden_size % self.num_heads:
            raise EncoderError(
                f"num_heads ({self.num_heads}) must divide hidden_size ({self.hidden_size})"
            )
        if self.num_layers < 1 or self.max_seq_len < 2 or self.vocab_size < 2:
            raise EncoderError("num_layers, max_seq_len, vocab_size out of range")
        if self.on_overflow not in ("truncate", "error"):
            raise EncoderError(f"on_overflow must be truncate or error, got {self.on_overflow!r}")

    def as_dict(self) -> dict:
        return {
            "mode": self.mode, "hidden_size": self.hidden_size,
            "num_layers": self.num_layers, "num_heads": self.num_heads,
            "max_seq_len": self.max_seq_len, "seed": self.seed,
            "vocab_size": self.vocab_size, "model_name": self.model_name,
            "on_overflow": self.on_overflow,
        }


@dataclass
class EncodedSentence:
    """Per-word contextual vectors plus the pooled CLS vector."""

    h_cls: torch.Tensor
    word_vectors: torch.Tensor
    sentence_id: str = ""

    def __post_init__(self):
        if self.word_vectors.ndim != 2 or self.h_cls.ndim != 1:
            raise EncoderError("expected (words x d) matrix and (d,) CLS vector")
        for t in (self.h_cls, self.word_vectors):
            if not bool(torch.isfinite(t.detach()).all()):
                raise EncoderError("encoder produced non-finite values")


@dataclass
class TokenPredictions:
    """Softmax rows over the tag set and their argmax tags (pre-repair)."""

    probabilities: np.ndarray
    tags: list[str]
    tag_set: list[str]

    def __post_init__(self):
        rows = np.asarray(self.probabilities, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(self.tags):
            raise EncoderError("one probability row per predicted tag required")
        if rows.shape[1] != len(self.tag_set):
            raise EncoderError("probability columns must match the tag set")
        if np.any(rows < 0) or np.max(np.abs(rows.sum(axis=1) - 1.0)) > 1e-6:
            raise EncoderError("rows must be non-negative and sum to 1")


class TinyTokenizer:
    """Hash-based subword splitter: stateless, deterministic, no vocab file.

    Words are cut into pieces of at most 8 characters; each piece hashes
    into ids 1..vocab_size-1 (0 is reserved for CLS). Multi-piece words
    exercise the first-subword alignment path.
    """

    def __init__(self, vocab_size: int):
        if vocab_size < 2:
            raise EncoderError("vocab_size must leave room for CLS plus pieces")
        self.vocab_size = vocab_size

    def pieces(self, word: str) -> list[str]:
        return [word[i:i + MAX_PIECE_CHARS] for i in range(0, len(word), MAX_PIECE_CHARS)] or [word]

    def piece_id(self, piece: str) -> int:
        return zlib.crc32(piece.encode("utf-8")) % (self.vocab_size - 1) + 1

    def subword_lengths(self, tokens: Sequence[str]) -> list[int]:
        return [len(self.pieces(w)) for w in tokens]

    def encode_ids(self, tokens: Sequence[str]) -> list[int]:
        """CLS id followed by every word's piece ids."""
        ids = [CLS_ID]
        for word in tokens:
            ids.extend(self.piece_id(p) for p in self.pieces(word))
        return ids


class TinyBackbone(nn.Module):
    """Small bidirectional transformer in float64 with learned positions."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        with torch.random.fork_rng():
            torch.manual_seed(config.seed)
            self.token_embedding = nn.Embedding(config.vocab_size, config.hidden_size)
            self.position_embedding = nn.Embedding(config.max_seq_len, config.hidden_size)
            layer = nn.TransformerEncoderLayer(
                d_model=config.hidden_size,
                nhead=config.num_heads,
                dim_feedforward=4 * config.hidden_size,
                dropout=0.0,
                activation="gelu",
                batch_first=True,
            )
            # nested-tensor fast path off: one code path for train and eval
            self.transformer = nn.TransformerEncoder(
                layer, num_layers=config.num_layers, enable_nested_tensor=False
            )
        self.double()

    def forward(self, ids: torch.Tensor, key_padding_mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device).unsqueeze(0)
        x = self.token_embedding(ids) + self.position_embedding(positions)
        return self.transformer(x, src_key_padding_mask=key_padding_mask)


class Encoder:
    """Facade over the configured backbone: tokenize, run, gather words."""

    def __init__(self, config: EncoderConfig):
        self.config = config
        if config.mode == "tiny-from-scratch":
            self.tokenizer = TinyTokenizer(config.vocab_size)
            self.backbone = TinyBackbone(config)
        else:
            self.tokenizer, self.backbone = _load_pretrained(config)

    @property
    def hidden_size(self) -> int:
        if self.config.mode == "tiny-from-scratch":
            return self.config.hidden_size
        return int(self.backbone.config.hidden_size)

    def parameters(self):
        return self.backbone.parameters()

    def train(self):
        self.backbone.train()
        return self

    def eval(self):
        self.backbone.eval()
        return self

    def subword_lengths(self, sentence: LabeledSentence) -> list[int]:
        if self.config.mode == "tiny-from-scratch":
            return self.tokenizer.subword_lengths(sentence.tokens)
        return _hf_subword_lengths(self.tokenizer, sentence.tokens)

    def alignment(self, sentence: LabeledSentence) -> SubwordAlignment:
        return align_to_subwords(sentence, self.subword_lengths(sentence))

    def encode(self, sentence: LabeledSentence, alignment: SubwordAlignment | None = None) -> EncodedSentence:
        return self.encode_batch([sentence], None if alignment is None else [alignment])[0]

    def encode_batch(
        self,
        sentences: Sequence[LabeledSentence],
        alignments: Sequence[SubwordAlignment] | None = None,
    ) -> list[EncodedSentence]:
        """Encode several sentences in one padded forward pass.

        Padding positions are masked out of attention, so batched results
        match one-at-a-time encoding.
        """
        if alignments is None:
            alignments = [self.alignment(s) for s in sentences]
        else:
            if len(alignments) != len(sentences):
                raise EncoderError("one alignment per sentence required")
            for sentence, alignment in zip(sentences, alignments):
                expected = self.alignment(sentence)
                if alignment.first_subword_positions != expected.first_subword_positions:
                    raise EncoderError(
                        f"sentence {sentence.id!r}: alignment does not match this tokenizer"
                    )
        if self.config.mode == "tiny-from-scratch":
            return self._encode_tiny(sentences, alignments)
        return _hf_encode(self, sentences, alignments)

    def _gather_positions(self, sentence: LabeledSentence, alignment: SubwordAlignment) -> list[int]:
        """First-subword row indices (CLS at row 0), truncation policy applied."""
        total = 1 + len(alignment.supervision_mask)
        positions = [p + 1 for p in alignment.first_subword_positions]
        if total <= self.config.max_seq_len:
            return positions
        if self.config.on_overflow == "error":
            raise EncoderError(
                f"sentence {sentence.id!r}: {total} subword positions exceed "
                f"max_seq_len={self.config.max_seq_len}"
            )
        kept = [p for p in positions if p < self.config.max_seq_len]
        logger.warning(
            "sentence %r truncated to %d of %d words", sentence.id, len(kept), len(positions)
        )
        return kept

    def _encode_tiny(self, sentences, alignments) -> list[EncodedSentence]:
        ids_per = [self.tokenizer.encode_ids(s.tokens)[: self.config.max_seq_len] for s in sentences]
        gather = [self._gather_positions(s, a) for s, a in zip(sentences, alignments)]
        width = max(len(ids) for ids in ids_per)
        batch = torch.full((len(ids_per), width), CLS_ID, dtype=torch.long)
        padding = torch.ones((len(ids_per), width), dtype=torch.bool)
        for row, ids in enumerate(ids_per):
            batch[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
            padding[row, : len(ids)] = False
        out = self.backbone(batch, padding)
        encoded = []
        for row, (sentence, positions) in enumerate(zip(sentences, gather)):
            encoded.append(
                EncodedSentence(
                    h_cls=out[row, 0],
                    word_vectors=out[row, positions] if positions else out[row, :0],
                    sentence_id=sentence.id,
                )
            )
        return encoded


class ClassifierHead(nn.Module):
    """Linear tag scorer over word vectors (one logit column per tag)."""

    def __init__(self, tags: list[str], hidden_size: int):
        super().__init__()
        if len(tags) < 2:
            raise EncoderError("need at least two tags to classify")
        if len(set(tags)) != len(tags):
            raise EncoderError("duplicate tags in tag set")
        self.tags = list(tags)
        self.linear = nn.Linear(hidden_size, len(tags), dtype=torch.float64)

    def forward(self, word_vectors: torch.Tensor) -> torch.Tensor:
        if word_vectors.shape[-1] != self.linear.in_features:
            raise EncoderError(
                f"head expects dimension {self.linear.in_features}, got {word_vectors.shape[-1]}"
            )
        return self.linear(word_vectors.to(torch.float64))

    def tag_to_id(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tags)}


def classify_tokens(enc: EncodedSentence, head: ClassifierHead) -> TokenPredictions:
    """Softmax tag distributions and raw argmax tags for one sentence."""
    with torch.no_grad():
        logits = head(enc.word_vectors)
        probs = torch.softmax(logits, dim=-1).cpu().numpy()
    ids = np.argmax(probs, axis=1)
    return TokenPredictions(probs, [head.tags[i] for i in ids], list(head.tags))


def decode_labels(preds: TokenPredictions) -> list[str]:
    """Argmax tags (lowest index wins ties) passed through IOB2 repair."""
    return repair_labels(list(preds.tags))


# ---------------------------------------------------------------------------
# Pretrained backbone (optional dependency, imported lazily)
# ---------------------------------------------------------------------------

def _load_pretrained(config: EncoderConfig):
    try:
        from transformers import AutoModel, AutoTokenizer
    except ImportError as exc:
        raise EncoderError(
            "pretrained-transformer mode needs the transformers package"
        ) from exc
    tokenizer = AutoTokenizer.from_pretrained(config.model_name)
    model = AutoModel.from_pretrained(config.model_name)
    model.eval()
    return tokenizer, model


def _hf_subword_lengths(tokenizer, tokens: list[str]) -> list[int]:
    enc = tokenizer(tokens, is_split_into_words=True, add_special_tokens=False)
    lengths = [0] * len(tokens)
    for word_idx in enc.word_ids():
        if word_idx is not None:
            lengths[word_idx] += 1
    if any(n == 0 for n in lengths):
        raise EncoderError("tokenizer produced no pieces for some word")
    return lengths


def _hf_encode(encoder: Encoder, sentences, alignments) -> list[EncodedSentence]:
    tokenizer, model = encoder.tokenizer, encoder.backbone
    overflow = encoder.config.on_overflow
    batch = tokenizer(
        [s.tokens for s in sentences],
        is_split_into_words=True,
        padding=True,
        truncation=True,
        max_length=encoder.config.max_seq_len,
        return_tensors="pt",
    )
    out = model(**batch).last_hidden_state.to(torch.float64)
    encoded = []
    for row, sentence in enumerate(sentences):
        word_ids = batch.word_ids(batch_index=row)
        first_rows: dict[int, int] = {}
        for pos, word_idx in enumerate(word_ids):
            if word_idx is not None and word_idx not in first_rows:
                first_rows[word_idx] = pos
        if len(first_rows) < len(sentence):
            if overflow == "error":
                raise EncoderError(
                    f"sentence {sentence.id!r} exceeds max_seq_len={encoder.config.max_seq_len}"
                )
            logger.warning(
                "sentence %r truncated to %d of %d words",
                sentence.id, len(first_rows), len(sentence),
            )
        positions = [first_rows[w] for w in sorted(first_rows)]
        encoded.append(
            EncodedSentence(
                h_cls=out[row, 0],
                word_vectors=out[row, positions] if positions else out[row, :0],
                sentence_id=sentence.id,
            )
        )
    return encoded
