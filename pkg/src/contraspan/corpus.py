"""Reading, validating, splitting, and synthesizing BIO-tagged span corpora.

The on-disk formats are two-column tab-separated CoNLL-style blocks
(blank line between sentences, optional ``# id: ...`` comment per block)
and a JSON-lines alternative with ``{"id", "tokens", "labels"}`` records.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TAG_PATTERN = re.compile(r"^(O|[BI]-\S+)$")
ID_COMMENT_PATTERN = re.compile(r"^#\s*id\s*[:=]\s*(\S+)\s*$")


class CorpusError(ValueError):
    """Base error for corpus ingestion and generation."""


class ParseError(CorpusError):
    """Structurally malformed input; carries a 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TagError(CorpusError):
    """A tag outside the O / B-<class> / I-<class> grammar."""


def tag_class(tag: str) -> str:
    """Class name of a tag: ``B-idiom`` -> ``idiom``, ``O`` -> ``O``."""
    return "O" if tag == "O" else tag[2:]


@dataclass
class LabeledSentence:
    """Word tokens with one BIO tag per word."""

    id: str
    tokens: list[str]
    labels: list[str]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels) or not self.tokens:
            raise CorpusError(
                f"sentence {self.id!r}: need equal, non-zero token/label counts "
                f"(got {len(self.tokens)} tokens, {len(self.labels)} labels)"
            )
        for tag in self.labels:
            if not TAG_PATTERN.match(tag):
                raise TagError(f"sentence {self.id!r}: invalid tag {tag!r}")

    def __len__(self) -> int:
        return len(self.tokens)

    def classes(self) -> set[str]:
        """Span classes present (excluding O)."""
        return {tag_class(t) for t in self.labels if t != "O"}


@dataclass
class DatasetSplit:
    """Disjoint train/dev/test portions of one corpus."""

    train: list[LabeledSentence]
    dev: list[LabeledSentence]
    test: list[LabeledSentence]
    seed: int
    ratios: tuple[float, float, float]

    def __iter__(self):
        yield from (self.train, self.dev, self.test)

    def sizes(self) -> tuple[int, int, int]:
        return (len(self.train), len(self.dev), len(self.test))


@dataclass
class SubwordAlignment:
    """Maps words to their first sub-token position.

    ``supervision_mask`` spans all sub-token positions and is true exactly
    at first sub-tokens; continuation positions are excluded from the
    token-label loss.
    """

    first_subword_positions: list[int]
    supervision_mask: list[bool]

    def __post_init__(self):
        if sum(self.supervision_mask) != len(self.first_subword_positions):
            raise CorpusError("mask true-count must equal word count")
        if any(b >= a for a, b in zip(self.first_subword_positions[1:], self.first_subword_positions)):
            raise CorpusError("first-subword positions must be strictly increasing")


# ---------------------------------------------------------------------------
# Parsing / serialization
# ---------------------------------------------------------------------------

def parse_conll(text: str) -> list[LabeledSentence]:
    """Parse blank-line separated blocks of ``token<TAB>tag`` lines.

    A ``# id: name`` comment line at the start of a block sets the sentence
    id; otherwise ids are assigned positionally (``s0``, ``s1``, ...).
    """
    sentences: list[LabeledSentence] = []
    tokens: list[str] = []
    labels: list[str] = []
    block_id: str | None = None

    def flush():
        nonlocal tokens, labels, block_id
        if tokens:
            sid = block_id if block_id is not None else f"s{len(sentences)}"
            sentences.append(LabeledSentence(sid, tokens, labels))
        tokens, labels, block_id = [], [], None

    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            flush()
            continue
        m = ID_COMMENT_PATTERN.match(line)
        if m:
            block_id = m.group(1)
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise ParseError(line_no, f"expected 2 tab-separated columns, got {len(cols)}")
        token, tag = cols
        if not token:
            raise ParseError(line_no, "empty token")
        if not TAG_PATTERN.match(tag):
            raise TagError(f"line {line_no}: invalid tag {tag!r}")
        tokens.append(token)
        labels.append(tag)
    flush()
    return sentences


def serialize_conll(sentences: list[LabeledSentence]) -> str:
    blocks = []
    for sent in sentences:
        lines = [f"# id: {sent.id}"]
        lines += [f"{tok}\t{tag}" for tok, tag in zip(sent.tokens, sent.labels)]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def parse_jsonl(text: str) -> list[LabeledSentence]:
    """Parse one ``{"id", "tokens", "labels"}`` object per line."""
    sentences = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc}") from exc
        try:
            sentences.append(LabeledSentence(str(rec["id"]), list(rec["tokens"]), list(rec["labels"])))
        except KeyError as exc:
            raise ParseError(line_no, f"missing field {exc}") from exc
    return sentences


def serialize_jsonl(sentences: list[LabeledSentence]) -> str:
    lines = [
        json.dumps({"id": s.id, "tokens": s.tokens, "labels": s.labels}, ensure_ascii=False)
        for s in sentences
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def load_sentences(path: str | Path, repair: bool = True) -> list[LabeledSentence]:
    """Load a corpus file (.jsonl or CoNLL-style), repairing stray I- tags by default."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    sentences = parse_jsonl(text) if path.suffix == ".jsonl" else parse_conll(text)
    if repair:
        for sent in sentences:
            sent.labels = repair_labels(sent.labels)
    return sentences


def save_sentences(path: str | Path, sentences: list[LabeledSentence]) -> None:
    path = Path(path)
    text = serialize_jsonl(sentences) if path.suffix == ".jsonl" else serialize_conll(sentences)
    path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# Label repair and splitting
# ---------------------------------------------------------------------------

def repair_labels(labels: list[str]) -> list[str]:
    """Force valid IOB2: a stray I-<c> with no same-class predecessor becomes B-<c>.

    Idempotent; all other tags pass through unchanged.
    """
    repaired: list[str] = []
    for i, tag in enumerate(labels):
        if tag.startswith("I-"):
            prev = repaired[i - 1] if i > 0 else "O"
            if prev not in (f"B-{tag[2:]}", tag):
                tag = "B-" + tag[2:]
        repaired.append(tag)
    return repaired


def is_valid_iob2(labels: list[str]) -> bool:
    return labels == repair_labels(labels)


def split_dataset(
    sentences: list[LabeledSentence],
    ratios: tuple[float, float, float],
    seed: int,
) -> DatasetSplit:
    """Shuffle with a seeded permutation, then cut at cumulative-ratio boundaries.

    Boundary indices are ``floor(n * cumulative_ratio)``, so e.g. 10 sentences
    at (0.8, 0.1, 0.1) give sizes (8, 1, 1) and 9 sentences give (7, 1, 1).
    """
    if not sentences:
        raise CorpusError("cannot split an empty corpus")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise CorpusError(f"need three non-negative ratios, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"ratios must sum to 1, got {sum(ratios)!r}")
    ids = [s.id for s in sentences]
    if len(set(ids)) != len(ids):
        raise CorpusError("duplicate sentence ids; splits must be disjoint by id")

    n = len(sentences)
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [sentences[i] for i in perm]
    # 1e-9 guards against products like 10 * (0.8 + 0.1) landing a hair below an integer
    b1 = int(math.floor(n * ratios[0] + 1e-9))
    b2 = int(math.floor(n * (ratios[0] + ratios[1]) + 1e-9))
    return DatasetSplit(
        train=shuffled[:b1],
        dev=shuffled[b1:b2],
        test=shuffled[b2:],
        seed=seed,
        ratios=tuple(ratios),
    )


def align_to_subwords(sentence: LabeledSentence, subword_lengths: list[int]) -> SubwordAlignment:
    """Compute first-subword positions and the supervision mask for one sentence."""
    if len(subword_lengths) != len(sentence):
        raise CorpusError(
            f"sentence {sentence.id!r}: {len(sentence)} words but "
            f"{len(subword_lengths)} subword lengths"
        )
    if any(l < 1 for l in subword_lengths):
        raise CorpusError("every word needs at least one subword")
    positions = []
    cursor = 0
    for length in subword_lengths:
        positions.append(cursor)
        cursor += length
    mask = [False] * cursor
    for p in positions:
        mask[p] = True
    return SubwordAlignment(positions, mask)


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------
#
# Desk-scale data: each phrase has figurative templates (span labeled) and
# literal templates (same surface form, all O), so span-level hard negatives
# exist by construction. {P} expands to the phrase, {W} to a filler word.

DEFAULT_INVENTORY: dict[str, dict[str, list[str]]] = {
    "saw the light": {
        "figurative": [
            "after years of stubborn doubt the {W} finally {P} and changed course",
            "the skeptic {P} once the {W} numbers came in",
            "our {W} committee at last {P} about the {W} plan",
        ],
        "literal": [
            "from the {W} window she {P} of the {W} lighthouse",
            "he {P} of a {W} lamp flickering across the {W} yard",
        ],
    },
    "spill the beans": {
        "figurative": [
            "do not {P} about the {W} party before friday",
            "under {W} pressure the witness {P} to the {W} reporters",
        ],
        "literal": [
            "the clumsy {W} cook {P} all over the {W} counter",
            "watch the {W} jar or you will {P} onto the floor",
        ],
    },
    "break the ice": {
        "figurative": [
            "a {W} joke helped {P} at the {W} meeting",
            "she told a story to {P} with the new {W} team",
        ],
        "literal": [
            "the {W} fishermen {P} with a {W} drill each morning",
            "crews {P} on the {W} river so barges could pass",
        ],
    },
    "under the weather": {
        "figurative": [
            "he stayed home feeling {P} after the {W} trip",
            "our {W} manager sounded {P} on the {W} call",
        ],
        "literal": [
            "the {W} sensors sit {P} station on the {W} roof",
            "they parked {P} balloon near the {W} field",
        ],
    },
    "on thin ice": {
        "figurative": [
            "after the {W} audit the vendor is {P} with us",
            "missing another {W} deadline puts you {P} here",
        ],
        "literal": [
            "the {W} skaters drifted {P} near the {W} shore",
            "do not drive {P} when the {W} lake barely froze",
        ],
    },
    "piece of cake": {
        "figurative": [
            "the {W} exam was a {P} for her",
            "porting the {W} script is a {P} honestly",
        ],
        "literal": [
            "he saved a {P} from the {W} wedding",
            "each {W} guest took one {P} home",
        ],
    },
    "cold feet": {
        "figurative": [
            "the buyer got {P} right before the {W} signing",
            "{W} investors develop {P} when markets wobble",
        ],
        "literal": [
            "wool socks fix {P} on {W} winter hikes",
            "the {W} tent left us with {P} all night",
        ],
    },
    "jump through hoops": {
        "figurative": [
            "applicants {P} to get the {W} permit",
            "we had to {P} for the {W} refund",
        ],
        "literal": [
            "the {W} dogs {P} at the {W} circus",
            "trainers teach dolphins to {P} for fish",
        ],
    },
    "bite the bullet": {
        "figurative": [
            "we decided to {P} and rewrite the {W} module",
            "sometimes you {P} and pay the {W} fee",
        ],
        "literal": [
            "the {W} museum shows soldiers made to {P} during surgery",
            "he chipped a tooth trying to {P} on a dare",
        ],
    },
    "in hot water": {
        "figurative": [
            "the {W} firm landed {P} over the leaked {W} memo",
            "skipping the {W} inspection put them {P} quickly",
        ],
        "literal": [
            "soak the {W} beans {P} for an hour",
            "the {W} cups sat {P} until they were clean",
        ],
    },
}

_ONSETS = "b c d f g h j k l m n p r s t v w z br st tr".split()
_VOWELS = "a e i o u".split()
_CODAS = ["", "n", "r", "s", "l", "m"]


def make_vocabulary(size: int) -> list[str]:
    """Deterministic pseudo-word fillers (``bano``, ``stelu``, ...)."""
    if size < 1:
        raise CorpusError("vocabulary size must be positive")
    words: list[str] = []
    seen = set()
    i = 0
    while len(words) < size:
        onset = _ONSETS[i % len(_ONSETS)]
        vowel = _VOWELS[(i // len(_ONSETS)) % len(_VOWELS)]
        coda = _CODAS[(i // (len(_ONSETS) * len(_VOWELS))) % len(_CODAS)]
        tail = str(i // (len(_ONSETS) * len(_VOWELS) * len(_CODAS)) or "")
        word = f"{onset}{vowel}{coda}{tail}"
        if word not in seen:
            seen.add(word)
            words.append(word)
        i += 1
    return words


@dataclass
class SynthesisConfig:
    vocab_size: int = 200
    inventory: dict[str, dict[str, list[str]]] = field(
        default_factory=lambda: {k: dict(v) for k, v in DEFAULT_INVENTORY.items()}
    )
    train_count: int = 2000
    dev_count: int = 200
    test_count: int = 200
    idiom_rate: float = 0.5
    seed: int = 0
    span_class: str = "idiom"

    def __post_init__(self):
        if not 0.0 <= self.idiom_rate <= 1.0:
            raise CorpusError(f"idiom_rate must be in [0, 1], got {self.idiom_rate}")
        if not self.inventory:
            raise CorpusError("phrase inventory must be non-empty")
        for phrase, groups in self.inventory.items():
            if not groups.get("figurative") or not groups.get("literal"):
                raise CorpusError(f"phrase {phrase!r} needs figurative and literal templates")


def _realize(template: str, phrase: str, span_class: str, figurative: bool,
             vocab: list[str], rng: np.random.Generator) -> tuple[list[str], list[str]]:
    tokens: list[str] = []
    labels: list[str] = []
    for part in template.split():
        if part == "{P}":
            for j, word in enumerate(phrase.split()):
                tokens.append(word)
                if figurative:
                    labels.append(("B-" if j == 0 else "I-") + span_class)
                else:
                    labels.append("O")
        elif part == "{W}":
            tokens.append(vocab[int(rng.integers(len(vocab)))])
            labels.append("O")
        else:
            tokens.append(part)
            labels.append("O")
    return tokens, labels


def generate_synthetic_corpus(config: SynthesisConfig) -> DatasetSplit:
    """Deterministic figurative/literal corpus with planted homograph spans.

    Phrases rotate round-robin so every phrase occurs in every split; each
    sentence is figurative with probability ``idiom_rate`` and contains at
    most one labeled span.
    """
    rng = np.random.default_rng(config.seed)
    vocab = make_vocabulary(config.vocab_size)
    phrases = sorted(config.inventory)

    def build(split_name: str, count: int) -> list[LabeledSentence]:
        out = []
        for i in range(count):
            phrase = phrases[i % len(phrases)]
            figurative = bool(rng.random() < config.idiom_rate)
            group = "figurative" if figurative else "literal"
            templates = config.inventory[phrase][group]
            template = templates[int(rng.integers(len(templates)))]
            tokens, labels = _realize(template, phrase, config.span_class, figurative, vocab, rng)
            out.append(LabeledSentence(f"{split_name}-{i:05d}", tokens, labels))
        return out

    return DatasetSplit(
        train=build("train", config.train_count),
        dev=build("dev", config.dev_count),
        test=build("test", config.test_count),
        seed=config.seed,
        ratios=_normalized_counts(config),
    )


def _normalized_counts(config: SynthesisConfig) -> tuple[float, float, float]:
    total = config.train_count + config.dev_count + config.test_count
    if total == 0:
        return (0.0, 0.0, 0.0)
    return (config.train_count / total, config.dev_count / total, config.test_count / total)
