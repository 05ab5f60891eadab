"""
Synthesizing a literal vs. figurative labeling corpus
=====================================================

Builds a small seeded corpus where each figurative sentence embeds one
multi-word phrase labeled as a span, writes it to disk in both supported
formats, and round-trips it back.
"""

from pathlib import Path

from contraspan.corpus import (
    SynthesisConfig,
    generate_synthetic_corpus,
    load_sentences,
    repair_labels,
    save_sentences,
)

out_dir = Path("demo_runs/corpus")
out_dir.mkdir(parents=True, exist_ok=True)

# one config drives sizes, the figurative rate, and the span class
config = SynthesisConfig(
    vocab_size=200, train_count=60, dev_count=15, test_count=15,
    idiom_rate=0.5, seed=11,
)
split = generate_synthetic_corpus(config)
print(f"splits: {len(split.train)} train / {len(split.dev)} dev / {len(split.test)} test")

# figurative sentences carry a B-/I- span; literal ones are all O
figurative = next(s for s in split.train if s.classes())
literal = next(s for s in split.train if not s.classes())
for sentence in (figurative, literal):
    print(f"\n{sentence.id}:")
    for token, label in zip(sentence.tokens, sentence.labels):
        print(f"  {token:<12} {label}")

# both file formats hold the same sentences
for fmt in ("conll", "jsonl"):
    path = out_dir / f"train.{fmt}"
    save_sentences(path, split.train)
    again = load_sentences(path)
    assert [s.labels for s in again] == [s.labels for s in split.train]
    print(f"round-tripped {len(again)} sentences through {path}")

# loaders repair stray I- openers into B- so downstream code sees valid runs
print("\nrepair:", repair_labels(["I-idiom", "I-idiom", "O"]))
