"""
Projecting span embeddings to 2-D maps
======================================

Trains a joint model briefly, pulls sentence-, word-, and span-level
embeddings from its checkpoint, and renders side-by-side PCA panels with
silhouette scores in the sidecar files.
"""

from pathlib import Path

from contraspan.analysis import (
    ProjectionParams,
    emit_plot,
    extract_embeddings,
    project,
)
from contraspan.corpus import SynthesisConfig, generate_synthetic_corpus, save_sentences
from contraspan.encoder import EncoderConfig
from contraspan.harness import ExperimentConfig, load_dataset_dir, train
from contraspan.objective import ContrastiveConfig

base = Path("demo_runs/maps")
data_dir = base / "data"
data_dir.mkdir(parents=True, exist_ok=True)

split = generate_synthetic_corpus(
    SynthesisConfig(vocab_size=300, train_count=300, dev_count=60, test_count=60, seed=13)
)
for name, sentences in (("train", split.train), ("dev", split.dev), ("test", split.test)):
    save_sentences(data_dir / f"{name}.conll", sentences)

record = train(ExperimentConfig(
    dataset_name="synthetic",
    dataset_dir=str(data_dir),
    output_dir=str(base / "run"),
    encoder=EncoderConfig(mode="tiny-from-scratch", hidden_size=32, num_layers=1,
                          num_heads=4, max_seq_len=64, vocab_size=512),
    contrastive=ContrastiveConfig(lambda_span=0.5, top_k=3),
    batch_size=8,
    max_steps=200,
    eval_interval=100,
    seed=4,
    selection_metric="sa",
    learning_rate=2e-3,
    warmup_steps=20,
))

# one point per sentence, word, or same-label run, each with metadata
sentences = load_dataset_dir(data_dir)["dev"]
for kind in ("cls", "word", "span"):
    dump = extract_embeddings(record.checkpoint_path, sentences, kind)
    print(f"{kind}: {dump.points.shape[0]} points, labels {sorted(set(dump.labels()))}")

# PCA panels for the sentence and span views of the same checkpoint
panels = []
for kind in ("cls", "span"):
    dump = extract_embeddings(record.checkpoint_path, sentences, kind)
    panels.append((dump, project(dump, "pca")))
written = emit_plot(panels, base / "map_pca.png")
for name, path in written.items():
    print(f"{name}: {path}")

# the t-SNE route is seeded; small corpora need a small perplexity
cls_dump = extract_embeddings(record.checkpoint_path, sentences, "cls")
params = ProjectionParams(perplexity=10.0, max_iter=500, seed=0)
coords = project(cls_dump, "tsne", params).coords
print(f"tsne coords shape: {coords.shape}")
