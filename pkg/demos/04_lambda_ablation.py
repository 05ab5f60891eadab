"""
Sweeping the span-loss coefficient
==================================

Retrains the same setup at several lambda values, prints the resulting
dev/test table, and shows which coefficient each dev metric would pick.
"""

from pathlib import Path

from contraspan.corpus import SynthesisConfig, generate_synthetic_corpus, save_sentences
from contraspan.encoder import EncoderConfig
from contraspan.harness import ExperimentConfig, ablate_lambda
from contraspan.objective import ContrastiveConfig

base = Path("demo_runs/ablation")
data_dir = base / "data"
data_dir.mkdir(parents=True, exist_ok=True)

split = generate_synthetic_corpus(
    SynthesisConfig(vocab_size=300, train_count=300, dev_count=50, test_count=50, seed=9)
)
for name, sentences in (("train", split.train), ("dev", split.dev), ("test", split.test)):
    save_sentences(data_dir / f"{name}.conll", sentences)

config = ExperimentConfig(
    dataset_name="synthetic",
    dataset_dir=str(data_dir),
    output_dir=str(base / "grid"),
    encoder=EncoderConfig(mode="tiny-from-scratch", hidden_size=32, num_layers=1,
                          num_heads=4, max_seq_len=64, vocab_size=512),
    contrastive=ContrastiveConfig(top_k=3),
    batch_size=8,
    max_steps=200,
    eval_interval=100,
    seed=2,
    selection_metric="sa",
    learning_rate=2e-3,
    warmup_steps=20,
)

# each grid point trains in its own lambda_* subdirectory
grid = [0.0, 0.25, 0.5, 1.0]
result = ablate_lambda(config, grid)

print("lambda   dev SA   dev F1   test SA  test F1  test GM")
for lam in grid:
    record = result.record_for(lam)
    dev, test = record.dev_report, record.test_report
    print(f"{lam:<7g}  {dev.sa:.4f}   {dev.f1:.4f}   {test.sa:.4f}   "
          f"{test.f1:.4f}   {test.gm:.4f}")

print(f"\nbest lambda by dev SA: {result.best_lambda_by_sa:g}")
print(f"best lambda by dev F1: {result.best_lambda_by_f1:g}")
print(f"artifacts: {sorted(p.name for p in (base / 'grid').iterdir())}")
