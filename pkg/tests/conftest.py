from __future__ import annotations

import pytest

from contraspan.corpus import SynthesisConfig, generate_synthetic_corpus, save_sentences
from contraspan.encoder import EncoderConfig
from contraspan.harness import ExperimentConfig
from contraspan.objective import ContrastiveConfig


def write_split_dir(root, split, fmt="conll"):
    root.mkdir(parents=True, exist_ok=True)
    for name, sentences in (("train", split.train), ("dev", split.dev), ("test", split.test)):
        save_sentences(root / f"{name}.{fmt}", sentences)
    return root


@pytest.fixture(scope="session")
def tiny_corpus():
    config = SynthesisConfig(
        vocab_size=120, train_count=120, dev_count=30, test_count=30, seed=3
    )
    return generate_synthetic_corpus(config)


@pytest.fixture(scope="session")
def tiny_corpus_dir(tiny_corpus, tmp_path_factory):
    return write_split_dir(tmp_path_factory.mktemp("tiny-data"), tiny_corpus)


@pytest.fixture(scope="session")
def full_corpus_dir(tmp_path_factory):
    config = SynthesisConfig(
        vocab_size=1024, train_count=2000, dev_count=200, test_count=200, seed=7
    )
    split = generate_synthetic_corpus(config)
    return write_split_dir(tmp_path_factory.mktemp("full-data"), split)


def tiny_encoder_config(**overrides) -> EncoderConfig:
    base = dict(
        mode="tiny-from-scratch",
        hidden_size=16,
        num_layers=1,
        num_heads=2,
        max_seq_len=64,
        vocab_size=256,
        seed=0,
    )
    base.update(overrides)
    return EncoderConfig(**base)


@pytest.fixture(scope="session")
def local_bert(tmp_path_factory):
    """A tiny randomly initialized BERT saved to disk, fully offline."""
    transformers = pytest.importorskip("transformers")
    import json

    root = tmp_path_factory.mktemp("local-bert")
    config = transformers.BertConfig(
        vocab_size=24,
        hidden_size=16,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=32,
    )
    model = transformers.AutoModel.from_config(config)
    model.save_pretrained(root)
    vocab = [
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
        "the", "cat", "saw", "light", "##s", "##house",
    ]
    (root / "vocab.txt").write_text("\n".join(vocab) + "\n")
    (root / "tokenizer_config.json").write_text(
        json.dumps({"tokenizer_class": "BertTokenizer", "do_lower_case": True})
    )
    return str(root)


@pytest.fixture(scope="session")
def hf_encoder(local_bert):
    from contraspan.encoder import Encoder

    return Encoder(
        EncoderConfig(mode="pretrained-transformer", model_name=local_bert, max_seq_len=32)
    )


def tiny_experiment(dataset_dir, output_dir, **overrides) -> ExperimentConfig:
    base = dict(
        dataset_name="synthetic",
        dataset_dir=str(dataset_dir),
        output_dir=str(output_dir),
        encoder=tiny_encoder_config(),
        contrastive=ContrastiveConfig(lambda_span=0.5, top_k=3),
        batch_size=4,
        max_steps=40,
        eval_interval=20,
        seed=1,
        learning_rate=2e-3,
        warmup_steps=10,
    )
    base.update(overrides)
    return ExperimentConfig(**base)
