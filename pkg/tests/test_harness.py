from __future__ import annotations

import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import torch

import contraspan.harness as harness
from contraspan.checkpoint import load_checkpoint, read_metadata
from contraspan.corpus import LabeledSentence
from contraspan.encoder import ClassifierHead, Encoder
from contraspan.harness import (
    EVAL_BATCH,
    LARGE_DATASET_THRESHOLD,
    ExperimentConfig,
    HarnessError,
    RunRecord,
    ablate_lambda,
    cross_evaluate,
    dataset_classes,
    emit_reports,
    evaluate_model,
    generalization_delta,
    load_dataset_dir,
    predict_tags,
    resolve_output_dir,
    tag_set_for_classes,
    train,
    _best_lambda,
    _mining_seed,
)
from contraspan.kvconfig import ConfigError, parse_kv_file
from contraspan.metrics import EvalReport
from contraspan.objective import LossBreakdown

from conftest import tiny_encoder_config, tiny_experiment, write_split_dir


# ---------------------------------------------------------------------------
# Configuration round trips
# ---------------------------------------------------------------------------

def test_config_kv_round_trip():
    config = tiny_experiment("data", "out", seed=9, eval_interval=25)
    again = ExperimentConfig.from_kv(config.to_kv())
    # the flat form carries one seed; it feeds both the run and the encoder
    assert again.encoder.seed == config.seed
    assert again == replace(config, encoder=replace(config.encoder, seed=config.seed))


def test_config_auto_interval_round_trips():
    config = tiny_experiment("data", "out", eval_interval=None)
    kv = config.to_kv()
    assert kv["eval_interval"] == "auto"
    assert ExperimentConfig.from_kv(kv).eval_interval is None


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="not_a_key"):
        ExperimentConfig.from_kv({"not_a_key": "1"})


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(batch_size=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(eval_interval=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(selection_metric="recall")
    with pytest.raises(ConfigError):
        ExperimentConfig(warmup_steps=0)


def test_eval_interval_scales_with_dataset_size():
    auto = ExperimentConfig()
    assert auto.resolved_eval_interval(100) == 10
    assert auto.resolved_eval_interval(LARGE_DATASET_THRESHOLD) == 10
    assert auto.resolved_eval_interval(LARGE_DATASET_THRESHOLD + 1) == 1000
    fixed = ExperimentConfig(eval_interval=77)
    assert fixed.resolved_eval_interval(10) == 77


def test_resolve_output_dir_env_anchor(monkeypatch, tmp_path):
    monkeypatch.delenv(harness.OUTPUT_ROOT_ENV, raising=False)
    assert resolve_output_dir("runs/x") == Path("runs/x")
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path))
    assert resolve_output_dir("runs/x") == tmp_path / "runs/x"
    assert resolve_output_dir("/abs/path") == Path("/abs/path")


# ---------------------------------------------------------------------------
# Dataset plumbing
# ---------------------------------------------------------------------------

def test_load_dataset_dir(tiny_corpus_dir, tiny_corpus):
    splits = load_dataset_dir(tiny_corpus_dir)
    assert [s.id for s in splits["train"]] == [s.id for s in tiny_corpus.train]
    assert dataset_classes(splits) == {"idiom"}


def test_load_dataset_dir_missing_split(tmp_path):
    (tmp_path / "train.conll").write_text("a\tO\n")
    (tmp_path / "dev.conll").write_text("a\tO\n")
    with pytest.raises(HarnessError, match="test"):
        load_dataset_dir(tmp_path)


def test_tag_set_ordering():
    assert tag_set_for_classes({"verb", "idiom"}) == [
        "O", "B-idiom", "I-idiom", "B-verb", "I-verb"
    ]
    assert tag_set_for_classes(set()) == ["O"]


def test_predict_tags_batch_size_invariant(tiny_corpus):
    encoder = Encoder(tiny_encoder_config(seed=2))
    head = ClassifierHead(["O", "B-idiom", "I-idiom"], encoder.hidden_size)
    sentences = tiny_corpus.dev
    assert predict_tags(encoder, head, sentences, batch_size=3) == predict_tags(
        encoder, head, sentences, batch_size=EVAL_BATCH
    )


def test_predict_tags_pads_truncated_tail():
    encoder = Encoder(tiny_encoder_config(max_seq_len=4))
    head = ClassifierHead(["O", "B-idiom", "I-idiom"], encoder.hidden_size)
    long = LabeledSentence("long", ["w"] * 10, ["O"] * 10)
    tags = predict_tags(encoder, head, [long])[0]
    assert len(tags) == 10
    assert tags[3:] == ["O"] * 7


def test_mining_seed_varies_by_epoch_and_sentence():
    base = _mining_seed(1, 0, "s1")
    assert _mining_seed(1, 0, "s1") == base
    assert _mining_seed(1, 1, "s1") != base
    assert _mining_seed(1, 0, "s2") != base
    assert _mining_seed(2, 0, "s1") != base


# ---------------------------------------------------------------------------
# Training runs (shared across the module to keep the suite fast)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def ablation(tiny_corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("ablation")
    config = tiny_experiment(tiny_corpus_dir, out / "grid")
    return config, ablate_lambda(config, [0.0, 0.5])


def test_train_writes_all_artifacts(ablation):
    config, result = ablation
    run_dir = Path(config.output_dir) / "lambda_0.5"
    for name in ("config.resolved", "checkpoint.zip", "run.json", "loss.csv", "dev_history.csv"):
        assert (run_dir / name).exists(), name
    resolved = parse_kv_file(run_dir / "config.resolved")
    assert resolved["lambda_span"] == "0.5"
    assert resolved["dataset_name"] == "synthetic"


def test_run_json_round_trips_without_wall_clock(ablation):
    config, result = ablation
    record = result.record_for(0.5)
    assert record.wall_clock_seconds > 0
    stored = json.loads((Path(config.output_dir) / "lambda_0.5" / "run.json").read_text())
    assert "wall_clock_seconds" not in json.dumps(stored)
    again = RunRecord.from_json_dict(stored)
    assert again.wall_clock_seconds == 0.0
    assert again.dev_history == record.dev_history
    assert again.test_report == record.test_report
    assert again.best_step == record.best_step


def test_dev_history_follows_eval_interval(ablation):
    config, result = ablation
    record = result.record_for(0.5)
    steps = [e["step"] for e in record.dev_history]
    assert steps == [20, 40]  # max_steps 40, interval 20
    assert record.best_step in steps


def test_selection_keeps_first_best_step(ablation):
    _, result = ablation
    record = result.record_for(0.5)
    values = {e["step"]: e["precision"] for e in record.dev_history}
    best = max(values.values())
    assert values[record.best_step] == best
    assert record.best_step == min(s for s, v in values.items() if v == best)


def test_loss_csv_has_one_row_per_step(ablation):
    config, result = ablation
    rows = (Path(config.output_dir) / "lambda_0.5" / "loss.csv").read_text().splitlines()
    assert rows[0] == "step,slot,span,total,eligible_anchors"
    assert len(rows) == 1 + 40
    first = rows[1].split(",")
    assert first[0] == "1"
    slot, span, total = float(first[1]), float(first[2]), float(first[3])
    assert abs(total - (slot + 0.5 * span)) < 1e-9


def test_lambda_zero_span_column_is_zero(ablation):
    config, result = ablation
    rows = (Path(config.output_dir) / "lambda_0" / "loss.csv").read_text().splitlines()[1:]
    for row in rows:
        _, slot, span, total, eligible = row.split(",")
        assert float(span) == 0.0
        assert int(eligible) == 0
        assert abs(float(total) - float(slot)) < 1e-12


def test_lambda_positive_engages_span_loss(ablation):
    config, result = ablation
    rows = (Path(config.output_dir) / "lambda_0.5" / "loss.csv").read_text().splitlines()[1:]
    assert any(int(row.split(",")[4]) > 0 for row in rows)
    assert any(float(row.split(",")[2]) != 0.0 for row in rows)


def test_checkpoint_extra_describes_run(ablation):
    config, result = ablation
    meta = read_metadata(result.record_for(0.5).checkpoint_path)
    extra = meta["extra"]
    assert extra["dataset_name"] == "synthetic"
    assert extra["lambda_span"] == 0.5
    assert extra["seed"] == config.seed
    assert extra["selected_step"] == result.record_for(0.5).best_step
    assert extra["selection_metric"] == "precision"
    assert extra["contrastive"]["top_k"] == 3


def test_dev_report_matches_best_history_entry(ablation):
    _, result = ablation
    record = result.record_for(0.5)
    entry = next(e for e in record.dev_history if e["step"] == record.best_step)
    assert record.dev_report.sa == entry["sa"]
    assert record.dev_report.f1 == entry["f1"]


def test_test_report_comes_from_restored_checkpoint(ablation, tiny_corpus):
    _, result = ablation
    record = result.record_for(0.5)
    encoder, head, _ = load_checkpoint(record.checkpoint_path)
    again = evaluate_model(encoder, head, tiny_corpus.test)
    assert again == record.test_report


def test_training_is_reproducible(tiny_corpus_dir, tmp_path):
    runs = []
    for name in ("a", "b"):
        config = tiny_experiment(tiny_corpus_dir, tmp_path / name, max_steps=20, eval_interval=20)
        runs.append((config, train(config)))
    (config_a, rec_a), (config_b, rec_b) = runs
    assert rec_a.dev_history == rec_b.dev_history
    assert rec_a.test_report == rec_b.test_report
    loss_a = (Path(config_a.output_dir) / "loss.csv").read_bytes()
    loss_b = (Path(config_b.output_dir) / "loss.csv").read_bytes()
    assert loss_a == loss_b
    ckpt_a = Path(rec_a.checkpoint_path).read_bytes()
    ckpt_b = Path(rec_b.checkpoint_path).read_bytes()
    assert ckpt_a == ckpt_b


def test_train_respects_output_env(tiny_corpus_dir, tmp_path, monkeypatch):
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path))
    config = tiny_experiment(tiny_corpus_dir, "rel/run", max_steps=5, eval_interval=5)
    record = train(config)
    assert (tmp_path / "rel/run/run.json").exists()
    assert str(tmp_path) in record.checkpoint_path


def test_nan_loss_writes_diagnostic(tiny_corpus_dir, tmp_path, monkeypatch):
    config = tiny_experiment(tiny_corpus_dir, tmp_path / "nan", max_steps=5, eval_interval=5)

    def explode(batch, encoder, head, config, policy, epoch):
        breakdown = LossBreakdown(
            slot=float("nan"), span_reg=0.0, span_hard=0.0, span=0.0,
            total=float("nan"), eligible_anchors=0,
        )
        return torch.tensor(float("nan"), dtype=torch.float64), breakdown

    monkeypatch.setattr(harness, "_batch_losses", explode)
    with pytest.raises(HarnessError, match="non-finite"):
        train(config)
    dump = json.loads((tmp_path / "nan" / "diagnostic.json").read_text())
    assert dump["step"] == 0
    assert len(dump["sentence_ids"]) > 0


# ---------------------------------------------------------------------------
# Ablation aggregation
# ---------------------------------------------------------------------------

def fake_record(lam, dev_sa):
    # fixed counts (tp=fp=fn=1) keep precision/recall/f1 at 0.5; sa varies
    dev = EvalReport(
        n_sentences=10, tp=1, fp=1, fn=1, sa=dev_sa,
        precision=0.5, recall=0.5, f1=0.5, gm=math.sqrt(0.5 * dev_sa),
    )
    return RunRecord(
        config={}, lambda_span=lam, dev_history=[], best_step=0,
        dev_report=dev, test_report=dev, checkpoint_path="",
    )


def test_best_lambda_tie_goes_to_smaller():
    records = [fake_record(0.5, 0.5), fake_record(0.0, 0.5), fake_record(1.0, 0.5)]
    assert _best_lambda(records, "sa") == 0.0


def test_best_lambda_prefers_higher_metric():
    records = [fake_record(0.0, 0.2), fake_record(0.3, 0.8), fake_record(1.0, 0.5)]
    assert _best_lambda(records, "sa") == 0.3


def test_ablation_artifacts_and_selection(ablation):
    config, result = ablation
    assert {r.lambda_span for r in result.records} == {0.0, 0.5}
    assert result.best_lambda_by_sa in (0.0, 0.5)
    assert result.best_lambda_by_f1 in (0.0, 0.5)
    out = Path(config.output_dir)
    curves = (out / "ablation.csv").read_text().splitlines()
    assert curves[0] == "lambda,dev_sa,dev_f1,test_sa,test_f1,test_gm"
    assert [row.split(",")[0] for row in curves[1:]] == ["0", "0.5"]
    blob = json.loads((out / "ablation.json").read_text())
    assert blob["best_lambda_by_sa"] == result.best_lambda_by_sa
    assert len(blob["runs"]) == 2
    with pytest.raises(KeyError):
        result.record_for(0.25)


def test_ablation_rejects_empty_grid(tiny_corpus_dir, tmp_path):
    config = tiny_experiment(tiny_corpus_dir, tmp_path / "empty")
    with pytest.raises(HarnessError):
        ablate_lambda(config, [])


# ---------------------------------------------------------------------------
# Cross-evaluation
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def crossed(ablation, tiny_corpus_dir):
    config, result = ablation
    models = [
        ("plain", result.record_for(0.0).checkpoint_path),
        ("contrastive", result.record_for(0.5).checkpoint_path),
    ]
    datasets = [("synthetic", tiny_corpus_dir)]
    return models, datasets, cross_evaluate(models, datasets)


def test_matrix_shape_and_names(crossed):
    models, datasets, matrix = crossed
    assert matrix.model_names == ["plain", "contrastive"]
    assert matrix.dataset_names == ["synthetic"]
    assert set(matrix.test) == {"plain", "contrastive"}
    assert set(matrix.test["plain"]) == {"synthetic"}


def test_self_cell_matches_training_report(crossed, ablation):
    _, result = ablation
    _, _, matrix = crossed
    for name, lam in (("plain", 0.0), ("contrastive", 0.5)):
        assert matrix.test[name]["synthetic"] == result.record_for(lam).test_report


def test_matrix_summaries(crossed):
    _, _, matrix = crossed
    summaries = matrix.summaries()
    for name in ("plain", "contrastive"):
        s = summaries[name]
        report = matrix.test[name]["synthetic"]
        assert s.k == 1
        assert s.mu_sa == report.sa
        assert s.hardest == "synthetic"
        assert s.r_gm == pytest.approx(math.sqrt(report.sa * report.f1))


def test_unknown_class_is_reported_by_name(crossed, tmp_path, tiny_corpus):
    models, _, _ = crossed
    alien = [
        LabeledSentence("m1", ["so", "to", "speak"], ["B-metaphor", "I-metaphor", "I-metaphor"])
    ]
    from contraspan.corpus import DatasetSplit
    split = DatasetSplit(train=alien, dev=alien, test=alien, seed=0, ratios=(1, 0, 0))
    alien_dir = write_split_dir(tmp_path / "alien", split)
    with pytest.raises(HarnessError) as exc:
        cross_evaluate(models[:1], [("alien", alien_dir)])
    message = str(exc.value)
    assert "plain" in message and "alien" in message and "metaphor" in message


def test_generalization_delta(ablation):
    _, result = ablation
    record = result.record_for(0.5)
    d_sa, d_f1 = generalization_delta(record)
    assert d_sa == pytest.approx(record.test_report.sa - record.dev_report.sa)
    assert d_f1 == pytest.approx(record.test_report.f1 - record.dev_report.f1)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def test_emit_reports_files_and_stability(crossed, ablation, tmp_path):
    _, result = ablation
    _, _, matrix = crossed
    out = tmp_path / "reports"
    paths = emit_reports(matrix, result.records, out)
    names = {p.name for p in paths}
    assert {"results.json", "deltas.csv", "cross_eval_test.txt",
            "cross_eval_dev.txt", "summaries.txt"} <= names
    before = {p: p.read_bytes() for p in paths}
    emit_reports(matrix, result.records, out)
    assert {p: p.read_bytes() for p in paths} == before

    store = json.loads((out / "results.json").read_text())
    assert len(store["runs"]) == 2
    assert store["matrix"]["model_names"] == ["plain", "contrastive"]
    assert set(store["summaries"]) == {"plain", "contrastive"}

    deltas = (out / "deltas.csv").read_text().splitlines()
    assert deltas[0] == "model,delta_sa,delta_f1"
    assert deltas[1].startswith("synthetic@0,")
    assert deltas[2].startswith("synthetic@0.5,")

    table = (out / "cross_eval_test.txt").read_text()
    assert "plain" in table and "synthetic" in table
    summary_table = (out / "summaries.txt").read_text()
    assert "mu_SA" in summary_table and "hardest" in summary_table


def test_emit_reports_empty_inputs(tmp_path):
    paths = emit_reports(None, [], tmp_path / "empty")
    store = json.loads((tmp_path / "empty" / "results.json").read_text())
    assert store["matrix"] is None
    assert store["runs"] == []
    assert store["summaries"] == {}
    deltas = (tmp_path / "empty" / "deltas.csv").read_text()
    assert deltas == "model,delta_sa,delta_f1\n"
    assert not (tmp_path / "empty" / "cross_eval_test.txt").exists()
