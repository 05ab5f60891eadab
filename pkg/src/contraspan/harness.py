"""Experiment harness: training, λ ablation, cross-evaluation, reports.

A dataset lives in a directory holding ``train``/``dev``/``test`` files
(``.conll`` or ``.jsonl``). Training minimizes slot loss plus λ times the
span contrastive loss over gold spans and mined negatives, evaluates on
dev at a fixed interval, keeps the checkpoint with the best dev selection
metric, and scores test once on the restored winner. Everything is
deterministic given the config seed, and every run re-writes its resolved
config next to its outputs.
"""

from __future__ import annotations

import json
import logging
import os
import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import LabeledSentence, load_sentences, tag_class
from .encoder import ClassifierHead, Encoder, EncoderConfig, classify_tokens, decode_labels
from .kvconfig import (
    ConfigError,
    coerce_bool,
    coerce_float,
    coerce_int,
    render_kv,
)
from .metrics import (
    CrossEvalSummary,
    EvalReport,
    evaluate_sequences,
    quadruple,
    summarize_cross_eval,
)
from .objective import ContrastiveConfig, LossBreakdown, SpanBatch, slot_loss, span_contrastive_loss, total_loss
from .spans import MiningPolicy, extract_gold_spans, mine_negative_spans, pool_span

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "CONTRASPAN_OUTPUT"
EVAL_BATCH = 32
SELECTION_METRICS = ("precision", "f1", "sa")
SPLIT_NAMES = ("train", "dev", "test")
# Interval defaults follow dataset size: frequent checks on small corpora,
# sparse ones past this many training sentences.
LARGE_DATASET_THRESHOLD = 10_000
SMALL_EVAL_INTERVAL = 10
LARGE_EVAL_INTERVAL = 1000


class HarnessError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    dataset_name: str = "synthetic"
    dataset_dir: str = "data/synthetic"
    output_dir: str = "runs/run"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    batch_size: int = 4
    max_steps: int = 600
    eval_interval: int | None = None
    seed: int = 0
    selection_metric: str = "precision"
    learning_rate: float = 1e-3
    warmup_steps: int = 50
    mine_negatives: bool = True
    mining_kind: str = "surface-then-random"
    mining_cap: int = 2
    mining_max_window: int = 4

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be at least 1, got {self.max_steps}")
        if self.eval_interval is not None and self.eval_interval < 1:
            raise ConfigError(f"eval_interval must be at least 1, got {self.eval_interval}")
        if self.selection_metric not in SELECTION_METRICS:
            raise ConfigError(
                f"selection_metric must be one of {SELECTION_METRICS}, got {self.selection_metric!r}"
            )
        if self.learning_rate <= 0 or self.warmup_steps < 1:
            raise ConfigError("learning_rate must be positive and warmup_steps at least 1")

    def resolved_eval_interval(self, train_size: int) -> int:
        if self.eval_interval is not None:
            return self.eval_interval
        return SMALL_EVAL_INTERVAL if train_size <= LARGE_DATASET_THRESHOLD else LARGE_EVAL_INTERVAL

    def to_kv(self) -> dict[str, str]:
        enc = self.encoder
        con = self.contrastive
        return {
            "dataset_name": self.dataset_name,
            "dataset_dir": self.dataset_dir,
            "output_dir": self.output_dir,
            "encoder_mode": enc.mode,
            "hidden_size": str(enc.hidden_size),
            "num_layers": str(enc.num_layers),
            "num_heads": str(enc.num_heads),
            "max_seq_len": str(enc.max_seq_len),
            "vocab_size": str(enc.vocab_size),
            "model_name": enc.model_name,
            "on_overflow": enc.on_overflow,
            "temperature": repr(con.temperature),
            "top_k": str(con.top_k),
            "normalize_spans": str(con.normalize_spans).lower(),
            "lambda_span": repr(con.lambda_span),
            "batch_size": str(self.batch_size),
            "max_steps": str(self.max_steps),
            "eval_interval": "auto" if self.eval_interval is None else str(self.eval_interval),
            "seed": str(self.seed),
            "selection_metric": self.selection_metric,
            "learning_rate": repr(self.learning_rate),
            "warmup_steps": str(self.warmup_steps),
            "mine_negatives": str(self.mine_negatives).lower(),
            "mining_kind": self.mining_kind,
            "mining_cap": str(self.mining_cap),
            "mining_max_window": str(self.mining_max_window),
        }

    @classmethod
    def from_kv(cls, pairs: dict[str, str]) -> "ExperimentConfig":
        base = cls().to_kv()
        unknown = sorted(set(pairs) - set(base))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kv = {**base, **pairs}
        encoder = EncoderConfig(
            mode=kv["encoder_mode"],
            hidden_size=coerce_int(kv["hidden_size"], "hidden_size"),
            num_layers=coerce_int(kv["num_layers"], "num_layers"),
            num_heads=coerce_int(kv["num_heads"], "num_heads"),
            max_seq_len=coerce_int(kv["max_seq_len"], "max_seq_len"),
            seed=coerce_int(kv["seed"], "seed"),
            vocab_size=coerce_int(kv["vocab_size"], "vocab_size"),
            model_name=kv["model_name"],
            on_overflow=kv["on_overflow"],
        )
        contrastive = ContrastiveConfig(
            temperature=coerce_float(kv["temperature"], "temperature"),
            top_k=coerce_int(kv["top_k"], "top_k"),
            normalize_spans=coerce_bool(kv["normalize_spans"], "normalize_spans"),
            lambda_span=coerce_float(kv["lambda_span"], "lambda_span"),
        )
        interval = kv["eval_interval"]
        return cls(
            dataset_name=kv["dataset_name"],
            dataset_dir=kv["dataset_dir"],
            output_dir=kv["output_dir"],
            encoder=encoder,
            contrastive=contrastive,
            batch_size=coerce_int(kv["batch_size"], "batch_size"),
            max_steps=coerce_int(kv["max_steps"], "max_steps"),
            eval_interval=None if interval == "auto" else coerce_int(interval, "eval_interval"),
            seed=coerce_int(kv["seed"], "seed"),
            selection_metric=kv["selection_metric"],
            learning_rate=coerce_float(kv["learning_rate"], "learning_rate"),
            warmup_steps=coerce_int(kv["warmup_steps"], "warmup_steps"),
            mine_negatives=coerce_bool(kv["mine_negatives"], "mine_negatives"),
            mining_kind=kv["mining_kind"],
            mining_cap=coerce_int(kv["mining_cap"], "mining_cap"),
            mining_max_window=coerce_int(kv["mining_max_window"], "mining_max_window"),
        )


def resolve_output_dir(path: str | Path) -> Path:
    """Anchor relative output paths at $CONTRASPAN_OUTPUT when set."""
    path = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


# ---------------------------------------------------------------------------
# Dataset plumbing
# ---------------------------------------------------------------------------

def load_dataset_dir(dataset_dir: str | Path) -> dict[str, list[LabeledSentence]]:
    """Load train/dev/test files (.conll or .jsonl) from one directory."""
    dataset_dir = Path(dataset_dir)
    splits: dict[str, list[LabeledSentence]] = {}
    for name in SPLIT_NAMES:
        candidates = [dataset_dir / f"{name}.conll", dataset_dir / f"{name}.jsonl"]
        found = [c for c in candidates if c.exists()]
        if not found:
            raise HarnessError(f"dataset {dataset_dir} is missing a {name} split file")
        splits[name] = load_sentences(found[0])
    return splits


def dataset_classes(splits: dict[str, list[LabeledSentence]]) -> set[str]:
    return set().union(*(s.classes() for split in splits.values() for s in split)) if splits else set()


def tag_set_for_classes(classes: set[str]) -> list[str]:
    """O first (so uniform logits decode to O), then B/I per class."""
    tags = ["O"]
    for cls in sorted(classes):
        tags += [f"B-{cls}", f"I-{cls}"]
    return tags


def predict_tags(
    encoder: Encoder,
    head: ClassifierHead,
    sentences: list[LabeledSentence],
    batch_size: int = EVAL_BATCH,
) -> list[list[str]]:
    """Decode repaired tag sequences; truncated tails fall back to O."""
    encoder.eval()
    predictions: list[list[str]] = []
    with torch.no_grad():
        for lo in range(0, len(sentences), batch_size):
            chunk = sentences[lo:lo + batch_size]
            for sentence, enc in zip(chunk, encoder.encode_batch(chunk)):
                tags = decode_labels(classify_tokens(enc, head))
                if len(tags) < len(sentence):
                    tags = tags + ["O"] * (len(sentence) - len(tags))
                predictions.append(tags)
    encoder.train()
    return predictions


def evaluate_model(
    encoder: Encoder, head: ClassifierHead, sentences: list[LabeledSentence]
) -> EvalReport:
    pred = predict_tags(encoder, head, sentences)
    return evaluate_sequences(pred, [s.labels for s in sentences])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    """Everything one training run produced (wall clock stays in memory)."""

    config: dict[str, str]
    lambda_span: float
    dev_history: list[dict]
    best_step: int
    dev_report: EvalReport
    test_report: EvalReport
    checkpoint_path: str
    wall_clock_seconds: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "lambda_span": self.lambda_span,
            "dev_history": self.dev_history,
            "best_step": self.best_step,
            "dev_report": json.loads(self.dev_report.to_json()),
            "test_report": json.loads(self.test_report.to_json()),
            "checkpoint_path": self.checkpoint_path,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RunRecord":
        return cls(
            config=d["config"],
            lambda_span=d["lambda_span"],
            dev_history=d["dev_history"],
            best_step=d["best_step"],
            dev_report=EvalReport.from_json(json.dumps(d["dev_report"])),
            test_report=EvalReport.from_json(json.dumps(d["test_report"])),
            checkpoint_path=d["checkpoint_path"],
        )


def _report_metric(report: EvalReport, metric: str) -> float:
    return {"precision": report.precision, "f1": report.f1, "sa": report.sa}[metric]


def _mining_seed(seed: int, epoch: int, sentence_id: str) -> int:
    entropy = np.random.SeedSequence([seed, epoch, zlib.crc32(sentence_id.encode("utf-8"))])
    return int(entropy.generate_state(1)[0])


def _batch_losses(
    batch: list[LabeledSentence],
    encoder: Encoder,
    head: ClassifierHead,
    config: ExperimentConfig,
    policy: MiningPolicy | None,
    epoch: int,
) -> tuple[torch.Tensor, LossBreakdown]:
    """One minibatch objective; the span path is skipped entirely at λ=0."""
    tag_to_id = head.tag_to_id()
    encoded = encoder.encode_batch(batch)
    slot_terms = []
    for sentence, enc in zip(batch, encoded):
        n = enc.word_vectors.shape[0]
        logits = head(enc.word_vectors)
        gold = [tag_to_id[t] for t in sentence.labels[:n]]
        slot_terms.append(slot_loss(logits, gold, [True] * n))
    slot = torch.stack(slot_terms).mean()

    lam = config.contrastive.lambda_span
    if lam == 0.0:
        span = torch.zeros((), dtype=torch.float64)
        reg = hard = span
        eligible = 0
    else:
        pooled = []
        for sentence, enc in zip(batch, encoded):
            n = enc.word_vectors.shape[0]
            spans = [s for s in extract_gold_spans(sentence) if s.end <= n]
            if policy is not None:
                seed = _mining_seed(config.seed, epoch, sentence.id)
                spans += [s for s in mine_negative_spans(sentence, policy, seed) if s.end <= n]
            pooled += [pool_span(enc, s, config.contrastive.normalize_spans) for s in spans]
        span_batch = SpanBatch.from_embeddings(pooled)
        span, reg, hard, eligible = span_contrastive_loss(span_batch, config.contrastive)

    total = total_loss(slot, span, lam)
    breakdown = LossBreakdown(
        slot=float(slot.detach()), span_reg=float(reg.detach()), span_hard=float(hard.detach()),
        span=float(span.detach()), total=float(total.detach()), eligible_anchors=eligible,
    )
    return total, breakdown


def train(config: ExperimentConfig) -> RunRecord:
    """Train one model and return its record.

    Written artifacts: ``config.resolved``, ``checkpoint.zip``, ``run.json``,
    ``loss.csv`` and ``dev_history.csv`` under the resolved output directory.
    """
    started = time.perf_counter()
    out_dir = resolve_output_dir(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved").write_text(render_kv(config.to_kv()), encoding="utf-8")

    splits = load_dataset_dir(config.dataset_dir)
    train_set, dev_set, test_set = splits["train"], splits["dev"], splits["test"]
    tags = tag_set_for_classes(dataset_classes(splits))
    interval = config.resolved_eval_interval(len(train_set))

    torch.manual_seed(config.seed)
    encoder_config = replace(config.encoder, seed=config.seed)
    encoder = Encoder(encoder_config)
    head = ClassifierHead(tags, encoder.hidden_size)
    encoder.train()
    params = list(encoder.parameters()) + list(head.parameters())
    optimizer = torch.optim.Adam(params, lr=config.learning_rate)

    policy = None
    if config.contrastive.lambda_span > 0 and config.mine_negatives:
        phrases = sorted({s.text(sent) for sent in train_set for s in extract_gold_spans(sent)})
        policy = MiningPolicy(
            kind=config.mining_kind,
            phrases=phrases,
            max_per_sentence=config.mining_cap,
            max_window=config.mining_max_window,
        )

    shuffle_rng = np.random.default_rng(config.seed)
    checkpoint_path = out_dir / "checkpoint.zip"
    dev_history: list[dict] = []
    loss_rows: list[str] = []
    best_value = float("-inf")
    best_step = -1
    step = 0
    epoch = 0

    def run_dev_eval(at_step: int) -> None:
        nonlocal best_value, best_step
        report = evaluate_model(encoder, head, dev_set)
        entry = {"step": at_step, **json.loads(report.to_json())}
        dev_history.append(entry)
        value = _report_metric(report, config.selection_metric)
        if value > best_value:
            best_value = value
            best_step = at_step
            save_checkpoint(
                checkpoint_path, encoder, head,
                extra={
                    "dataset_name": config.dataset_name,
                    "lambda_span": config.contrastive.lambda_span,
                    "contrastive": {
                        "temperature": config.contrastive.temperature,
                        "top_k": config.contrastive.top_k,
                        "normalize_spans": config.contrastive.normalize_spans,
                        "lambda_span": config.contrastive.lambda_span,
                    },
                    "seed": config.seed,
                    "selected_step": at_step,
                    "selection_metric": config.selection_metric,
                },
            )
        logger.info(
            "step %d dev %s sa=%s f1=%s p=%s", at_step, config.dataset_name,
            f"{report.sa:.4f}", f"{report.f1:.4f}", f"{report.precision:.4f}",
        )

    while step < config.max_steps:
        order = shuffle_rng.permutation(len(train_set))
        for lo in range(0, len(order), config.batch_size):
            if step >= config.max_steps:
                break
            batch = [train_set[i] for i in order[lo:lo + config.batch_size]]
            # linear warmup to the base rate, then constant
            lr = config.learning_rate * min(1.0, (step + 1) / config.warmup_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
            total, breakdown = _batch_losses(batch, encoder, head, config, policy, epoch)
            if not torch.isfinite(total):
                dump = {
                    "step": step,
                    "sentence_ids": [s.id for s in batch],
                    "breakdown": breakdown.as_dict(),
                }
                (out_dir / "diagnostic.json").write_text(json.dumps(dump, indent=1, sort_keys=True))
                raise HarnessError(f"non-finite loss at step {step}; diagnostic written to {out_dir}")
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            step += 1
            loss_rows.append(
                f"{step},{breakdown.slot:.10f},{breakdown.span:.10f},"
                f"{breakdown.total:.10f},{breakdown.eligible_anchors}"
            )
            if step % interval == 0:
                run_dev_eval(step)
        epoch += 1

    if not dev_history or dev_history[-1]["step"] != step:
        run_dev_eval(step)

    best_entry = next(e for e in dev_history if e["step"] == best_step)
    dev_report = EvalReport.from_json(json.dumps({k: v for k, v in best_entry.items() if k != "step"}))
    restored_encoder, restored_head, _ = load_checkpoint(checkpoint_path)
    test_report = evaluate_model(restored_encoder, restored_head, test_set)

    record = RunRecord(
        config=config.to_kv(),
        lambda_span=config.contrastive.lambda_span,
        dev_history=dev_history,
        best_step=best_step,
        dev_report=dev_report,
        test_report=test_report,
        checkpoint_path=str(checkpoint_path),
        wall_clock_seconds=time.perf_counter() - started,
    )
    (out_dir / "run.json").write_text(
        json.dumps(record.to_json_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "loss.csv").write_text(
        "step,slot,span,total,eligible_anchors\n" + "".join(r + "\n" for r in loss_rows),
        encoding="utf-8",
    )
    (out_dir / "dev_history.csv").write_text(
        "step,sa,f1,precision,recall,gm\n"
        + "".join(
            f"{e['step']},{e['sa']:.10f},{e['f1']:.10f},{e['precision']:.10f},"
            f"{e['recall']:.10f},{e['gm']:.10f}\n"
            for e in dev_history
        ),
        encoding="utf-8",
    )
    logger.info(
        "run complete: dataset=%s lambda=%s best_step=%d test sa=%.4f f1=%.4f (%.1fs)",
        config.dataset_name, config.contrastive.lambda_span, best_step,
        test_report.sa, test_report.f1, record.wall_clock_seconds,
    )
    return record


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------

@dataclass
class AblationResult:
    records: list[RunRecord]
    best_lambda_by_sa: float
    best_lambda_by_f1: float

    def record_for(self, lam: float) -> RunRecord:
        for record in self.records:
            if record.lambda_span == lam:
                return record
        raise KeyError(f"no run at lambda {lam}")


def _best_lambda(records: list[RunRecord], metric: str) -> float:
    best_lam, best_value = None, float("-inf")
    for record in sorted(records, key=lambda r: r.lambda_span):
        value = _report_metric(record.dev_report, metric)
        if value > best_value:
            best_lam, best_value = record.lambda_span, value
    return best_lam


def ablate_lambda(config: ExperimentConfig, grid: list[float]) -> AblationResult:
    """Train once per λ (shared seed); pick best λ by dev SA and by dev F1.

    Ties go to the smaller λ. Each run writes under
    ``<output_dir>/lambda_<value>``; curves land in ``ablation.csv``.
    """
    if not grid:
        raise HarnessError("ablation grid is empty")
    records = []
    for lam in grid:
        run_config = replace(
            config,
            contrastive=replace(config.contrastive, lambda_span=lam),
            output_dir=str(Path(config.output_dir) / f"lambda_{lam:g}"),
        )
        records.append(train(run_config))
    result = AblationResult(
        records=records,
        best_lambda_by_sa=_best_lambda(records, "sa"),
        best_lambda_by_f1=_best_lambda(records, "f1"),
    )
    out_dir = resolve_output_dir(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_ablation_curves(result, out_dir / "ablation.csv")
    (out_dir / "ablation.json").write_text(
        json.dumps(
            {
                "best_lambda_by_sa": result.best_lambda_by_sa,
                "best_lambda_by_f1": result.best_lambda_by_f1,
                "runs": [r.to_json_dict() for r in records],
            },
            indent=1, sort_keys=True,
        ) + "\n",
        encoding="utf-8",
    )
    return result


def write_ablation_curves(result: AblationResult, path: Path) -> None:
    rows = ["lambda,dev_sa,dev_f1,test_sa,test_f1,test_gm"]
    for record in sorted(result.records, key=lambda r: r.lambda_span):
        rows.append(
            f"{record.lambda_span:g},{record.dev_report.sa:.10f},{record.dev_report.f1:.10f},"
            f"{record.test_report.sa:.10f},{record.test_report.f1:.10f},{record.test_report.gm:.10f}"
        )
    path.write_text("".join(r + "\n" for r in rows), encoding="utf-8")


# ---------------------------------------------------------------------------
# Cross-evaluation
# ---------------------------------------------------------------------------

@dataclass
class CrossEvalMatrix:
    model_names: list[str]
    dataset_names: list[str]
    dev: dict[str, dict[str, EvalReport]]
    test: dict[str, dict[str, EvalReport]]

    def summaries(self) -> dict[str, CrossEvalSummary]:
        """Per-model μ/R aggregates over the test row."""
        out = {}
        for model in self.model_names:
            rows = [
                (ds, self.test[model][ds].sa, self.test[model][ds].f1)
                for ds in self.dataset_names
            ]
            out[model] = summarize_cross_eval(rows)
        return out

    def to_json_dict(self) -> dict:
        return {
            "model_names": self.model_names,
            "dataset_names": self.dataset_names,
            "dev": {m: {d: json.loads(r.to_json()) for d, r in row.items()} for m, row in self.dev.items()},
            "test": {m: {d: json.loads(r.to_json()) for d, r in row.items()} for m, row in self.test.items()},
        }


def cross_evaluate(
    models: list[tuple[str, str | Path]],
    datasets: list[tuple[str, str | Path]],
) -> CrossEvalMatrix:
    """Evaluate every checkpoint on every dataset's dev and test splits.

    A model must know every class a dataset uses; otherwise the mismatch
    is reported by name instead of silently scoring zeros.
    """
    loaded_datasets = [(name, load_dataset_dir(path)) for name, path in datasets]
    dev: dict[str, dict[str, EvalReport]] = {}
    test: dict[str, dict[str, EvalReport]] = {}
    for model_name, ckpt in models:
        encoder, head, _ = load_checkpoint(ckpt)
        model_classes = {tag_class(t) for t in head.tags if t != "O"}
        dev[model_name] = {}
        test[model_name] = {}
        for ds_name, splits in loaded_datasets:
            missing = sorted(dataset_classes(splits) - model_classes)
            if missing:
                raise HarnessError(
                    f"model {model_name!r} cannot score dataset {ds_name!r}: "
                    f"unknown class {missing[0]!r}"
                )
            dev[model_name][ds_name] = evaluate_model(encoder, head, splits["dev"])
            test[model_name][ds_name] = evaluate_model(encoder, head, splits["test"])
            logger.info(
                "cross-eval %s on %s: test %s", model_name, ds_name,
                test[model_name][ds_name].quadruple(),
            )
    return CrossEvalMatrix(
        model_names=[m for m, _ in models],
        dataset_names=[d for d, _ in datasets],
        dev=dev,
        test=test,
    )


def generalization_delta(record: RunRecord) -> tuple[float, float]:
    """(test − dev) for SA and F1; positive means test generalized better."""
    return (
        record.test_report.sa - record.dev_report.sa,
        record.test_report.f1 - record.dev_report.f1,
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _matrix_table(matrix: CrossEvalMatrix, cells: dict[str, dict[str, EvalReport]]) -> str:
    """Aligned text table of SA/F1/P/R quadruples, one row per model."""
    header = ["model"] + list(matrix.dataset_names)
    body = []
    for model in matrix.model_names:
        row = [model]
        for ds in matrix.dataset_names:
            report = cells[model][ds]
            row.append(quadruple(report.sa, report.f1, report.precision, report.recall))
        body.append(row)
    widths = [max(len(row[c]) for row in [header] + body) for c in range(len(header))]
    lines = ["  ".join(f"{cell:<{w}}" for cell, w in zip(row, widths)).rstrip()
             for row in [header] + body]
    return "\n".join(lines) + "\n"


def _summary_table(summaries: dict[str, CrossEvalSummary]) -> str:
    header = ["model", "mu_SA", "mu_F1", "mu_GM", "hardest", "R_SA", "R_F1", "R_GM"]
    body = [
        [
            model, f"{s.mu_sa:.4f}", f"{s.mu_f1:.4f}", f"{s.mu_gm:.4f}",
            s.hardest, f"{s.r_sa:.4f}", f"{s.r_f1:.4f}", f"{s.r_gm:.4f}",
        ]
        for model, s in summaries.items()
    ]
    widths = [max(len(row[c]) for row in [header] + body) for c in range(len(header))]
    lines = ["  ".join(f"{cell:<{w}}" for cell, w in zip(row, widths)).rstrip()
             for row in [header] + body]
    return "\n".join(lines) + "\n"


def emit_reports(
    matrix: CrossEvalMatrix | None,
    records: list[RunRecord],
    out_dir: str | Path,
) -> list[Path]:
    """Write the JSON result store plus text tables and CSVs; returns paths.

    Reruns over unchanged inputs rewrite identical bytes; an empty matrix
    or record list still produces header-only files.
    """
    out_dir = resolve_output_dir(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    store = {
        "runs": [r.to_json_dict() for r in records],
        "matrix": matrix.to_json_dict() if matrix else None,
        "summaries": {
            m: json.loads(s.to_json()) for m, s in (matrix.summaries() if matrix else {}).items()
        },
    }
    results = out_dir / "results.json"
    results.write_text(json.dumps(store, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    written.append(results)

    deltas = out_dir / "deltas.csv"
    delta_rows = ["model,delta_sa,delta_f1"]
    for record in records:
        d_sa, d_f1 = generalization_delta(record)
        name = f"{record.config.get('dataset_name', 'run')}@{record.lambda_span:g}"
        delta_rows.append(f"{name},{d_sa:.10f},{d_f1:.10f}")
    deltas.write_text("".join(r + "\n" for r in delta_rows), encoding="utf-8")
    written.append(deltas)

    if matrix is not None:
        for split, cells in (("test", matrix.test), ("dev", matrix.dev)):
            path = out_dir / f"cross_eval_{split}.txt"
            path.write_text(_matrix_table(matrix, cells), encoding="utf-8")
            written.append(path)
        summaries = out_dir / "summaries.txt"
        summaries.write_text(_summary_table(matrix.summaries()), encoding="utf-8")
        written.append(summaries)

    return written
