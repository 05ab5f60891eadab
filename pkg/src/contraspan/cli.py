"""Command line front end.

Verbs: ``synth-data``, ``train``, ``ablate``, ``cross-eval``, ``evaluate``,
``visualize``. Each verb reads an optional key=value config file, applies
``--set key=value`` overrides, writes the resolved parameters next to its
outputs, and produces deterministic files for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import ProjectionParams, extract_embeddings, project, emit_plot
from .corpus import SynthesisConfig, save_sentences
from .harness import (
    ExperimentConfig,
    ablate_lambda,
    cross_evaluate,
    emit_reports,
    evaluate_model,
    load_dataset_dir,
    resolve_output_dir,
    train,
)
from .checkpoint import load_checkpoint
from .kvconfig import (
    ConfigError,
    coerce_float,
    coerce_int,
    parse_kv_file,
    parse_overrides,
    render_kv,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID = "0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"


def _collect_kv(args) -> dict[str, str]:
    pairs: dict[str, str] = {}
    if getattr(args, "config", None):
        pairs.update(parse_kv_file(args.config))
    pairs.update(parse_overrides(getattr(args, "set", []) or []))
    return pairs


def _write_resolved(out_dir: Path, pairs: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved").write_text(render_kv(pairs), encoding="utf-8")


# ---------------------------------------------------------------------------
# synth-data
# ---------------------------------------------------------------------------

SYNTH_DEFAULTS = {
    "vocab_size": "200",
    "train_count": "2000",
    "dev_count": "200",
    "test_count": "200",
    "idiom_rate": "0.5",
    "seed": "0",
    "span_class": "idiom",
    "format": "conll",
}


def synthesis_config_from_kv(pairs: dict[str, str]) -> tuple[SynthesisConfig, str]:
    unknown = sorted(set(pairs) - set(SYNTH_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown synth-data keys: {', '.join(unknown)}")
    kv = {**SYNTH_DEFAULTS, **pairs}
    if kv["format"] not in ("conll", "jsonl"):
        raise ConfigError(f"format must be conll or jsonl, got {kv['format']!r}")
    config = SynthesisConfig(
        vocab_size=coerce_int(kv["vocab_size"], "vocab_size"),
        train_count=coerce_int(kv["train_count"], "train_count"),
        dev_count=coerce_int(kv["dev_count"], "dev_count"),
        test_count=coerce_int(kv["test_count"], "test_count"),
        idiom_rate=coerce_float(kv["idiom_rate"], "idiom_rate"),
        seed=coerce_int(kv["seed"], "seed"),
        span_class=kv["span_class"],
    )
    return config, kv["format"]


def cmd_synth_data(args) -> int:
    from .corpus import generate_synthetic_corpus

    pairs = _collect_kv(args)
    config, file_format = synthesis_config_from_kv(pairs)
    out_dir = resolve_output_dir(args.out)
    split = generate_synthetic_corpus(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, sentences in zip(("train", "dev", "test"), split):
        save_sentences(out_dir / f"{name}.{file_format}", sentences)
    _write_resolved(out_dir, {**SYNTH_DEFAULTS, **pairs})
    logger.info("wrote %d/%d/%d sentences to %s", *split.sizes(), out_dir)
    return 0


# ---------------------------------------------------------------------------
# train / ablate
# ---------------------------------------------------------------------------

def _experiment_config(args, extra: dict[str, str] | None = None) -> ExperimentConfig:
    pairs = _collect_kv(args)
    if extra:
        pairs.update(extra)
    if getattr(args, "out", None):
        pairs["output_dir"] = args.out
    return ExperimentConfig.from_kv(pairs)


def cmd_train(args) -> int:
    config = _experiment_config(args)
    record = train(config)
    print(f"test {record.test_report.quadruple()}  (SA/F1/P/R, best dev step {record.best_step})")
    return 0


def cmd_ablate(args) -> int:
    config = _experiment_config(args)
    grid = [float(v) for v in args.grid.split(",") if v.strip()]
    if not grid:
        raise ConfigError("ablation grid is empty")
    result = ablate_lambda(config, grid)
    print(f"best lambda by dev SA: {result.best_lambda_by_sa:g}")
    print(f"best lambda by dev F1: {result.best_lambda_by_f1:g}")
    return 0


# ---------------------------------------------------------------------------
# cross-eval / evaluate
# ---------------------------------------------------------------------------

def _parse_named(values: list[str], flag: str) -> list[tuple[str, str]]:
    out = []
    for item in values:
        if "=" not in item:
            raise ConfigError(f"{flag} entries look like name=path, got {item!r}")
        name, path = item.split("=", 1)
        out.append((name.strip(), path.strip()))
    return out


def cmd_cross_eval(args) -> int:
    models = _parse_named(args.models, "--models")
    datasets = _parse_named(args.datasets, "--datasets")
    matrix = cross_evaluate(models, datasets)
    out_dir = resolve_output_dir(args.out)
    emit_reports(matrix, [], out_dir)
    _write_resolved(out_dir, {
        "models": ",".join(f"{n}={p}" for n, p in models),
        "datasets": ",".join(f"{n}={p}" for n, p in datasets),
    })
    print((out_dir / "summaries.txt").read_text(encoding="utf-8"), end="")
    return 0


def cmd_evaluate(args) -> int:
    encoder, head, _ = load_checkpoint(args.checkpoint)
    splits = load_dataset_dir(args.dataset)
    if args.split not in splits:
        raise ConfigError(f"split must be one of train/dev/test, got {args.split!r}")
    report = evaluate_model(encoder, head, splits[args.split])
    out_dir = resolve_output_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    _write_resolved(out_dir, {
        "checkpoint": str(args.checkpoint),
        "dataset": str(args.dataset),
        "split": args.split,
    })
    print(f"{args.split} {report.quadruple()}  (SA/F1/P/R)")
    return 0


# ---------------------------------------------------------------------------
# visualize
# ---------------------------------------------------------------------------

def cmd_visualize(args) -> int:
    splits = load_dataset_dir(args.dataset)
    if args.split not in splits:
        raise ConfigError(f"split must be one of train/dev/test, got {args.split!r}")
    sentences = splits[args.split]
    if args.limit:
        sentences = sentences[: args.limit]
    out_dir = resolve_output_dir(args.out)
    params = ProjectionParams(perplexity=args.perplexity, max_iter=args.max_iter, seed=args.seed)
    panels = []
    for ckpt in args.checkpoint:
        dump = extract_embeddings(ckpt, sentences, args.kind)
        panels.append((dump, project(dump, args.method, params)))
    written = emit_plot(panels, out_dir / f"map_{args.kind}_{args.method}.png")
    _write_resolved(out_dir, {
        "checkpoints": ",".join(str(c) for c in args.checkpoint),
        "dataset": str(args.dataset),
        "split": args.split,
        "kind": args.kind,
        "method": args.method,
        "perplexity": repr(args.perplexity),
        "max_iter": str(args.max_iter),
        "seed": str(args.seed),
        "limit": str(args.limit or 0),
    })
    silhouettes = json.loads(written["silhouette"].read_text(encoding="utf-8"))
    for entry in silhouettes:
        value = entry["silhouette"]
        print(f"{entry['panel']}: silhouette {value:.4f}" if value is not None
              else f"{entry['panel']}: silhouette n/a")
    print(f"wrote {written['image']}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contraspan",
        description="Span-aware sequence labeling with a contrastive span objective.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def with_config(p):
        p.add_argument("--config", type=Path, help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")

    p = sub.add_parser("synth-data", help="generate the figurative/literal synthetic corpus")
    with_config(p)
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train one model")
    with_config(p)
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="train across a lambda grid")
    with_config(p)
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--grid", default=DEFAULT_GRID, help="comma-separated lambda values")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("cross-eval", help="evaluate checkpoints across datasets")
    p.add_argument("--models", action="append", required=True, metavar="NAME=CKPT")
    p.add_argument("--datasets", action="append", required=True, metavar="NAME=DIR")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cross_eval)

    p = sub.add_parser("evaluate", help="score one checkpoint on one dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("visualize", help="project embeddings to 2-D maps")
    p.add_argument("--checkpoint", action="append", required=True,
                   help="checkpoint archive (repeat for side-by-side panels)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--kind", default="span", choices=["cls", "word", "span"])
    p.add_argument("--method", default="pca", choices=["pca", "tsne"])
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=0, help="cap sentences (0 = all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_visualize)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname).1s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
