"""Embedding extraction and 2-D maps of trained models.

Dumps collect CLS, word, or label-agnostic span embeddings with one
metadata row per point; projections reduce them with exact PCA or seeded
t-SNE; plots render scatter panels (one per model/λ/kind group) with CSV
and silhouette sidecars so every figure can be rebuilt from data files.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import torch
from sklearn.manifold import TSNE
from sklearn.metrics import silhouette_score

from .checkpoint import load_checkpoint
from .corpus import LabeledSentence
from .encoder import ClassifierHead, Encoder
from .spans import extract_label_agnostic_spans, pool_span

EMBEDDING_KINDS = ("cls", "word", "span")
PROJECTION_METHODS = ("pca", "tsne")


class AnalysisError(ValueError):
    pass


@dataclass
class EmbeddingDump:
    kind: str
    points: np.ndarray
    metadata: list[dict]
    model_tag: str = ""
    lambda_span: float | None = None

    def __post_init__(self):
        if self.kind not in EMBEDDING_KINDS:
            raise AnalysisError(f"kind must be one of {EMBEDDING_KINDS}, got {self.kind!r}")
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] != len(self.metadata):
            raise AnalysisError("need one metadata row per point")

    def labels(self) -> list[str]:
        return [str(m.get("label", "")) for m in self.metadata]

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"point": row.tolist(), **meta}, sort_keys=True)
            for row, meta in zip(self.points, self.metadata)
        ]
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class ProjectionParams:
    perplexity: float = 30.0
    max_iter: int = 1000
    seed: int = 0


@dataclass
class Projection:
    method: str
    coords: np.ndarray
    params: ProjectionParams = field(default_factory=ProjectionParams)

    def __post_init__(self):
        if self.method not in PROJECTION_METHODS:
            raise AnalysisError(f"method must be one of {PROJECTION_METHODS}, got {self.method!r}")
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise AnalysisError("coordinates must be (points x 2)")
        if not np.all(np.isfinite(self.coords)):
            raise AnalysisError("projection produced non-finite coordinates")


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def extract_embeddings_from_model(
    encoder: Encoder,
    head: ClassifierHead,
    sentences: list[LabeledSentence],
    kind: str,
    model_tag: str = "",
    lambda_span: float | None = None,
    batch_size: int = 32,
) -> EmbeddingDump:
    """Collect one point per sentence (cls), word, or label-agnostic run."""
    if kind not in EMBEDDING_KINDS:
        raise AnalysisError(f"unknown embedding kind {kind!r}")
    del head  # tags travel in the gold labels; the head plays no role here
    rows: list[np.ndarray] = []
    metadata: list[dict] = []
    encoder.eval()
    with torch.no_grad():
        for lo in range(0, len(sentences), batch_size):
            chunk = sentences[lo:lo + batch_size]
            for sentence, enc in zip(chunk, encoder.encode_batch(chunk)):
                n = enc.word_vectors.shape[0]
                if kind == "cls":
                    rows.append(enc.h_cls.cpu().numpy())
                    metadata.append({
                        "sentence_id": sentence.id,
                        "label": "figurative" if sentence.classes() else "literal",
                    })
                elif kind == "word":
                    for i in range(n):
                        rows.append(enc.word_vectors[i].cpu().numpy())
                        metadata.append({
                            "sentence_id": sentence.id,
                            "word_index": i,
                            "word": sentence.tokens[i],
                            "label": sentence.labels[i],
                        })
                else:
                    for span in extract_label_agnostic_spans(sentence.labels[:n], sentence.id):
                        pooled = pool_span(enc, span, normalize=False)
                        rows.append(pooled.z.cpu().numpy())
                        metadata.append({
                            "sentence_id": sentence.id,
                            "start": span.start,
                            "end": span.end,
                            "label": span.label,
                        })
    if not rows:
        raise AnalysisError("no points extracted")
    return EmbeddingDump(kind, np.stack(rows), metadata, model_tag, lambda_span)


def extract_embeddings(
    checkpoint_path: str | Path,
    sentences: list[LabeledSentence],
    kind: str,
) -> EmbeddingDump:
    """Same as above, starting from a checkpoint archive."""
    encoder, head, meta = load_checkpoint(checkpoint_path)
    extra = meta.get("extra", {})
    tag = extra.get("dataset_name", Path(checkpoint_path).stem)
    return extract_embeddings_from_model(
        encoder, head, sentences, kind,
        model_tag=tag, lambda_span=extra.get("lambda_span"),
    )


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

def pca_components(points: np.ndarray, n_components: int) -> tuple[np.ndarray, np.ndarray]:
    """(components, mean): rows are unit eigenvectors by descending variance.

    Signs follow the largest-magnitude loading of each component, so the
    decomposition is unique up to eigenvalue ties.
    """
    points = np.asarray(points, dtype=np.float64)
    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered / max(len(points) - 1, 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:n_components]
    components = eigenvectors[:, order].T
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return components, mean


def project(dump: EmbeddingDump, method: str, params: ProjectionParams | None = None) -> Projection:
    """Reduce a dump to 2-D: exact PCA or seeded t-SNE."""
    params = params or ProjectionParams()
    m = dump.points.shape[0]
    if method == "pca":
        if m < 3:
            raise AnalysisError(f"pca needs at least 3 points, got {m}")
        components, mean = pca_components(dump.points, 2)
        return Projection("pca", (dump.points - mean) @ components.T, params)
    if method == "tsne":
        if m < 3 * params.perplexity:
            raise AnalysisError(
                f"tsne needs at least {int(3 * params.perplexity)} points for "
                f"perplexity {params.perplexity}, got {m}"
            )
        tsne = TSNE(
            n_components=2,
            perplexity=params.perplexity,
            max_iter=params.max_iter,
            init="pca",
            random_state=params.seed,
        )
        return Projection("tsne", np.asarray(tsne.fit_transform(dump.points), dtype=np.float64), params)
    raise AnalysisError(f"unknown projection method {method!r}")


# ---------------------------------------------------------------------------
# Plotting
# ---------------------------------------------------------------------------

def _panel_title(dump: EmbeddingDump, projection: Projection) -> str:
    parts = [dump.model_tag or "model"]
    if dump.lambda_span is not None:
        parts.append(f"lambda={dump.lambda_span:g}")
    parts.append(dump.kind)
    parts.append(projection.method)
    return " ".join(parts)


def _silhouette(dump: EmbeddingDump, projection: Projection) -> float | None:
    labels = dump.labels()
    counts = {l: labels.count(l) for l in set(labels)}
    if len(counts) < 2 or min(counts.values()) < 2:
        return None
    return float(silhouette_score(projection.coords, labels))


def emit_plot(
    panels: list[tuple[EmbeddingDump, Projection]],
    out_path: str | Path,
) -> dict[str, Path]:
    """Render scatter panels and write CSV + silhouette sidecars.

    Returns the written paths keyed as image/csv/silhouette. Points are
    colored by label with a stable sorted label→color assignment.
    """
    if not panels:
        raise AnalysisError("need at least one panel")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    fig, axes = plt.subplots(1, len(panels), figsize=(5.2 * len(panels), 4.6), squeeze=False)
    colormap = plt.get_cmap("tab10")
    for ax, (dump, projection) in zip(axes[0], panels):
        if dump.points.shape[0] != projection.coords.shape[0]:
            raise AnalysisError("projection size does not match its dump")
        labels = dump.labels()
        for i, label in enumerate(sorted(set(labels))):
            pick = np.array([l == label for l in labels])
            ax.scatter(
                projection.coords[pick, 0], projection.coords[pick, 1],
                s=14, color=colormap(i % 10), label=label, alpha=0.8, linewidths=0,
            )
        ax.set_title(_panel_title(dump, projection), fontsize=10)
        ax.legend(fontsize=8, loc="best")
        ax.tick_params(labelsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)

    csv_path = out_path.with_suffix(".csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["panel", "x", "y", "label", "sentence_id", "detail"])
    for index, (dump, projection) in enumerate(panels):
        for meta, (x, y) in zip(dump.metadata, projection.coords):
            detail = meta.get("word_index", meta.get("start", ""))
            writer.writerow([
                index, f"{x:.10f}", f"{y:.10f}", meta.get("label", ""),
                meta.get("sentence_id", ""), detail,
            ])
    csv_path.write_text(buf.getvalue(), encoding="utf-8")

    silhouette_path = out_path.with_suffix(".silhouette.json")
    silhouette_path.write_text(
        json.dumps(
            [
                {"panel": _panel_title(dump, projection), "silhouette": _silhouette(dump, projection)}
                for dump, projection in panels
            ],
            indent=1, sort_keys=True,
        ) + "\n",
        encoding="utf-8",
    )
    return {"image": out_path, "csv": csv_path, "silhouette": silhouette_path}
