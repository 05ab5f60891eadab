"""Self-describing checkpoint archives.

A checkpoint is a zip file holding ``meta.json`` (format version, encoder
config, tag set, extra run metadata) and one ``.npy`` entry per parameter
tensor. Entries are written with fixed timestamps and no compression, so
saving the same model twice yields byte-identical files.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .encoder import ClassifierHead, Encoder, EncoderConfig

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


def _write_entry(archive: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.external_attr = 0o644 << 16
    archive.writestr(info, payload)


def _tensor_bytes(tensor: torch.Tensor) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, tensor.detach().cpu().numpy(), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(
    path: str | Path,
    encoder: Encoder,
    head: ClassifierHead,
    extra: dict | None = None,
) -> None:
    """Write encoder plus head parameters and their describing metadata."""
    path = Path(path)
    backbone_state = {f"backbone/{k}": v for k, v in encoder.backbone.state_dict().items()}
    head_state = {f"head/{k}": v for k, v in head.state_dict().items()}
    meta = {
        "format_version": FORMAT_VERSION,
        "encoder_config": encoder.config.as_dict(),
        "tags": head.tags,
        "parameters": sorted(backbone_state) + sorted(head_state),
        "extra": extra or {},
    }
    if encoder.config.mode == "pretrained-transformer":
        meta["hf_config"] = encoder.backbone.config.to_dict()
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as archive:
        _write_entry(archive, "meta.json", json.dumps(meta, sort_keys=True, indent=1).encode())
        for name in meta["parameters"]:
            state = backbone_state if name.startswith("backbone/") else head_state
            _write_entry(archive, f"tensors/{name}.npy", _tensor_bytes(state[name]))


def read_metadata(path: str | Path) -> dict:
    with zipfile.ZipFile(path) as archive:
        meta = json.loads(archive.read("meta.json"))
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format {meta.get('format_version')!r}; "
            f"this build reads version {FORMAT_VERSION}"
        )
    return meta


def load_checkpoint(path: str | Path) -> tuple[Encoder, ClassifierHead, dict]:
    """Rebuild encoder and head from an archive; returns its metadata too.

    Tiny checkpoints restore from the archive alone. Pretrained ones
    rebuild the backbone from the stored HF config (no download) but still
    need the tokenizer source named in the encoder config.
    """
    path = Path(path)
    meta = read_metadata(path)
    config = EncoderConfig(**meta["encoder_config"])
    with zipfile.ZipFile(path) as archive:
        tensors = {}
        for name in meta["parameters"]:
            with archive.open(f"tensors/{name}.npy") as handle:
                tensors[name] = torch.from_numpy(
                    np.lib.format.read_array(io.BytesIO(handle.read()), allow_pickle=False)
                )
    if config.mode == "pretrained-transformer":
        encoder = _rebuild_pretrained(config, meta)
    else:
        encoder = Encoder(config)
    head = ClassifierHead(meta["tags"], encoder.hidden_size)
    _load_state(encoder.backbone, tensors, "backbone/")
    _load_state(head, tensors, "head/")
    return encoder, head, meta


def _load_state(module: torch.nn.Module, tensors: dict[str, torch.Tensor], prefix: str) -> None:
    state = {}
    for key, value in module.state_dict().items():
        stored = tensors.get(prefix + key)
        if stored is None:
            raise CheckpointError(f"checkpoint missing tensor {prefix + key!r}")
        state[key] = stored.to(value.dtype)
    module.load_state_dict(state)


def _rebuild_pretrained(config: EncoderConfig, meta: dict) -> Encoder:
    try:
        from transformers import CONFIG_MAPPING, AutoModel, AutoTokenizer
    except ImportError as exc:
        raise CheckpointError("loading this checkpoint needs the transformers package") from exc
    hf_config = meta.get("hf_config")
    if not hf_config:
        raise CheckpointError("pretrained checkpoint lacks the backbone config")
    model = AutoModel.from_config(CONFIG_MAPPING[hf_config["model_type"]].from_dict(hf_config))
    model.eval()
    encoder = Encoder.__new__(Encoder)
    encoder.config = config
    encoder.tokenizer = AutoTokenizer.from_pretrained(config.model_name)
    encoder.backbone = model
    return encoder
