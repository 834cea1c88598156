"""Extract per-layer attention probabilities and hidden states from a ViT.

Attention is captured post-softmax (eval mode, so dropout is inert) with heads
kept separate; hidden states are the per-layer block outputs, aligned so that
feature row l corresponds to the tokens entering layer l+1. Everything lands
in an ATNB file the reduction engine can validate and consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .writer import ExportError, write_atnb


class ModelUnavailable(ExportError):
    pass


class HookFailure(ExportError):
    pass


@dataclass
class ExportSpec:
    model_id: str
    images: list = field(default_factory=list)
    out: str = "export.atnb"
    include_features: bool = True
    device: str = "cpu"


def load_model(model_id: str, device: str = "cpu"):
    """Load a pretrained ViT and its image processor (eager attention so the
    per-head probabilities are actually materialized)."""
    from transformers import AutoImageProcessor, AutoModel

    try:
        model = AutoModel.from_pretrained(model_id, attn_implementation="eager")
        processor = AutoImageProcessor.from_pretrained(model_id)
    except Exception as exc:  # hub errors, missing cache, unknown id
        raise ModelUnavailable(f"cannot load {model_id!r}: {exc}") from exc
    model = model.to(device)
    model.eval()
    return model, processor


def preprocess(processor, image_path: str, device: str = "cpu") -> torch.Tensor:
    from PIL import Image

    with Image.open(image_path) as img:
        batch = processor(images=img.convert("RGB"), return_tensors="pt")
    return batch["pixel_values"].to(device)


def _expected_tokens(config) -> int | None:
    image_size = getattr(config, "image_size", None)
    patch_size = getattr(config, "patch_size", None)
    if image_size is None or patch_size is None:
        return None
    return 1 + (image_size // patch_size) ** 2


def extract(model, pixel_values: torch.Tensor):
    """Run one forward pass and return (attn (L,H,N,N), features (L,N,d))."""
    if pixel_values.ndim != 4 or pixel_values.shape[0] != 1:
        raise ExportError(f"expected a single-image batch, got {tuple(pixel_values.shape)}")
    with torch.no_grad():
        outputs = model(
            pixel_values=pixel_values,
            output_attentions=True,
            output_hidden_states=True,
        )
    attentions = getattr(outputs, "attentions", None)
    hidden = getattr(outputs, "hidden_states", None)
    if not attentions or attentions[0] is None:
        raise HookFailure(
            "model did not expose attention probabilities; it may be running a "
            "fused attention kernel without eager fallback"
        )
    if not hidden:
        raise HookFailure("model did not expose hidden states")

    attn = torch.stack([a[0] for a in attentions]).cpu().float().numpy()
    # hidden_states[0] is the embedding output; row l is the output of layer l+1
    feats = torch.stack([h[0] for h in hidden[1:]]).cpu().float().numpy()

    n = attn.shape[2]
    expected = _expected_tokens(model.config)
    if expected is not None and n != expected:
        raise HookFailure(
            f"token count {n} does not match CLS + patch grid ({expected}); "
            "models with extra prefix tokens (e.g. distilled variants) are not supported"
        )
    drift = float(np.abs(attn.sum(axis=3, dtype=np.float64) - 1.0).max())
    if drift > 1e-3:
        raise HookFailure(f"captured attention rows drift {drift:.3g} from 1")
    return attn, feats


def export_single(model, pixel_values, out_path, include_features=True, meta=None):
    attn, feats = extract(model, pixel_values)
    write_atnb(
        out_path,
        attn,
        features=feats if include_features else None,
        meta=meta or {},
        has_cls=True,
    )
    return attn.shape


def export(spec: ExportSpec, processor=None, model=None):
    """Export every listed image; returns the written file paths."""
    if not spec.images:
        raise ExportError("no images to export")
    if model is None or processor is None:
        model, processor = load_model(spec.model_id, spec.device)
    written = []
    for i, image in enumerate(spec.images):
        out = spec.out if len(spec.images) == 1 else _indexed(spec.out, i)
        pixel_values = preprocess(processor, image, spec.device)
        meta = {"model": spec.model_id, "image": str(image), "exporter": "atnb-exporter"}
        export_single(model, pixel_values, out, spec.include_features, meta)
        written.append(out)
    return written


def _indexed(path: str, i: int) -> str:
    if path.endswith(".atnb"):
        return f"{path[:-5]}_{i:03d}.atnb"
    return f"{path}_{i:03d}"
