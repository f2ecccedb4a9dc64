"""Frozen-backbone feature and classifier-posterior export.

Datasets are directories of class subdirectories (labels come from the
sorted subdirectory names). Model ids look like

    torchvision/resnet18                 pretrained default weights
    torchvision/resnet18?untrained&seed=7   random weights, seeded (tests)

Inference runs in eval mode with gradients off, so re-exporting the same
inputs is checksum-identical.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import models as tvm
from torchvision import transforms

from .formats import write_labels, write_matrix, write_names

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp", ".webp"}

_PREPROCESS = transforms.Compose([
    transforms.Resize(224),
    transforms.CenterCrop(224),
    transforms.ToTensor(),
    transforms.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
])


def _parse_model_id(model_id: str):
    if not model_id.startswith("torchvision/"):
        raise ValueError(f"unsupported vision model id {model_id!r} "
                         "(expected torchvision/<arch>[?untrained[&seed=N]])")
    rest = model_id.split("/", 1)[1]
    name, _, query = rest.partition("?")
    opts = dict(part.partition("=")[::2] for part in query.split("&") if part)
    return name, "untrained" in opts, int(opts.get("seed", 0) or 0)


def load_vision_model(model_id: str) -> tuple[torch.nn.Module, list[str] | None]:
    """Returns (model, pretrain class names or None)."""
    arch, untrained, seed = _parse_model_id(model_id)
    builder = getattr(tvm, arch, None)
    if builder is None:
        raise ValueError(f"unknown torchvision architecture {arch!r}")
    categories = None
    if untrained:
        torch.manual_seed(seed)
        model = builder(weights=None)
    else:
        weights = tvm.get_model_weights(arch).DEFAULT
        model = builder(weights=weights)
        categories = list(weights.meta.get("categories", [])) or None
    model.eval()
    return model, categories


def list_dataset(dataset_dir) -> tuple[list[Path], list[int], list[str]]:
    """Sorted class subdirectories -> (image paths, labels, class names)."""
    root = Path(dataset_dir)
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise ValueError(f"no class subdirectories under {root}")
    paths, labels = [], []
    for label, d in enumerate(class_dirs):
        for p in sorted(d.iterdir()):
            if p.suffix.lower() in IMAGE_EXTENSIONS:
                paths.append(p)
                labels.append(label)
    return paths, labels, [d.name for d in class_dirs]


def _load_batch(paths: list[Path]):
    tensors, kept, skipped = [], [], []
    for i, p in enumerate(paths):
        try:
            with Image.open(p) as img:
                tensors.append(_PREPROCESS(img.convert("RGB")))
            kept.append(i)
        except Exception:
            skipped.append(i)
            log.warning("skipping unreadable image %d: %s", i, p)
    if not tensors:
        raise ValueError("no readable images")
    return torch.stack(tensors), kept, skipped


def _forward_in_chunks(model, batch, chunk=32):
    outs = []
    with torch.no_grad():
        for i in range(0, batch.shape[0], chunk):
            outs.append(model(batch[i : i + chunk]))
    return torch.cat(outs)


def export_features(dataset_dir, vision_model_id: str, out_prefix) -> dict:
    """Write <prefix>.lgdm (one feature row per readable image, input
    order), <prefix>_labels.txt and <prefix>_classes.txt."""
    model, _ = load_vision_model(vision_model_id)
    if not hasattr(model, "fc"):
        raise ValueError("feature export expects an architecture with a .fc head")
    model.fc = torch.nn.Identity()
    paths, labels, class_names = list_dataset(dataset_dir)
    batch, kept, skipped = _load_batch(paths)
    feats = _forward_in_chunks(model, batch).numpy().astype(np.float32)
    out_prefix = Path(out_prefix)
    write_matrix(out_prefix.with_suffix(".lgdm"), feats)
    write_labels(Path(str(out_prefix) + "_labels.txt"), [labels[i] for i in kept])
    write_names(Path(str(out_prefix) + "_classes.txt"), class_names)
    return {"rows": feats.shape[0], "dim": feats.shape[1], "skipped": skipped}


def export_posteriors(dataset_dir, vision_model_id: str, out_prefix) -> dict:
    """Write <prefix>.lgdm softmax rows plus <prefix>_names.txt with the
    pretrain class names (weights metadata, or imagenet-### fallback)."""
    model, categories = load_vision_model(vision_model_id)
    paths, _, _ = list_dataset(dataset_dir)
    batch, kept, skipped = _load_batch(paths)
    logits = _forward_in_chunks(model, batch)
    post = torch.softmax(logits, dim=1).numpy().astype(np.float32)
    names = categories or [f"imagenet-{i:03d}" for i in range(post.shape[1])]
    out_prefix = Path(out_prefix)
    write_matrix(out_prefix.with_suffix(".lgdm"), post)
    write_names(Path(str(out_prefix) + "_names.txt"), names)
    return {"rows": post.shape[0], "classes": post.shape[1], "skipped": skipped}
