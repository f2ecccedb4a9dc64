"""Language-embedding export from pretrained text models.

Class names (or per-sample caption sentences) are cleaned of dataset
artifacts, wrapped in a primer template, pushed through one or more text
models, mean-pooled and unit-normalized: one table file per model. Model
ids use the form "hf/<name-or-local-path>" and load through the
transformers auto classes, so anything cached or saved locally works
offline.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .formats import clean_name, write_matrix, write_names

DEFAULT_PRIMER = "A photo of a {}"


def load_text_model(model_id: str):
    if not model_id.startswith("hf/"):
        raise ValueError(f"unsupported text model id {model_id!r} "
                         "(expected hf/<name-or-path>)")
    from transformers import AutoModel, AutoTokenizer

    ref = model_id.split("/", 1)[1]
    tokenizer = AutoTokenizer.from_pretrained(ref)
    model = AutoModel.from_pretrained(ref)
    model.eval()
    return tokenizer, model


def embed_sentences(sentences: list[str], tokenizer, model,
                    batch_size: int = 16) -> np.ndarray:
    """Mean-pooled, unit-normalized last hidden states."""
    rows = []
    with torch.no_grad():
        for i in range(0, len(sentences), batch_size):
            chunk = sentences[i : i + batch_size]
            enc = tokenizer(chunk, padding=True, truncation=True,
                            max_length=64, return_tensors="pt")
            out = model(**enc).last_hidden_state
            mask = enc["attention_mask"].unsqueeze(-1).to(out.dtype)
            pooled = (out * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
            rows.append(pooled)
    emb = torch.cat(rows).numpy().astype(np.float32)
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    return emb / np.maximum(norms, 1e-12)


def export_language_embeddings(names: list[str], text_model_ids: list[str],
                               primer: str, out_dir,
                               tag: str = "lang") -> dict[str, tuple[Path, Path]]:
    """One (matrix, names) file pair per model under out_dir.

    The primer must contain exactly one `{}` placeholder; use "{}" for
    bare names or pre-written caption sentences.
    """
    if not names:
        raise ValueError("names must be non-empty")
    if primer.count("{}") != 1:
        raise ValueError(f"primer must contain one {{}} placeholder, got {primer!r}")
    cleaned = []
    for name in names:
        c = clean_name(name)
        if not c:
            raise ValueError(f"name {name!r} is empty after cleanup")
        cleaned.append(c)
    if len(set(cleaned)) != len(cleaned):
        seen = set()
        dup = next(n for n in cleaned if n in seen or seen.add(n))
        raise ValueError(f"duplicate name after cleanup: {dup!r}")
    sentences = [primer.format(n) for n in cleaned]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for model_id in text_model_ids:
        tokenizer, model = load_text_model(model_id)
        emb = embed_sentences(sentences, tokenizer, model)
        slug = model_id.replace("/", "_").replace("\\", "_")
        matrix_path = out_dir / f"{tag}_{slug}.lgdm"
        names_path = out_dir / f"{tag}_{slug}_names.txt"
        write_matrix(matrix_path, emb)
        write_names(names_path, cleaned)
        written[model_id] = (matrix_path, names_path)
    return written
