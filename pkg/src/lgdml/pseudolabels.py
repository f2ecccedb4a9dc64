"""Pseudo-classname extraction from frozen-classifier posteriors.

A pretrained classifier run over the dataset yields one posterior row per
sample. Averaging rows per class (or keeping them per sample) and taking
the k largest entries gives each key an ordered list of pretrain-class
names whose language embeddings serve as distillation targets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import simcore
from .errors import EmptyClass, KTooLarge, MissingPseudoName, ShapeMismatch

ROW_SUM_TOL = 1e-4


@dataclass
class PosteriorMatrix:
    data: np.ndarray                 # [n_samples, n_pretrain_classes]
    class_names: list[str]           # pretrain-class names, one per column

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or self.data.shape[1] != len(self.class_names):
            raise ShapeMismatch(
                f"posteriors {self.data.shape} vs {len(self.class_names)} names")
        if np.any(self.data < 0):
            raise ValueError("posterior entries must be >= 0")
        sums = self.data.sum(axis=1)
        off = np.abs(sums - 1.0) > ROW_SUM_TOL
        if np.any(off):
            warnings.warn(
                f"{int(off.sum())} posterior rows deviate from sum 1 by more "
                f"than {ROW_SUM_TOL}; renormalizing", stacklevel=2)
            self.data = self.data / sums[:, None]


@dataclass
class PseudolabelAssignment:
    level: str                       # "class" or "sample"
    keys: list[int]
    labels: list[list[str]]          # per key, k names in descending mass order
    masses: list[np.ndarray]         # per key, the k averaged posterior values

    def names_for(self, key: int) -> list[str]:
        return self.labels[self.keys.index(key)]


def _top_k(row: np.ndarray, names: list[str], k: int):
    # stable argsort on -mass keeps ascending column index among ties
    order = np.argsort(-row, kind="stable")[:k]
    return [names[i] for i in order], row[order]


def class_pseudolabels(post: PosteriorMatrix, labels, k: int) -> PseudolabelAssignment:
    """Top-k pretrain classes of the per-class averaged posterior rows.

    Ties in averaged mass break toward the lower pretrain-class index so
    assignments are deterministic across runs and platforms.
    """
    if k > post.data.shape[1]:
        raise KTooLarge(f"k={k} > {post.data.shape[1]} pretrain classes")
    y = np.asarray(labels)
    if y.shape[0] != post.data.shape[0]:
        raise ShapeMismatch(f"{y.shape[0]} labels vs {post.data.shape[0]} rows")
    keys = sorted(int(c) for c in np.unique(y))
    out_labels, out_masses = [], []
    for c in keys:
        rows = post.data[y == c]
        if rows.shape[0] == 0:
            raise EmptyClass(f"class {c} has no samples")
        names, masses = _top_k(rows.mean(axis=0), post.class_names, k)
        out_labels.append(names)
        out_masses.append(masses)
    return PseudolabelAssignment("class", keys, out_labels, out_masses)


def sample_pseudolabels(post: PosteriorMatrix, k: int) -> PseudolabelAssignment:
    """Per-row top-k extraction, no averaging; keys are sample indices."""
    if k > post.data.shape[1]:
        raise KTooLarge(f"k={k} > {post.data.shape[1]} pretrain classes")
    out_labels, out_masses = [], []
    for row in post.data:
        names, masses = _top_k(row, post.class_names, k)
        out_labels.append(names)
        out_masses.append(masses)
    return PseudolabelAssignment("sample", list(range(post.data.shape[0])), out_labels, out_masses)


def _rank_embeddings(assign: PseudolabelAssignment, name_to_row: dict[str, int],
                     emb: np.ndarray) -> np.ndarray:
    """[n_keys, k, lang_dim] unit rows for each key's ranked pseudolabels."""
    k = len(assign.labels[0])
    out = np.empty((len(assign.keys), k, emb.shape[1]), dtype=emb.dtype)
    for i, names in enumerate(assign.labels):
        for j, name in enumerate(names):
            row = name_to_row.get(name)
            if row is None:
                raise MissingPseudoName(name)
            out[i, j] = emb[row]
    return out


def build_pseudolang_matrices(assign: PseudolabelAssignment, pseudo_table,
                              batch_keys) -> list[np.ndarray]:
    """Per-rank language similarity targets for a batch.

    Rank j's matrix holds cosine similarities between the language
    embeddings of the rank-j pseudolabels of every pair of batch elements
    (rank 0 = highest posterior mass).
    """
    key_pos = {key: i for i, key in enumerate(assign.keys)}
    idx = np.array([key_pos[k] for k in batch_keys], dtype=np.int64)
    name_to_row = {n: i for i, n in enumerate(pseudo_table.names)}
    ranked = _rank_embeddings(assign, name_to_row, pseudo_table.embeddings)[idx]
    k = ranked.shape[1]
    return [simcore.cosine_similarity_matrix(ranked[:, j], ranked[:, j]) for j in range(k)]


def build_dense_pseudolang_matrices(assign: PseudolabelAssignment, pseudo_table,
                                    batch_keys) -> list[np.ndarray]:
    """All k*k rank-pairing targets (pairing (u, v): rank-u embeddings of the
    rows against rank-v embeddings of the columns), ordering disregarded."""
    key_pos = {key: i for i, key in enumerate(assign.keys)}
    idx = np.array([key_pos[k] for k in batch_keys], dtype=np.int64)
    name_to_row = {n: i for i, n in enumerate(pseudo_table.names)}
    ranked = _rank_embeddings(assign, name_to_row, pseudo_table.embeddings)[idx]
    k = ranked.shape[1]
    return [simcore.cosine_similarity_matrix(ranked[:, u], ranked[:, v])
            for u in range(k) for v in range(k)]


def format_assignment_report(assign: PseudolabelAssignment) -> str:
    """One line per (key, rank): key, rank, name, mass."""
    lines = [f"# level={assign.level} k={len(assign.labels[0])}"]
    for key, names, masses in zip(assign.keys, assign.labels, assign.masses):
        for rank, (name, mass) in enumerate(zip(names, masses)):
            lines.append(f"{key},{rank},{name},{mass:.8g}")
    return "\n".join(lines) + "\n"
