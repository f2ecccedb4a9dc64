"""Retrieval metrics and semantic-alignment analyses.

Recall@k, NMI over a k-means clustering of the embeddings, mAP@1000
normalized by the recallable relevant count, per-class retrieval
profiles ordered by language similarity, and the dataset-level
divergence between embedding-space and language-space similarity
structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import guidance, simcore
from .errors import (DegenerateInput, KExceedsGallery, MissingClassName,
                     ShapeMismatch)


# ------------------------------------------------------------------ ranking


def _neighbor_order(sims_row: np.ndarray) -> np.ndarray:
    # descending similarity, ties broken by ascending sample index
    return np.argsort(-sims_row, kind="stable")


def recall_at_k(emb: np.ndarray, labels, ks: list[int]) -> dict[int, float]:
    """Fraction of queries with a same-class sample among the k nearest
    gallery neighbors (cosine, self excluded)."""
    emb = np.asarray(emb)
    y = np.asarray(labels)
    n = emb.shape[0]
    if n < 2:
        raise ShapeMismatch("need at least two samples")
    if max(ks) > n - 1:
        raise KExceedsGallery(f"k={max(ks)} exceeds gallery size {n - 1}")
    sims = emb @ emb.T
    np.fill_diagonal(sims, -np.inf)
    hits = {k: 0 for k in ks}
    for i in range(n):
        order = _neighbor_order(sims[i])
        match = y[order] == y[i]
        for k in ks:
            if match[:k].any():
                hits[k] += 1
    return {k: hits[k] / n for k in ks}


def map_at_1000(emb: np.ndarray, labels, cutoff: int = 1000) -> float:
    """Mean average precision over the top min(cutoff, gallery) retrieved,
    normalized by min(cutoff, #relevant); zero-relevant queries count 0."""
    emb = np.asarray(emb)
    y = np.asarray(labels)
    n = emb.shape[0]
    if n < 2:
        raise ShapeMismatch("need at least two samples")
    sims = emb @ emb.T
    np.fill_diagonal(sims, -np.inf)
    depth = min(cutoff, n - 1)
    ap_sum = 0.0
    for i in range(n):
        order = _neighbor_order(sims[i])[:depth]
        rel = (y[order] == y[i]).astype(np.float64)
        n_rel = int(np.sum(y == y[i]) - 1)
        denom = min(cutoff, n_rel)
        if denom == 0:
            continue
        prec = np.cumsum(rel) / np.arange(1, depth + 1)
        ap_sum += float(np.sum(prec * rel) / denom)
    return ap_sum / n


# ------------------------------------------------------------------ k-means


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=x.dtype)
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = x[rng.integers(n, size=k - j)]
            break
        probs = d2 / total
        centers[j] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 200):
    for _ in range(max_iter):
        d2 = (np.sum(x * x, axis=1)[:, None] - 2 * x @ centers.T
              + np.sum(centers * centers, axis=1)[None, :])
        assign = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for j in range(centers.shape[0]):
            members = x[assign == j]
            if members.shape[0]:
                new_centers[j] = members.mean(axis=0)
            else:
                # reseed an empty cluster at the worst-served point
                new_centers[j] = x[np.argmax(np.min(d2, axis=1))]
        if np.allclose(new_centers, centers, atol=1e-12):
            centers = new_centers
            break
        centers = new_centers
    d2 = (np.sum(x * x, axis=1)[:, None] - 2 * x @ centers.T
          + np.sum(centers * centers, axis=1)[None, :])
    assign = np.argmin(d2, axis=1)
    inertia = float(np.sum(np.min(d2, axis=1)))
    return assign, inertia


def kmeans(x: np.ndarray, k: int, seed: int, restarts: int = 10) -> np.ndarray:
    """Best-of-n-restarts Lloyd's algorithm with k-means++ seeding."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    best_assign, best_inertia = None, np.inf
    for _ in range(restarts):
        assign, inertia = _lloyd(x, _kmeans_pp_init(x, k, rng))
        if inertia < best_inertia:
            best_assign, best_inertia = assign, inertia
    return best_assign


def normalized_mutual_information(a, b) -> float:
    """NMI with arithmetic-mean normalization; 0/0 (two trivial
    partitions) is defined as 1."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    n = a.shape[0]
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    contingency = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(contingency, (ai, bi), 1.0)
    pij = contingency / n
    pi = pij.sum(axis=1)
    pj = pij.sum(axis=0)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / np.outer(pi, pj)[nz])))
    h = lambda p: float(-np.sum(p[p > 0] * np.log(p[p > 0])))
    denom = 0.5 * (h(pi) + h(pj))
    if denom == 0.0:
        return 1.0
    return mi / denom


def nmi(emb: np.ndarray, labels, seed: int = 0) -> float:
    """NMI between a k-means clustering (k = #classes, 10 restarts) of the
    embeddings and the ground-truth labels."""
    emb = np.asarray(emb)
    y = np.asarray(labels)
    k = len(np.unique(y))
    if emb.shape[0] < k:
        raise ShapeMismatch(f"{emb.shape[0]} samples < {k} classes")
    if np.allclose(emb, emb[0], atol=1e-12):
        raise DegenerateInput("all embeddings identical")
    assign = kmeans(emb, k, seed)
    return normalized_mutual_information(assign, y)


# ------------------------------------------------------ semantic alignment


@dataclass
class RetrievalProfile:
    """Per query class: retrieved classes with counts, ordered by
    descending language similarity to the query class."""
    top_n: int
    entries: dict[int, list[tuple[int, int, float]]] = field(default_factory=dict)

    def top(self, limit: int) -> "RetrievalProfile":
        return RetrievalProfile(self.top_n, {c: rows[:limit] for c, rows in self.entries.items()})

    def to_csv(self) -> str:
        lines = ["query_class,retrieved_class,count,language_similarity"]
        for c in sorted(self.entries):
            for rc, count, sim in self.entries[c]:
                lines.append(f"{c},{rc},{count},{sim:.8g}")
        return "\n".join(lines) + "\n"


def _class_language_rows(class_names: list[str], lang_table) -> np.ndarray:
    name_to_row = {n: i for i, n in enumerate(lang_table.names)}
    rows = []
    for name in class_names:
        if name not in name_to_row:
            raise MissingClassName(f"no language embedding for class {name!r}")
        rows.append(lang_table.embeddings[name_to_row[name]])
    return np.asarray(rows)


def semantic_retrieval_profile(emb: np.ndarray, labels, class_names: list[str],
                               lang_table, top_n: int = 20,
                               top_classes: int | None = 5) -> RetrievalProfile:
    """Aggregate the classes of each query's top-n neighbors, per query
    class, and rank the retrieved classes by language similarity."""
    emb = np.asarray(emb)
    y = np.asarray(labels)
    n = emb.shape[0]
    lang_rows = _class_language_rows(class_names, lang_table)
    lang_sims = lang_rows @ lang_rows.T
    sims = emb @ emb.T
    np.fill_diagonal(sims, -np.inf)
    eff_n = min(top_n, n - 1)
    profile = RetrievalProfile(top_n=eff_n)
    for c in np.unique(y):
        counts: dict[int, int] = {}
        for i in np.flatnonzero(y == c):
            order = _neighbor_order(sims[i])[:eff_n]
            for rc in y[order]:
                counts[int(rc)] = counts.get(int(rc), 0) + 1
        ranked = sorted(counts.items(), key=lambda kv: (-lang_sims[c, kv[0]], kv[0]))
        rows = [(rc, cnt, float(lang_sims[c, rc])) for rc, cnt in ranked]
        if top_classes is not None:
            rows = rows[:top_classes]
        profile.entries[int(c)] = rows
    return profile


def alignment_divergence(emb: np.ndarray, labels, class_names: list[str],
                         lang_table, gamma_lang: float = 0.5,
                         temperature: float = 1.0) -> float:
    """Row-wise KL between masked embedding similarities and the class-name
    language similarities, over the whole evaluation set."""
    emb = np.asarray(emb)
    y = np.asarray(labels)
    lang_rows = _class_language_rows(class_names, lang_table)
    s_img = simcore.cosine_similarity_matrix(emb, emb)
    s_masked = guidance.masked_image_similarity(s_img, y, gamma_lang)
    per_sample = lang_rows[y]
    s_lang = simcore.cosine_similarity_matrix(per_sample, per_sample)
    value, _ = guidance.elg_match_loss(s_masked, s_lang, gamma_lang, temperature)
    return value


@dataclass
class EvalReport:
    recall_at: dict[int, float]
    nmi: float
    map_at_1000: float
    neighbors: list[list[int]] | None = None  # optional per-query top lists

    def __post_init__(self):
        for v in [*self.recall_at.values(), self.nmi, self.map_at_1000]:
            if not 0.0 <= v <= 1.0 + 1e-12:
                raise ValueError(f"metric out of range: {v}")

    def to_text(self) -> str:
        doc = {"recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
               "nmi": self.nmi, "map_at_1000": self.map_at_1000}
        if self.neighbors is not None:
            doc["neighbors"] = self.neighbors
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def nearest_neighbor_lists(emb: np.ndarray, depth: int) -> list[list[int]]:
    emb = np.asarray(emb)
    sims = emb @ emb.T
    np.fill_diagonal(sims, -np.inf)
    depth = min(depth, emb.shape[0] - 1)
    return [[int(j) for j in _neighbor_order(sims[i])[:depth]]
            for i in range(emb.shape[0])]


def evaluate(emb: np.ndarray, labels, ks=(1, 2, 4, 8), seed: int = 0,
             include_neighbors: bool = False) -> EvalReport:
    emb = np.asarray(emb)
    n = emb.shape[0]
    usable = [k for k in ks if k <= n - 1] or [1]
    neighbors = nearest_neighbor_lists(emb, max(usable)) if include_neighbors else None
    return EvalReport(recall_at=recall_at_k(emb, labels, usable),
                      nmi=nmi(emb, labels, seed),
                      map_at_1000=map_at_1000(emb, labels),
                      neighbors=neighbors)
