"""Language-guidance objectives.

The core operation distills the row-wise softmax structure of a language
similarity matrix into the batch image similarity matrix via KL matching.
Variants: merged pseudolabel targets, full-matrix KL, row-wise L2,
CLIP-style contrastive regularization, and direct language-embedding
prediction.

Language-side inputs are constants of the optimization (stop-gradient
contract): every public loss returns a grads dict whose language entry is
an exact zero array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import simcore, tape
from .errors import (DimMismatch, EmptyList, EmptyTargetList,
                     MissingClassInExternalMatrix, ShapeMismatch)
from .tape import Var

GUIDANCE_MODES = ("none", "elg", "plg", "external", "clip_style",
                  "predict_head", "rowwise_l2", "full_kl")
MERGE_MODES = ("average", "multi", "dense")
LEVELS = ("class", "sample")


@dataclass
class GuidanceSpec:
    mode: str = "none"
    omega: float = 5.0          # guidance weight in the composite objective
    gamma_lang: float = 0.5     # same-class mask offset / language shift
    k: int = 5                  # pseudolabels per key (plg)
    merge: str = "average"      # plg merge: average | multi | dense
    level: str = "class"        # class-level masks same-class entries
    temperature: float = 1.0

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODES:
            raise ValueError(f"unknown guidance mode {self.mode!r}")
        if self.merge not in MERGE_MODES:
            raise ValueError(f"unknown merge mode {self.merge!r}")
        if self.level not in LEVELS:
            raise ValueError(f"unknown level {self.level!r}")
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.mode == "plg" and self.k < 1:
            raise ValueError("plg needs k >= 1")


def same_class_mask(labels) -> np.ndarray:
    y = np.asarray(labels)
    return y[:, None] == y[None, :]


def masked_image_similarity(s_img: np.ndarray, labels, gamma_lang: float) -> np.ndarray:
    """Replace same-class entries (incl. diagonal) by 1 + gamma_lang.

    Language targets cannot resolve within-class structure, so those
    entries are excluded from distillation by pinning them to a constant
    at least as large as any true similarity.
    """
    s_img = np.asarray(s_img)
    if s_img.shape[0] != s_img.shape[1]:
        raise ShapeMismatch("batch similarity matrix must be square")
    return np.where(same_class_mask(labels), s_img.dtype.type(1.0 + gamma_lang), s_img)


def _kl_mean_node(p: Var, q: np.ndarray) -> Var:
    """Mean over rows of KL(p_i || q_i); q is a constant target."""
    value = np.asarray(simcore.rowwise_kl(p.value, q), dtype=p.value.dtype)
    n = p.value.shape[0]
    pf = np.maximum(p.value, simcore.PROB_FLOOR)
    qf = np.maximum(q, simcore.PROB_FLOOR)
    gate = (p.value > simcore.PROB_FLOOR).astype(p.value.dtype)
    local = gate * (np.log(pf) - np.log(qf) + 1.0) / n

    def vjp(g):
        return g * local

    return tape.op(value, [(p, vjp)])


def _image_side(s: np.ndarray | Var, gamma_lang: float, mask: np.ndarray | None) -> Var:
    node = s if isinstance(s, Var) else tape.leaf(np.asarray(s))
    if mask is not None:
        # idempotent on an already-masked matrix; kills masked-entry grads
        node = tape.masked_fill(node, mask, node.value.dtype.type(1.0 + gamma_lang))
    return node


def match_node(s: Var, target: np.ndarray, gamma_lang: float, temperature: float) -> Var:
    """Row-wise KL between softmaxed image and language similarities."""
    if target.shape != s.value.shape:
        raise ShapeMismatch(f"{target.shape} vs {s.value.shape}")
    q = simcore.row_softmax(target, gamma_lang, temperature)
    p = tape.softmax_rows(s, temperature)
    return _kl_mean_node(p, q)


def elg_match_loss(s_img_masked: np.ndarray, s_lang_batch: np.ndarray,
                   gamma_lang: float, temperature: float = 1.0,
                   mask: np.ndarray | None = None):
    """Distillation loss against expert class-name similarities.

    Returns (value, grads) with grads["s_img"] zero at masked entries when
    `mask` (the same-class boolean matrix) is given, and grads["s_lang"]
    exactly zero always.
    """
    s_img_masked = np.asarray(s_img_masked)
    s_lang_batch = np.asarray(s_lang_batch)
    node = _image_side(s_img_masked, gamma_lang, mask)
    out = match_node(node, s_lang_batch, gamma_lang, temperature)
    leaf = node if mask is None else node.parents[0][0]
    (g,) = tape.grad_of(out, [leaf])
    return float(out.value), {"s_img": g, "s_lang": np.zeros_like(s_lang_batch)}


def compose_objective(l_dml: float, g_dml: np.ndarray, l_match: float,
                      g_match: np.ndarray, omega: float):
    """Total = L_dml + omega * L_match; gradients (same argument) sum linearly."""
    if omega < 0:
        raise ValueError("omega must be >= 0")
    return l_dml + omega * l_match, g_dml + omega * g_match


def pseudomatch_loss(s_img: np.ndarray, targets: list[np.ndarray],
                     spec: GuidanceSpec, mask: np.ndarray | None = None):
    """Distillation against a collection of pseudolabel similarity targets.

    merge="average": one KL against the elementwise mean of the targets.
    merge="multi"/"dense": mean of per-target KL losses (k matrices for
    multi, k*k pairing matrices for dense; the caller builds the list).
    """
    if not targets:
        raise EmptyTargetList("need at least one target matrix")
    s_img = np.asarray(s_img)
    targets = [np.asarray(t) for t in targets]
    for t in targets:
        if t.shape != s_img.shape:
            raise ShapeMismatch(f"{t.shape} vs {s_img.shape}")
    node = _image_side(s_img, spec.gamma_lang, mask)
    out = _pseudomatch_node(node, targets, spec)
    leaf = node if mask is None else node.parents[0][0]
    (g,) = tape.grad_of(out, [leaf])
    lang_zeros = [np.zeros_like(t) for t in targets]
    return float(out.value), {"s_img": g, "s_lang": lang_zeros}


def _pseudomatch_node(node: Var, targets: list[np.ndarray], spec: GuidanceSpec) -> Var:
    if spec.merge == "average":
        target = np.mean(targets, axis=0)
        return match_node(node, target, spec.gamma_lang, spec.temperature)
    out = match_node(node, targets[0], spec.gamma_lang, spec.temperature)
    for t in targets[1:]:
        out = tape.add(out, match_node(node, t, spec.gamma_lang, spec.temperature))
    return tape.scale(out, 1.0 / len(targets))


def full_kl_node(s: Var, target: np.ndarray, gamma_lang: float,
                 temperature: float) -> Var:
    """KL over the softmax of the flattened matrices instead of per row."""
    if target.shape != s.value.shape:
        raise ShapeMismatch(f"{target.shape} vs {s.value.shape}")
    flat = tape.reshape(s, (1, s.value.size))
    q = simcore.row_softmax(target.reshape(1, -1), gamma_lang, temperature)
    return _kl_mean_node(tape.softmax_rows(flat, temperature), q)


def full_matrix_kl(s_img_masked: np.ndarray, s_lang_batch: np.ndarray,
                   gamma_lang: float, temperature: float = 1.0,
                   mask: np.ndarray | None = None):
    """Flattened-softmax KL matching; see full_kl_node."""
    s_img_masked = np.asarray(s_img_masked)
    s_lang_batch = np.asarray(s_lang_batch)
    node = _image_side(s_img_masked, gamma_lang, mask)
    out = full_kl_node(node, s_lang_batch, gamma_lang, temperature)
    leaf = node if mask is None else node.parents[0][0]
    (g,) = tape.grad_of(out, [leaf])
    return float(out.value), {"s_img": g, "s_lang": np.zeros_like(s_lang_batch)}


def rowwise_l2_loss(s_img_masked: np.ndarray, s_lang_batch: np.ndarray,
                    gamma_lang: float, mask: np.ndarray | None = None):
    """Row-matching by squared L2 distance to the shifted language rows.

    The language side is shifted by gamma_lang so that masked same-class
    entries (1 + gamma_lang on both sides) contribute nothing.
    """
    s_img_masked = np.asarray(s_img_masked)
    s_lang_batch = np.asarray(s_lang_batch)
    if s_lang_batch.shape != s_img_masked.shape:
        raise ShapeMismatch(f"{s_lang_batch.shape} vs {s_img_masked.shape}")
    node = _image_side(s_img_masked, gamma_lang, mask)
    out = rowwise_l2_node(node, s_lang_batch + gamma_lang)
    leaf = node if mask is None else node.parents[0][0]
    (g,) = tape.grad_of(out, [leaf])
    return float(out.value), {"s_img": g, "s_lang": np.zeros_like(s_lang_batch)}


def rowwise_l2_node(s: Var, target: np.ndarray) -> Var:
    diff = tape.add_const(s, -target)
    return tape.scale(tape.total_sum(tape.mul(diff, diff)), 1.0 / s.value.shape[0])


def clip_style_node(img: Var, lang_emb: np.ndarray, temperature: float) -> Var:
    logits = tape.scale(tape.matmul_const(img, lang_emb.T), 1.0 / temperature)
    row_ll = tape.diag(tape.logsoftmax_rows(logits))
    col_ll = tape.diag(tape.logsoftmax_rows(tape.transpose(logits)))
    return tape.scale(tape.add(tape.total_mean(row_ll), tape.total_mean(col_ll)), -0.5)


def clip_style_loss(img_emb: np.ndarray, lang_emb: np.ndarray,
                    temperature: float = 0.07):
    """Symmetric cross-entropy between image and language embeddings.

    Both inputs must be unit-normalized; the pairing target is the
    diagonal (sample i matches language row i).
    """
    img_emb = np.asarray(img_emb)
    lang_emb = np.asarray(lang_emb)
    if img_emb.shape[0] != lang_emb.shape[0]:
        raise ShapeMismatch(f"{img_emb.shape[0]} vs {lang_emb.shape[0]} rows")
    if img_emb.shape[1] != lang_emb.shape[1]:
        raise DimMismatch(f"dim {img_emb.shape[1]} vs {lang_emb.shape[1]}")
    v = tape.leaf(img_emb)
    out = clip_style_node(v, lang_emb, temperature)
    (g,) = tape.grad_of(out, [v])
    return float(out.value), {"img_emb": g, "lang_emb": np.zeros_like(lang_emb)}


def predict_head_node(pred: Var, lang_targets: np.ndarray) -> Var:
    return tape.neg(tape.total_mean(tape.sum_rows(tape.mul(pred, Var(lang_targets)))))


def predict_head_loss(head_out: np.ndarray, lang_targets: np.ndarray):
    """Negated mean cosine similarity between predicted and target language
    embeddings (both unit-norm), minimized toward -1."""
    head_out = np.asarray(head_out)
    lang_targets = np.asarray(lang_targets)
    if head_out.shape != lang_targets.shape:
        raise ShapeMismatch(f"{head_out.shape} vs {lang_targets.shape}")
    v = tape.leaf(head_out)
    out = predict_head_node(v, lang_targets)
    (g,) = tape.grad_of(out, [v])
    return float(out.value), {"head_out": g, "lang_targets": np.zeros_like(lang_targets)}


def average_language_targets(matrices: list[np.ndarray]) -> np.ndarray:
    """Elementwise mean of per-model similarity matrices.

    Averaging happens in similarity space because language embedding
    dimensions differ across models.
    """
    if not matrices:
        raise EmptyList("need at least one matrix")
    matrices = [np.asarray(m) for m in matrices]
    first = matrices[0].shape
    for m in matrices[1:]:
        if m.shape != first:
            raise ShapeMismatch(f"{m.shape} vs {first}")
    return np.mean(matrices, axis=0)


def external_target_guidance(s_img_masked: np.ndarray, s_external: np.ndarray,
                             labels, gamma_lang: float, temperature: float = 1.0,
                             mask: np.ndarray | None = None):
    """ELG-style matching against a precomputed class-by-class target matrix.

    s_external is indexed by class id ([-1, 1] scale; file loaders rescale
    [0, 1] hierarchy similarities on ingest). The batch target gathers
    entries at (y_i, y_j).
    """
    s_external = np.asarray(s_external)
    y = np.asarray(labels)
    if y.size and (y.min() < 0 or y.max() >= s_external.shape[0]):
        raise MissingClassInExternalMatrix(
            f"label {int(y.max())} outside external matrix of size {s_external.shape[0]}")
    target = s_external[np.ix_(y, y)]
    return elg_match_loss(s_img_masked, target, gamma_lang, temperature, mask)
