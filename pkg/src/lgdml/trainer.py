"""End-to-end optimization of an embedding head over frozen features.

The head (linear, optionally one hidden tanh layer) projects precomputed
features onto the unit hypersphere. Each step builds the batch similarity
matrix, the configured base loss and guidance loss, composes them, and
backpropagates through the head only. Validation recall@1 drives a
step-down learning-rate schedule; the best-validation parameters are the
returned checkpoint.

Also home of the finite-difference gradient-check harness used by the
verification suite and the CLI.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import evalkit, guidance, losses, pseudolabels, simcore, tape
from .config import TrainConfig
from .datastore import DatasetBundle
from .errors import (GuidanceInputMissing, InsufficientClasses, NonFiniteLoss,
                     ShapeMismatch, UnknownLoss)
from .guidance import GuidanceSpec
from .rng import named_stream
from .tape import Var


# ------------------------------------------------------------------- head


class EmbedderHead:
    """Projection from feature space to the unit hypersphere.

    params maps names ("w0", "b0", ...) to arrays; `hidden` inserts one
    tanh layer of width 2x the input dimension.
    """

    def __init__(self, params: dict[str, np.ndarray], hidden: bool):
        self.params = params
        self.hidden = hidden

    @classmethod
    def init(cls, feat_dim: int, embed_dim: int, hidden: bool,
             rng: np.random.Generator, dtype=np.float32) -> "EmbedderHead":
        def glorot(fan_in, fan_out):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)

        params: dict[str, np.ndarray] = {}
        if hidden:
            width = 2 * feat_dim
            params["w0"] = glorot(feat_dim, width)
            params["b0"] = np.zeros(width, dtype=dtype)
            params["w1"] = glorot(width, embed_dim)
            params["b1"] = np.zeros(embed_dim, dtype=dtype)
        else:
            params["w0"] = glorot(feat_dim, embed_dim)
            params["b0"] = np.zeros(embed_dim, dtype=dtype)
        return cls(params, hidden)

    @property
    def embed_dim(self) -> int:
        key = "w1" if self.hidden else "w0"
        return self.params[key].shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x @ self.params["w0"] + self.params["b0"]
        if self.hidden:
            h = np.tanh(h) @ self.params["w1"] + self.params["b1"]
        return simcore.normalize_rows(h)

    def node(self, x: np.ndarray) -> tuple[Var, dict[str, Var]]:
        leaves = {name: tape.leaf(arr) for name, arr in self.params.items()}
        h = tape.add(tape.matmul(Var(x), leaves["w0"]), leaves["b0"])
        if self.hidden:
            t = tape.op(np.tanh(h.value), [(h, lambda g, hv=h: g * (1 - np.tanh(hv.value) ** 2))])
            h = tape.add(tape.matmul(t, leaves["w1"]), leaves["b1"])
        return tape.rownorm(h), leaves


# ---------------------------------------------------------------- optimizer


def adam_init(params: dict[str, np.ndarray]) -> dict:
    return {"t": 0,
            "m": {k: np.zeros_like(v) for k, v in params.items()},
            "v": {k: np.zeros_like(v) for k, v in params.items()}}


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: dict, lr: float, weight_decay: float = 0.0,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """In-place Adam with decoupled weight decay (applied to the parameters
    before the adaptive update, outside the moment estimates)."""
    b1, b2 = betas
    state["t"] += 1
    t = state["t"]
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        if weight_decay:
            p -= lr * weight_decay * p
        m = state["m"][name]
        v = state["v"][name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ----------------------------------------------------------------- batching


def sample_batch(labels: np.ndarray, batch_size: int, samples_per_class: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Class-balanced batch: batch_size/samples_per_class distinct classes,
    samples_per_class indices each (with replacement within a class only
    when it has too few samples)."""
    y = np.asarray(labels)
    classes = np.unique(y)
    n_cls = batch_size // samples_per_class
    if classes.size < n_cls:
        raise InsufficientClasses(f"need {n_cls} classes, have {classes.size}")
    chosen = rng.choice(classes, size=n_cls, replace=False)
    out = []
    for c in chosen:
        pool = np.flatnonzero(y == c)
        replace = pool.size < samples_per_class
        out.append(rng.choice(pool, size=samples_per_class, replace=replace))
    return np.concatenate(out)


# ------------------------------------------------------------------ history


@dataclass
class TrainHistory:
    total_loss: list[float] = field(default_factory=list)
    dml_loss: list[float] = field(default_factory=list)
    match_loss: list[float] = field(default_factory=list)
    val_recall1: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)


# ----------------------------------------------------- guidance preparation


class _GuidanceAssets:
    """Per-run constants resolved once: language rows by class id, ranked
    pseudolabel embeddings, external target matrix."""

    def __init__(self, cfg: TrainConfig, data: DatasetBundle, dtype):
        spec = cfg.guidance
        self.spec = spec
        self.class_lang_rows = None
        self.sample_lang_rows = None
        self.ranked = None          # [n_keys, k, lang_dim]
        self.key_of_sample = None   # plg: row index into `ranked` per sample id
        self.external = None
        mode = spec.mode
        if mode in ("elg", "rowwise_l2", "full_kl") and spec.level == "sample":
            # caption-style guidance: one language row per sample, no mask
            if data.lang_sample is None:
                raise GuidanceInputMissing(
                    f"sample-level {mode!r} needs a sample language table")
            self.sample_lang_rows = np.asarray(data.lang_sample.embeddings, dtype=dtype)
        elif mode in ("elg", "clip_style", "predict_head", "rowwise_l2", "full_kl"):
            if data.lang_class is None:
                raise GuidanceInputMissing(f"mode {mode!r} needs a class language table")
            self.class_lang_rows = self._rows_by_class(data, data.lang_class, dtype)
        elif mode == "plg":
            if data.posteriors is None or data.lang_pseudo is None:
                raise GuidanceInputMissing(
                    "plg needs classifier posteriors and a pseudo-class language table")
            self._prepare_plg(cfg, data, dtype)
        elif mode == "external":
            if data.external_targets is None:
                raise GuidanceInputMissing("external mode needs a target matrix")
            self.external = np.asarray(data.external_targets, dtype=dtype)

    @staticmethod
    def _rows_by_class(data: DatasetBundle, table, dtype) -> np.ndarray:
        name_to_row = {n: i for i, n in enumerate(table.names)}
        rows = []
        for name in data.class_names:
            if name not in name_to_row:
                raise GuidanceInputMissing(f"class {name!r} missing from language table")
            rows.append(table.embeddings[name_to_row[name]])
        return np.asarray(rows, dtype=dtype)

    def _prepare_plg(self, cfg: TrainConfig, data: DatasetBundle, dtype):
        spec = cfg.guidance
        table = data.lang_pseudo
        if spec.level == "class":
            assign = pseudolabels.class_pseudolabels(data.posteriors, data.labels, spec.k)
            key_index = {key: i for i, key in enumerate(assign.keys)}
            self.key_of_sample = np.array([key_index[int(c)] for c in data.labels])
        else:
            assign = pseudolabels.sample_pseudolabels(data.posteriors, spec.k)
            self.key_of_sample = np.arange(data.labels.shape[0])
        name_to_row = {n: i for i, n in enumerate(table.names)}
        ranked = pseudolabels._rank_embeddings(assign, name_to_row, table.embeddings)
        self.ranked = np.asarray(ranked, dtype=dtype)

    def plg_targets(self, sample_idx: np.ndarray) -> list[np.ndarray]:
        r = self.ranked[self.key_of_sample[sample_idx]]  # [B, k, L]
        k = r.shape[1]
        if self.spec.merge == "dense":
            return [r[:, u] @ r[:, v].T for u in range(k) for v in range(k)]
        return [r[:, j] @ r[:, j].T for j in range(k)]


def _guidance_node(assets: _GuidanceAssets, emb_node: Var, s_node: Var,
                   y_batch: np.ndarray, sample_idx: np.ndarray) -> Var:
    """Build the guidance loss node for one batch (predict_head excluded;
    the training loop wires the auxiliary predictor itself)."""
    spec = assets.spec
    gl, temp = spec.gamma_lang, spec.temperature
    mask = guidance.same_class_mask(y_batch)
    fill = s_node.value.dtype.type(1.0 + gl)

    def image_side():
        # sample-level targets resolve within-class structure, so the
        # same-class mask is bypassed there
        if spec.level == "sample" and spec.mode != "plg":
            return s_node
        return tape.masked_fill(s_node, mask, fill)

    def lang_target():
        if assets.sample_lang_rows is not None:
            rows = assets.sample_lang_rows[sample_idx]
        else:
            rows = assets.class_lang_rows[y_batch]
        return rows @ rows.T

    if spec.mode == "elg":
        return guidance.match_node(image_side(), lang_target(), gl, temp)
    if spec.mode == "plg":
        targets = assets.plg_targets(sample_idx)
        node = image_side() if spec.level == "class" else s_node
        return guidance._pseudomatch_node(node, targets, spec)
    if spec.mode == "external":
        target = assets.external[np.ix_(y_batch, y_batch)]
        return guidance.match_node(image_side(), target, gl, temp)
    if spec.mode == "rowwise_l2":
        return guidance.rowwise_l2_node(image_side(), lang_target() + gl)
    if spec.mode == "full_kl":
        return guidance.full_kl_node(image_side(), lang_target(), gl, temp)
    if spec.mode == "clip_style":
        rows = assets.class_lang_rows[y_batch]
        return guidance.clip_style_node(emb_node, rows, temp)
    raise UnknownLoss(spec.mode)


# ------------------------------------------------------------------- train


def _base_loss_node(cfg: TrainConfig, emb_node: Var, s_node: Var,
                    y_batch: np.ndarray, assets: _GuidanceAssets,
                    beta_leaf: Var | None, rng: np.random.Generator) -> Var:
    params = dict(cfg.base_params)
    if cfg.base_loss == "contrastive":
        metric = params.pop("metric", "euclidean")
        form = params.pop("form", "paper")
        p = losses.ContrastiveParams(**params)
        return losses.contrastive_node(emb_node, y_batch, p, metric, form)
    if cfg.base_loss == "multisimilarity":
        use_lang = params.pop("use_language", False)
        p = losses.MultisimParams(**params)
        s_lang = None
        if use_lang:
            if assets.class_lang_rows is None:
                raise GuidanceInputMissing(
                    "language-adjusted multisimilarity needs a class language table")
            rows = assets.class_lang_rows[y_batch]
            s_lang = rows @ rows.T
        return losses.multisimilarity_node(s_node, y_batch, p, s_lang=s_lang)
    if cfg.base_loss == "margin":
        params.pop("learn_beta", None)
        params.pop("beta_lr", None)
        p = losses.MarginParams(**params)
        triplets = losses.sample_triplets(emb_node.value, y_batch, p, rng)
        return losses.margin_node(emb_node, triplets, p, beta=beta_leaf)
    raise UnknownLoss(cfg.base_loss)


def train(cfg: TrainConfig, data: DatasetBundle):
    """Run the configured experiment; returns (best EmbedderHead, history).

    Deterministic given cfg.seed: sampler, init, and validation split draw
    from independent named streams of the one master seed.
    """
    dtype = np.float32 if cfg.dtype == "float32" else np.float64
    feats, labels = data.subset(data.train_classes)
    feats = np.ascontiguousarray(feats, dtype=dtype)
    sample_ids = np.flatnonzero(np.isin(data.labels, data.train_classes))

    # language-adjusted multisimilarity needs class language rows even with
    # guidance mode "none"
    need_lang_rows = (cfg.base_loss == "multisimilarity"
                      and cfg.base_params.get("use_language", False))
    assets = _GuidanceAssets(cfg, data, dtype)
    if need_lang_rows and assets.class_lang_rows is None:
        if data.lang_class is None:
            raise GuidanceInputMissing(
                "language-adjusted multisimilarity needs a class language table")
        assets.class_lang_rows = assets._rows_by_class(data, data.lang_class, dtype)

    n = feats.shape[0]
    split_rng = named_stream(cfg.seed, "valsplit")
    perm = split_rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    val_idx, fit_idx = perm[:n_val], perm[n_val:]
    x_fit, y_fit, ids_fit = feats[fit_idx], labels[fit_idx], sample_ids[fit_idx]
    x_val, y_val = feats[val_idx], labels[val_idx]

    init_rng = named_stream(cfg.seed, "init")
    head = EmbedderHead.init(feats.shape[1], cfg.embed_dim, cfg.hidden, init_rng, dtype)
    opt_state = adam_init(head.params)

    predictor = None
    pred_state = None
    if cfg.guidance.mode == "predict_head":
        lang_dim = assets.class_lang_rows.shape[1]
        predictor = EmbedderHead.init(cfg.embed_dim, lang_dim, True, init_rng, dtype)
        pred_state = adam_init(predictor.params)
    if cfg.guidance.mode == "clip_style":
        if assets.class_lang_rows.shape[1] != cfg.embed_dim:
            raise GuidanceInputMissing(
                "clip_style needs embed_dim == language dim (no projection head)")

    beta_leaf_value = None
    beta_state = None
    learn_beta = cfg.base_loss == "margin" and cfg.base_params.get("learn_beta", False)
    if cfg.base_loss == "margin":
        beta_leaf_value = np.asarray(cfg.base_params.get("beta_margin", 1.2), dtype=np.float64)
        if learn_beta:
            beta_state = adam_init({"beta": beta_leaf_value.reshape(1)})
    beta_lr = cfg.base_params.get("beta_lr") or cfg.lr

    sampler_rng = named_stream(cfg.seed, "sampler")
    margin_rng = named_stream(cfg.seed, "margin")
    history = TrainHistory()
    lr = cfg.lr
    steps_down = 0
    best_val = -np.inf
    best_params = copy.deepcopy(head.params)
    stall = 0
    steps_per_epoch = max(1, len(fit_idx) // cfg.batch_size)
    omega = cfg.guidance.omega

    for _epoch in range(cfg.epochs):
        tot_sum = dml_sum = match_sum = 0.0
        for _step in range(steps_per_epoch):
            idx = sample_batch(y_fit, cfg.batch_size, cfg.samples_per_class, sampler_rng)
            x_b, y_b, ids_b = x_fit[idx], y_fit[idx], ids_fit[idx]
            emb_node, leaves = head.node(x_b)
            s_node = tape.self_cosine(emb_node)
            beta_leaf = tape.leaf(beta_leaf_value) if beta_leaf_value is not None else None
            dml_node = _base_loss_node(cfg, emb_node, s_node, y_b, assets,
                                       beta_leaf, margin_rng)
            pred_leaves = {}
            if cfg.guidance.mode == "none":
                total_node, match_val = dml_node, 0.0
            elif cfg.guidance.mode == "predict_head":
                rows = assets.class_lang_rows[y_b]
                pl = {name: tape.leaf(arr) for name, arr in predictor.params.items()}
                h = tape.add(tape.matmul(emb_node, pl["w0"]), pl["b0"])
                t = tape.op(np.tanh(h.value), [(h, lambda g, hv=h: g * (1 - np.tanh(hv.value) ** 2))])
                h = tape.add(tape.matmul(t, pl["w1"]), pl["b1"])
                match_node_ = guidance.predict_head_node(tape.rownorm(h), rows)
                pred_leaves = pl
                match_val = float(match_node_.value)
                total_node = tape.add(dml_node, tape.scale(match_node_, omega))
            else:
                match_node_ = _guidance_node(assets, emb_node, s_node, y_b, ids_b)
                match_val = float(match_node_.value)
                total_node = tape.add(dml_node, tape.scale(match_node_, omega))

            total = float(total_node.value)
            if not np.isfinite(total):
                raise NonFiniteLoss(
                    f"epoch {_epoch} step {_step}: loss={total} "
                    f"(dml={float(dml_node.value)}, match={match_val})")
            tape.backward(total_node)
            grads = {name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value))
                     for name, leaf in leaves.items()}
            adam_step(head.params, grads, opt_state, lr, cfg.weight_decay)
            if pred_leaves:
                pgrads = {name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value))
                          for name, leaf in pred_leaves.items()}
                adam_step(predictor.params, pgrads, pred_state, lr, cfg.weight_decay)
            if learn_beta and beta_leaf is not None and beta_leaf.grad is not None:
                adam_step({"beta": beta_leaf_value.reshape(1)},
                          {"beta": np.asarray(beta_leaf.grad).reshape(1)},
                          beta_state, beta_lr)
            tot_sum += total
            dml_sum += float(dml_node.value)
            match_sum += match_val

        # validation + schedule
        if len(val_idx) >= 2:
            val_emb = head.forward(x_val)
            val_r1 = evalkit.recall_at_k(val_emb, y_val, [1])[1]
        else:
            val_r1 = float("nan")
        history.total_loss.append(tot_sum / steps_per_epoch)
        history.dml_loss.append(dml_sum / steps_per_epoch)
        history.match_loss.append(match_sum / steps_per_epoch)
        history.val_recall1.append(val_r1)
        history.lr.append(lr)
        if np.isnan(val_r1):
            best_params = copy.deepcopy(head.params)
            continue
        if val_r1 > best_val:
            best_val = val_r1
            best_params = copy.deepcopy(head.params)
            stall = 0
        else:
            stall += 1
            if stall >= cfg.schedule.patience and steps_down < cfg.schedule.max_steps_down:
                lr *= cfg.schedule.decay_factor
                steps_down += 1
                stall = 0

    return EmbedderHead(best_params, cfg.hidden), history


# ---------------------------------------------------------------- gradcheck


def finite_difference_gradient(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function over every coordinate."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xp[i] += step
        xm = x.copy()
        xm[i] -= step
        g[i] = (f(xp) - f(xm)) / (2.0 * step)
    return g


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def _unit_rows(rng, n, d, spread=None):
    if spread is None:
        return simcore.normalize_rows(rng.normal(size=(n, d)))
    base = simcore.normalize_rows(rng.normal(size=(1, d)))
    return simcore.normalize_rows(rng.normal(size=(n, d)) * spread + base)


def _gc_contrastive(rng):
    emb = _unit_rows(rng, 6, 8)
    y = rng.integers(0, 3, size=6)
    p = losses.ContrastiveParams(0.2, 1.0)
    metric = ["euclidean", "cosine_distance"][int(rng.integers(2))]
    f = lambda x: losses.contrastive_loss(x, y, p, metric)[0]
    return f, emb, losses.contrastive_loss(emb, y, p, metric)[1]


def _gc_multisim(variant):
    def build(rng):
        # narrow positive similarity spread keeps every mined coordinate's
        # gradient above the finite-difference noise floor
        emb = _unit_rows(rng, 6, 8, spread=0.25)
        y = rng.integers(0, 3, size=6)
        s = emb @ emb.T
        lemb = _unit_rows(rng, 6, 5, spread=0.25)
        sl = lemb @ lemb.T
        if variant == "baseline":
            p, lang = losses.MultisimParams(alpha=2, beta=5, lam=0.5, epsilon=0.2), None
        elif variant == "mining":
            p, lang = losses.MultisimParams(alpha=2, beta=5, lam=0.5, epsilon=0.2,
                                            nu1=0.5, nu2=1.0), sl
        elif variant == "weights":
            p, lang = losses.MultisimParams(alpha=1.5, beta=5, lam=0.5, epsilon=0.2,
                                            nu3=0.75, nu4=0.75), sl
        else:  # mining+weights
            p, lang = losses.MultisimParams(alpha=1.5, beta=5, lam=0.5, epsilon=0.2,
                                            nu1=0.5, nu2=2.0, nu3=0.75, nu4=0.75), sl
        masks = losses.language_adjusted_mining_mask(s, lang, y, p)
        f = lambda x: losses.multisimilarity_loss(x, y, p, s_lang=lang, masks=masks)[0]
        return f, s, losses.multisimilarity_loss(s, y, p, s_lang=lang, masks=masks)[1]

    return build


def _gc_margin(rng):
    emb = _unit_rows(rng, 8, 8)
    y = np.repeat(np.arange(4), 2)
    p = losses.MarginParams()
    triplets = losses.sample_triplets(emb, y, p, rng)
    f = lambda x: losses.margin_loss(x, y, p, triplets=triplets)[0]
    return f, emb, losses.margin_loss(emb, y, p, triplets=triplets)[1]


def _match_inputs(rng, n=6):
    emb = _unit_rows(rng, n, 8)
    y = rng.integers(0, 3, size=n)
    s = emb @ emb.T
    mask = guidance.same_class_mask(y)
    lemb = _unit_rows(rng, n, 5)
    return np.where(mask, 1.5, s), lemb @ lemb.T, mask


def _gc_elg(rng):
    s, sl, mask = _match_inputs(rng)
    f = lambda x: guidance.elg_match_loss(np.where(mask, 1.5, x), sl, 0.5, 1.0, mask=mask)[0]
    return f, s, guidance.elg_match_loss(s, sl, 0.5, 1.0, mask=mask)[1]["s_img"]


def _gc_pseudomatch(merge):
    def build(rng):
        s, _, mask = _match_inputs(rng)
        k = 4 if merge == "dense" else 2
        targets = []
        for _ in range(k):
            lemb = _unit_rows(rng, 6, 5)
            targets.append(lemb @ lemb.T)
        spec = GuidanceSpec(mode="plg", merge=merge, gamma_lang=0.5, k=max(2, k))
        f = lambda x: guidance.pseudomatch_loss(np.where(mask, 1.5, x), targets, spec, mask=mask)[0]
        return f, s, guidance.pseudomatch_loss(s, targets, spec, mask=mask)[1]["s_img"]

    return build


def _gc_full_kl(rng):
    s, sl, mask = _match_inputs(rng)
    f = lambda x: guidance.full_matrix_kl(np.where(mask, 1.5, x), sl, 0.5, mask=mask)[0]
    return f, s, guidance.full_matrix_kl(s, sl, 0.5, mask=mask)[1]["s_img"]


def _gc_rowwise_l2(rng):
    s, sl, mask = _match_inputs(rng)
    f = lambda x: guidance.rowwise_l2_loss(np.where(mask, 1.5, x), sl, 0.5, mask=mask)[0]
    return f, s, guidance.rowwise_l2_loss(s, sl, 0.5, mask=mask)[1]["s_img"]


def _gc_clip(rng):
    img = _unit_rows(rng, 5, 6)
    lang = _unit_rows(rng, 5, 6)
    f = lambda x: guidance.clip_style_loss(x, lang, 0.3)[0]
    return f, img, guidance.clip_style_loss(img, lang, 0.3)[1]["img_emb"]


def _gc_predict(rng):
    pred = _unit_rows(rng, 5, 6)
    lang = _unit_rows(rng, 5, 6)
    f = lambda x: guidance.predict_head_loss(x, lang)[0]
    return f, pred, guidance.predict_head_loss(pred, lang)[1]["head_out"]


GRADCHECK_LOSSES = {
    "contrastive": _gc_contrastive,
    "multisimilarity": _gc_multisim("baseline"),
    "multisimilarity_mining": _gc_multisim("mining"),
    "multisimilarity_weights": _gc_multisim("weights"),
    "multisimilarity_mining_weights": _gc_multisim("mining+weights"),
    "margin": _gc_margin,
    "elg_match": _gc_elg,
    "pseudomatch_average": _gc_pseudomatch("average"),
    "pseudomatch_multi": _gc_pseudomatch("multi"),
    "pseudomatch_dense": _gc_pseudomatch("dense"),
    "full_matrix_kl": _gc_full_kl,
    "rowwise_l2": _gc_rowwise_l2,
    "clip_style": _gc_clip,
    "predict_head": _gc_predict,
}


def gradcheck(loss: str | None = None, step: float = 1e-6, seed: int = 0,
              instances: int = 20) -> dict:
    """Compare analytic gradients against central finite differences.

    Per-coordinate relative error uses denominator max(|a|, |b|, 1e-8);
    the report maps each loss name to its max over all instances and
    coordinates. Double precision throughout.
    """
    if not 1e-8 <= step <= 1e-4:
        raise ValueError(f"step must lie in [1e-8, 1e-4], got {step}")
    if loss is None:
        names = list(GRADCHECK_LOSSES)
    elif loss in GRADCHECK_LOSSES:
        names = [loss]
    else:
        raise UnknownLoss(f"{loss!r}; known: {sorted(GRADCHECK_LOSSES)}")
    report = {}
    for name in names:
        build = GRADCHECK_LOSSES[name]
        worst = 0.0
        for i in range(instances):
            rng = np.random.default_rng((seed, i))
            f, x0, g_analytic = build(rng)
            g_fd = finite_difference_gradient(f, x0.astype(np.float64), step)
            worst = max(worst, max_relative_error(np.asarray(g_analytic, dtype=np.float64), g_fd))
        report[name] = {"max_rel_error": worst, "instances": instances}
    return report
