"""Synthetic desk-scale fixtures with a two-level class hierarchy.

Class feature centroids sit around superclass centroids; language
embeddings are a noisy linear projection of the same geometry, so
language similarity correlates with true class relatedness. Posteriors
come from a frozen random linear classifier whose concept directions
also get language embeddings, which makes pseudolabel guidance
informative the same way expert names are. One class per superclass is
held out as the disjoint test split.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .datastore import DatasetBundle, LanguageTable
from .errors import ConfigError, DegenerateSpec
from .pseudolabels import PosteriorMatrix
from .rng import named_stream
from .simcore import normalize_rows, row_softmax


@dataclass
class SynthSpec:
    n_super: int = 4
    classes_per_super: int = 5
    samples_per_class: int = 30
    feat_dim: int = 64
    lang_dim: int = 32
    intra_noise: float = 1.0
    seed: int = 0
    super_spread: float = 3.0    # superclass centroid spread around a shared direction
    class_spread: float = 1.0    # class centroid spread around its superclass
    lang_noise: float = 0.12
    n_pretrain_classes: int = 128
    concept_spread: float = 0.7  # pretrain concepts cover the data hierarchy
    posterior_sharpness: float = 8.0

    def __post_init__(self):
        counts = (self.n_super, self.classes_per_super, self.samples_per_class,
                  self.feat_dim, self.lang_dim, self.n_pretrain_classes)
        if any(c < 1 for c in counts):
            raise DegenerateSpec("all counts must be >= 1")
        if (self.intra_noise <= 0 or self.class_spread <= 0
                or self.super_spread <= 0 or self.lang_noise < 0):
            raise DegenerateSpec("noise scales must be positive")
        if self.classes_per_super < 2:
            raise DegenerateSpec("need >= 2 classes per superclass for a held-out split")


def synth_spec_from_dict(data: dict) -> SynthSpec:
    allowed = {f.name for f in fields(SynthSpec)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in synth spec")
    return SynthSpec(**data)


def _unit_noise(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def synth_dataset(spec: SynthSpec) -> DatasetBundle:
    """Generate a bundle (float32) with features, labels, all language
    tables, posteriors, hierarchy targets and a disjoint class split."""
    f_dim, l_dim = spec.feat_dim, spec.lang_dim
    n_classes = spec.n_super * spec.classes_per_super

    rng_super = named_stream(spec.seed, "synth", "super")
    rng_cls = named_stream(spec.seed, "synth", "classes")
    rng_smp = named_stream(spec.seed, "synth", "samples")
    rng_lang = named_stream(spec.seed, "synth", "lang")
    rng_pre = named_stream(spec.seed, "synth", "pretrain")
    rng_split = named_stream(spec.seed, "synth", "split")

    # superclass offsets are mutually orthogonal (and orthogonal to the
    # shared direction) so all cross-superclass relations sit at the same
    # distance and the hierarchy signal has no accidental collisions
    shared = _unit_noise(rng_super, f_dim)
    if spec.n_super + 1 <= f_dim:
        raw = np.column_stack([shared, rng_super.normal(size=(f_dim, spec.n_super))])
        basis = np.linalg.qr(raw)[0][:, 1:]
        offsets = basis.T
    else:
        offsets = normalize_rows(rng_super.normal(size=(spec.n_super, f_dim)))
    super_mu = normalize_rows(shared[None, :] + spec.super_spread * offsets)
    class_mu = np.empty((n_classes, f_dim))
    super_of = np.empty(n_classes, dtype=np.int64)
    for s in range(spec.n_super):
        for c in range(spec.classes_per_super):
            cid = s * spec.classes_per_super + c
            super_of[cid] = s
            class_mu[cid] = super_mu[s] + spec.class_spread * _unit_noise(rng_cls, f_dim)
    class_mu = normalize_rows(class_mu)

    n = n_classes * spec.samples_per_class
    features = np.empty((n, f_dim))
    labels = np.empty(n, dtype=np.int64)
    row = 0
    for cid in range(n_classes):
        for _ in range(spec.samples_per_class):
            features[row] = class_mu[cid] + spec.intra_noise * _unit_noise(rng_smp, f_dim)
            labels[row] = cid
            row += 1

    # shared near-isometric projection ties language space to feature space
    proj = np.linalg.qr(rng_lang.normal(size=(f_dim, l_dim)))[0].T  # [l_dim, f_dim]

    def to_lang(vectors: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = vectors @ proj.T
        out = normalize_rows(out)
        noisy = np.array([v + spec.lang_noise * _unit_noise(rng, l_dim) for v in out])
        return normalize_rows(noisy)

    class_names = [f"class-{super_of[c]:02d}-{c:03d}" for c in range(n_classes)]
    lang_class = LanguageTable(class_names, to_lang(class_mu, rng_lang).astype(np.float32))
    sample_names = [f"sample-{i:05d}" for i in range(n)]
    lang_sample = LanguageTable(sample_names,
                                to_lang(normalize_rows(features), rng_lang).astype(np.float32))

    # pretrain concepts populate the same coarse regions as the data
    # (generic pretraining covers the target domain), so top-k pseudolabels
    # of related classes genuinely overlap
    concept_dirs = normalize_rows(np.array(
        [super_mu[i % spec.n_super] + spec.concept_spread * _unit_noise(rng_pre, f_dim)
         for i in range(spec.n_pretrain_classes)]))
    logits = spec.posterior_sharpness * normalize_rows(features) @ concept_dirs.T
    post = row_softmax(logits, 0.0, 1.0)
    pretrain_names = [f"concept-{i:03d}" for i in range(spec.n_pretrain_classes)]
    posteriors = PosteriorMatrix(post.astype(np.float32), pretrain_names)
    lang_pseudo = LanguageTable(pretrain_names,
                                to_lang(concept_dirs, rng_pre).astype(np.float32))

    # hierarchy-derived external targets on the [0, 1] scale -> [-1, 1]
    same_super = super_of[:, None] == super_of[None, :]
    tree = np.where(same_super, 0.7, 0.25)
    np.fill_diagonal(tree, 1.0)
    external = (2.0 * tree - 1.0).astype(np.float32)

    test_classes = sorted(
        int(s * spec.classes_per_super + rng_split.integers(spec.classes_per_super))
        for s in range(spec.n_super))
    train_classes = sorted(set(range(n_classes)) - set(test_classes))

    return DatasetBundle(
        features=features.astype(np.float32),
        labels=labels,
        class_names=class_names,
        train_classes=train_classes,
        test_classes=test_classes,
        posteriors=posteriors,
        lang_class=lang_class,
        lang_sample=lang_sample,
        lang_pseudo=lang_pseudo,
        external_targets=external,
        meta={"synth_spec": asdict(spec)},
    )
