"""From classifier posteriors to pseudolabel guidance targets.

A frozen pretrained classifier gives every sample a posterior over its
own (generic) classes. Averaging per class and keeping the top-k names
yields pseudo-classnames whose language embeddings stand in for expert
names; their per-rank similarity matrices are the distillation targets.
"""

import numpy as np

from lgdml import guidance, pseudolabels, synth
from lgdml.guidance import GuidanceSpec

bundle = synth.synth_dataset(synth.SynthSpec(seed=7, samples_per_class=12))
post = bundle.posteriors
print(f"posteriors: {post.data.shape[0]} samples x {post.data.shape[1]} "
      f"pretrain concepts; rows sum to 1")

print("\n== class-level top-k extraction ==")
assign = pseudolabels.class_pseudolabels(post, bundle.labels, k=5)
for key in assign.keys[:3]:
    i = assign.keys.index(key)
    names = ", ".join(assign.labels[i][:3])
    print(f"class {key:2d} ({bundle.class_names[key]}): {names}, ... "
          f"masses {np.round(assign.masses[i][:3], 3)}")

print("\nreport format (one line per key/rank):")
print("\n".join(pseudolabels.format_assignment_report(assign).splitlines()[:4]))

print("\n== per-rank language target matrices ==")
batch_classes = [0, 1, 10, 11]
mats = pseudolabels.build_pseudolang_matrices(assign, bundle.lang_pseudo, batch_classes)
print(f"k = {len(mats)} matrices of shape {mats[0].shape}")
print("rank-0 target (same-superclass pairs are high):")
print(np.round(mats[0], 2))

print("\n== sample-level extraction skips the class averaging ==")
sample_assign = pseudolabels.sample_pseudolabels(post, k=3)
print("sample 0 pseudolabels:", sample_assign.labels[0])

print("\n== feeding the targets to the matching loss ==")
emb_rows = bundle.lang_class.embeddings[batch_classes]  # stand-in embeddings
s_img = emb_rows @ emb_rows.T
labels = np.array(batch_classes)
mask = guidance.same_class_mask(labels)
s_masked = guidance.masked_image_similarity(s_img, labels, 0.5)
for merge in ("average", "multi"):
    spec = GuidanceSpec(mode="plg", merge=merge, gamma_lang=0.5, k=5)
    value, _ = guidance.pseudomatch_loss(s_masked, mats, spec, mask=mask)
    print(f"pseudomatch ({merge:7s}): {value:.6f}")
dense = pseudolabels.build_dense_pseudolang_matrices(assign, bundle.lang_pseudo,
                                                     batch_classes)
spec = GuidanceSpec(mode="plg", merge="dense", gamma_lang=0.5, k=5)
value, _ = guidance.pseudomatch_loss(s_masked, dense, spec, mask=mask)
print(f"pseudomatch (dense  ): {value:.6f}  ({len(dense)} pairing matrices)")
