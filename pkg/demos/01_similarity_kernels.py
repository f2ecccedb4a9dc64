"""Similarity kernels and the row-softmax / KL machinery.

Walks through the primitives everything else composes: unit-norm
embeddings, cosine similarity matrices, shifted row softmax, and the
row-wise KL divergence, including the shift invariance that makes a
uniform language offset a no-op inside the softmax.
"""

import numpy as np

from lgdml import simcore

rng = np.random.default_rng(0)

print("== unit-norm embeddings ==")
raw = rng.normal(size=(5, 8))
emb = simcore.normalize_rows(raw)
print("row norms:", np.round(np.linalg.norm(emb, axis=1), 12))

print("\n== cosine similarity matrix ==")
s = simcore.cosine_similarity_matrix(emb, emb)
print("symmetric:", np.allclose(s, s.T), "| unit diagonal:", np.allclose(np.diag(s), 1))
print(np.round(s, 3))

print("\n== row softmax with shift and temperature ==")
p = simcore.row_softmax(s, shift=0.0, temperature=1.0)
print("rows sum to one:", np.allclose(p.sum(axis=1), 1.0))

# adding a constant to a whole row cancels inside the softmax, so a
# uniform language shift cannot change the matching loss by itself
p_shifted = simcore.row_softmax(s + 123.0)
print("uniform shift changes nothing:", np.max(np.abs(p - p_shifted)) < 1e-12)

# temperature sharpens or flattens the row distributions
for t in (2.0, 1.0, 0.25):
    q = simcore.row_softmax(s, temperature=t)
    print(f"temperature {t:4}: max prob {q.max():.3f}")

print("\n== row-wise KL divergence ==")
q = simcore.row_softmax(simcore.cosine_similarity_matrix(
    simcore.normalize_rows(rng.normal(size=(5, 8))), emb))
print("KL(p || p) =", simcore.rowwise_kl(p, p))
print("KL(p || q) =", round(simcore.rowwise_kl(p, q), 6), "(>= 0 always)")

print("\n== mean squared row distance (the L2 ablation kernel) ==")
print("rowwise_l2(s, s) =", simcore.rowwise_l2(s, s))
print("rowwise_l2(s, q) =", round(simcore.rowwise_l2(s, q), 6))
