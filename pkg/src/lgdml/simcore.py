"""Dense similarity / softmax / divergence kernels.

Everything downstream (losses, guidance, evaluation) composes these.
All functions are pure, dtype-preserving (float32 in, float32 out) and
safe to call concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import DimMismatch, NonPositiveTemperature, ShapeMismatch, ZeroRow

PROB_FLOOR = 1e-30  # floor applied to probabilities before log
ZERO_ROW_TOL = 1e-12


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Project each row onto the unit hypersphere.

    Raises ZeroRow(i) if row i has Euclidean norm <= 1e-12.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected 2-d matrix, got shape {m.shape}")
    norms = np.linalg.norm(m, axis=1)
    bad = np.flatnonzero(norms <= ZERO_ROW_TOL)
    if bad.size:
        raise ZeroRow(int(bad[0]))
    return m / norms[:, None]


def cosine_similarity_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise dot products of unit-norm rows: out[i, j] = <a_i, b_j>."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[1] != b.shape[1]:
        raise DimMismatch(f"dim {a.shape[1]} vs {b.shape[1]}")
    return a @ b.T


def row_softmax(s: np.ndarray, shift: float = 0.0, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of (s + shift) / temperature.

    Stabilized by subtracting the row max before exponentiation. A shift
    that is constant across a whole row cancels exactly (softmax shift
    invariance); the parameter is kept because masked rows are *not*
    uniformly shifted.
    """
    if temperature <= 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
    s = np.asarray(s)
    z = (s + shift) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def rowwise_kl(p: np.ndarray, q: np.ndarray) -> float:
    """Mean over rows of KL(p_i || q_i), probabilities floored at 1e-30."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape:
        raise ShapeMismatch(f"{p.shape} vs {q.shape}")
    pf = np.maximum(p, PROB_FLOOR)
    qf = np.maximum(q, PROB_FLOOR)
    return float(np.sum(pf * (np.log(pf) - np.log(qf))) / p.shape[0])


def rowwise_l2(sa: np.ndarray, sb: np.ndarray) -> float:
    """Mean over rows of the squared Euclidean distance between rows."""
    sa = np.asarray(sa)
    sb = np.asarray(sb)
    if sa.shape != sb.shape:
        raise ShapeMismatch(f"{sa.shape} vs {sb.shape}")
    d = sa - sb
    return float(np.sum(d * d) / sa.shape[0])


def pairwise_euclidean(emb: np.ndarray) -> np.ndarray:
    """Matrix of Euclidean distances between all row pairs."""
    emb = np.asarray(emb)
    sq = np.sum(emb * emb, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (emb @ emb.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)
