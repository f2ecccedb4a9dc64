"""Independent brute-force oracles for the test suite.

Deliberately naive: explicit Python loops in double precision, no reuse
of library code paths. These define what the optimized kernels must
reproduce.
"""

import math

import numpy as np


def norm_rows(m):
    m = np.asarray(m, dtype=np.float64)
    out = np.zeros_like(m)
    for i in range(m.shape[0]):
        n = math.sqrt(sum(float(v) * float(v) for v in m[i]))
        out[i] = [float(v) / n for v in m[i]]
    return out


def cosine_matrix(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = sum(float(x) * float(y) for x, y in zip(a[i], b[j]))
    return out


def softmax_rows(s, shift=0.0, temperature=1.0):
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    for i in range(s.shape[0]):
        z = [(float(v) + shift) / temperature for v in s[i]]
        m = max(z)
        e = [math.exp(v - m) for v in z]
        t = sum(e)
        out[i] = [v / t for v in e]
    return out


def kl_rows(p, q, floor=1e-30):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    total = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            pf = max(float(p[i, j]), floor)
            qf = max(float(q[i, j]), floor)
            total += pf * (math.log(pf) - math.log(qf))
    return total / p.shape[0]


def l2_rows(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    total = 0.0
    for i in range(a.shape[0]):
        total += sum((float(x) - float(y)) ** 2 for x, y in zip(a[i], b[i]))
    return total / a.shape[0]


def euclidean(u, v):
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(u, v)))


def contrastive_pairs(emb, labels, gamma_p, gamma_n, metric="euclidean"):
    emb = np.asarray(emb, dtype=np.float64)
    y = list(labels)
    n = len(y)
    total = 0.0
    count = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            count += 1
            if metric == "euclidean":
                d = euclidean(emb[i], emb[j])
            else:
                d = 1.0 - sum(float(a) * float(b) for a, b in zip(emb[i], emb[j]))
            if y[i] == y[j]:
                total += max(gamma_p, d)
            else:
                total -= min(gamma_n, d)
    return total / count


def mining_masks(s_img, s_lang, labels, epsilon, nu1=1.0, nu2=1.0):
    s_img = np.asarray(s_img, dtype=np.float64)
    y = list(labels)
    n = len(y)

    def mined(i, j):
        if s_lang is None or nu1 == 1.0:
            return s_img[i, j]
        sl, si = float(s_lang[i, j]), float(s_img[i, j])
        if nu2 == 1.0:
            return (1 - nu1) * sl + nu1 * si
        sl, si = max(sl, 0.0), max(si, 0.0)
        return ((1 - nu1) * sl**nu2 + nu1 * si**nu2) ** (1.0 / nu2)

    pos = np.zeros((n, n), dtype=bool)
    neg = np.zeros((n, n), dtype=bool)
    for i in range(n):
        negs = [s_img[i, j] for j in range(n) if y[j] != y[i]]
        poss = [s_img[i, j] for j in range(n) if y[j] == y[i] and j != i]
        hardest_neg = max(negs) if negs else -math.inf
        easiest_pos = min(poss) if poss else math.inf
        for j in range(n):
            if j == i:
                continue
            if y[j] == y[i] and mined(i, j) < hardest_neg + epsilon:
                pos[i, j] = True
            if y[j] != y[i] and mined(i, j) > easiest_pos - epsilon:
                neg[i, j] = True
    return pos, neg


def multisim(s_img, labels, alpha, beta, lam, epsilon, s_lang=None,
             nu1=1.0, nu2=1.0, nu3=0.0, nu4=0.0):
    s_img = np.asarray(s_img, dtype=np.float64)
    n = len(labels)
    pos, neg = mining_masks(s_img, s_lang, labels, epsilon, nu1, nu2)

    def weight(i, j, nu):
        if s_lang is None or nu == 0.0:
            return 1.0
        denom = max(float(s_img[i, j]), 1e-3)
        ratio = min(max(float(s_lang[i, j]) / denom, 0.0), 10.0)
        return ratio**nu

    total = 0.0
    for i in range(n):
        p_sum = sum(math.exp(-alpha * weight(i, j, nu3) * (s_img[i, j] - lam))
                    for j in range(n) if pos[i, j])
        n_sum = sum(math.exp(beta * weight(i, j, nu4) * (s_img[i, j] - lam))
                    for j in range(n) if neg[i, j])
        total += math.log(1 + p_sum) / alpha + math.log(1 + n_sum) / beta
    return total / n


def match_loss(s_img_masked, s_lang, gamma, temperature=1.0):
    p = softmax_rows(s_img_masked, 0.0, temperature)
    q = softmax_rows(s_lang, gamma, temperature)
    return kl_rows(p, q)


def clip_loss(img, lang, temperature):
    img = np.asarray(img, dtype=np.float64)
    lang = np.asarray(lang, dtype=np.float64)
    s = cosine_matrix(img, lang) / temperature
    n = s.shape[0]
    total = 0.0
    for i in range(n):
        row = softmax_rows(s[i : i + 1])[0]
        col = softmax_rows(s[:, i].reshape(1, -1))[0]
        total += -0.5 * math.log(row[i]) - 0.5 * math.log(col[i])
    return total / n


def distance_weights(dists, dim, clip_at=0.5):
    logs = []
    for d in dists:
        dc = max(float(d), clip_at)
        inner = max(1.0 - dc * dc / 4.0, 1e-12)
        logs.append((dim - 2) * math.log(max(dc, 1e-12)) + 0.5 * (dim - 3) * math.log(inner))
    w = [math.exp(-(v - max(logs))) for v in logs]
    t = sum(w)
    return [v / t for v in w]


def recall_at_k(emb, labels, k):
    emb = np.asarray(emb, dtype=np.float64)
    y = list(labels)
    n = len(y)
    hits = 0
    for i in range(n):
        sims = [(float(np.dot(emb[i], emb[j])), j) for j in range(n) if j != i]
        sims.sort(key=lambda t: (-t[0], t[1]))
        if any(y[j] == y[i] for _, j in sims[:k]):
            hits += 1
    return hits / n


def average_precision(emb, labels, query, cutoff=1000):
    emb = np.asarray(emb, dtype=np.float64)
    y = list(labels)
    n = len(y)
    sims = [(float(np.dot(emb[query], emb[j])), j) for j in range(n) if j != query]
    sims.sort(key=lambda t: (-t[0], t[1]))
    ranked = [j for _, j in sims[: min(cutoff, n - 1)]]
    n_rel = sum(1 for j in range(n) if j != query and y[j] == y[query])
    denom = min(cutoff, n_rel)
    if denom == 0:
        return 0.0
    hits = 0
    total = 0.0
    for rank, j in enumerate(ranked, start=1):
        if y[j] == y[query]:
            hits += 1
            total += hits / rank
    return total / denom


def map_at(emb, labels, cutoff=1000):
    n = len(labels)
    return sum(average_precision(emb, labels, q, cutoff) for q in range(n)) / n


def top_k_indices(row, k):
    order = sorted(range(len(row)), key=lambda j: (-float(row[j]), j))
    return order[:k]
