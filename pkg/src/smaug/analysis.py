"""Diagnostics math: k-means, adjusted mutual information, curve area.

Used to score how well the learned subtask vectors track the environment's
hidden goal: cluster the z vectors, then chance-correct the mutual
information between cluster ids and ground-truth goal ids.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["kmeans", "adjusted_mutual_info", "curve_area"]


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = 100) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns cluster labels."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    k = min(k, n)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    cost = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = cost.sum()
        if total <= 0:
            centers[j:] = points[rng.integers(n, size=k - j)]
            break
        probs = cost / total
        centers[j] = points[rng.choice(n, p=probs)]
        cost = np.minimum(cost, np.sum((points - centers[j]) ** 2, axis=1))
    labels = np.full(n, -1, dtype=np.int64)
    for _it in range(max_iter):
        d = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                centers[j] = points[d.min(axis=1).argmax()]
    return labels


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def adjusted_mutual_info(a: np.ndarray, b: np.ndarray) -> float:
    """Chance-corrected mutual information between two labelings.

    0 is chance level, 1 is a perfect match; uses the permutation-model
    expected MI and arithmetic-mean normalization.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"label arrays differ in shape: {a.shape} vs {b.shape}")
    n = a.size
    if n == 0:
        return 0.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    r, c = ai.max() + 1, bi.max() + 1
    cont = np.zeros((r, c), dtype=np.int64)
    np.add.at(cont, (ai, bi), 1)
    row = cont.sum(axis=1)
    col = cont.sum(axis=0)
    h_a, h_b = _entropy(row, n), _entropy(col, n)
    if h_a == 0.0 and h_b == 0.0:
        return 1.0

    nz = cont > 0
    pij = cont[nz] / n
    outer = (row[:, None] * col[None, :])[nz] / (n * n)
    mi = float((pij * np.log(pij / outer)).sum())

    # expected MI under the hypergeometric permutation model
    lg = math.lgamma
    log_n_fact = lg(n + 1)
    emi = 0.0
    for i in range(r):
        a_i = int(row[i])
        for j in range(c):
            b_j = int(col[j])
            lo = max(1, a_i + b_j - n)
            hi = min(a_i, b_j)
            if hi < lo:
                continue
            base = (lg(a_i + 1) + lg(b_j + 1) + lg(n - a_i + 1)
                    + lg(n - b_j + 1) - log_n_fact)
            for nij in range(lo, hi + 1):
                log_term = (base - lg(nij + 1) - lg(a_i - nij + 1)
                            - lg(b_j - nij + 1) - lg(n - a_i - b_j + nij + 1))
                emi += (nij / n) * math.log(n * nij / (a_i * b_j)) * math.exp(log_term)

    denom = 0.5 * (h_a + h_b) - emi
    if abs(denom) < 1e-12:
        return 0.0
    return float((mi - emi) / denom)


def curve_area(steps, values) -> float:
    """Trapezoidal area under a learning curve sampled at ``steps``."""
    steps = np.asarray(steps, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if steps.size < 2:
        return 0.0
    return float(np.trapezoid(values, steps))
