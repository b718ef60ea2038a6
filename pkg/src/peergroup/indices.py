"""Cluster validity indices (ASW, CH, Pearson-Gamma) and the PCR
stability index, all computed from a dissimilarity matrix and partitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INDEX_NAMES = ("asw", "ch", "pg")


@dataclass
class SilhouetteResult:
    a: np.ndarray
    b: np.ndarray
    s: np.ndarray
    asw: float


@dataclass
class IndexReport:
    asw: float
    ch: float
    pearson_gamma: float
    k: int
    n: int


def _check_matrix_labels(d, labels):
    d = np.asarray(d, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = d.shape[0]
    if d.shape != (n, n):
        raise ValueError("dissimilarity matrix must be square")
    if labels.shape != (n,):
        raise ValueError("labels length must match matrix size")
    return d, labels, n


def silhouette(d, labels) -> SilhouetteResult:
    """Per-observation silhouette widths and their mean (ASW).

    a_i is the mean dissimilarity to own-cluster co-members, b_i the
    minimum mean dissimilarity to another cluster.  Singleton-cluster
    members get s_i = 0 by convention.
    """
    d, labels, n = _check_matrix_labels(d, labels)
    uniq = np.unique(labels)
    k = len(uniq)
    if k < 2:
        raise ValueError("silhouette undefined for one cluster")
    masks = labels[:, None] == uniq[None, :]  # (n, k)
    sizes = masks.sum(axis=0)
    sums = d @ masks  # (n, k): total dissimilarity from i to each cluster
    own = masks.argmax(axis=1)
    own_size = sizes[own]
    a = np.zeros(n)
    nonsingleton = own_size > 1
    a[nonsingleton] = sums[np.arange(n), own][nonsingleton] / (
        own_size[nonsingleton] - 1
    )
    means = sums / sizes[None, :]
    means[np.arange(n), own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.zeros(n)
    ok = nonsingleton & (denom > 0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return SilhouetteResult(a=a, b=b, s=s, asw=float(s.mean()))


def ch_index(d, labels) -> float:
    """Calinski-Harabasz index from pairwise squared dissimilarities.

    W = sum over clusters of (1/|C|) sum_{i<j in C} d_ij^2,
    T = (1/n) sum_{i<j} d_ij^2, B = T - W,
    CH = (B/(k-1)) / (W/(n-k)).  A zero-W partition with positive B is
    reported as +inf.
    """
    d, labels, n = _check_matrix_labels(d, labels)
    uniq = np.unique(labels)
    k = len(uniq)
    if k < 2 or k >= n:
        raise ValueError("CH index requires 2 <= k <= n-1")
    d2 = d**2
    total = d2.sum() / 2.0
    t = total / n
    w = 0.0
    for c in uniq:
        idx = np.nonzero(labels == c)[0]
        if len(idx) > 1:
            w += d2[np.ix_(idx, idx)].sum() / 2.0 / len(idx)
    b = t - w
    if w == 0.0:
        return math.inf if b > 0 else 0.0
    return (b / (k - 1)) / (w / (n - k))


def pearson_gamma(d, labels) -> float:
    """Pearson correlation of pairwise dissimilarities against the
    same(0)/different(1) cluster indicator over all i<j pairs."""
    d, labels, n = _check_matrix_labels(d, labels)
    iu = np.triu_indices(n, k=1)
    x = d[iu]
    y = (labels[iu[0]] != labels[iu[1]]).astype(float)
    if np.all(x == x[0]):
        raise ValueError("pairwise dissimilarities have zero variance")
    if np.all(y == y[0]):
        raise ValueError("cluster indicator has zero variance")
    xc = x - x.mean()
    yc = y - y.mean()
    return float((xc @ yc) / math.sqrt((xc @ xc) * (yc @ yc)))


def index_report(d, labels) -> IndexReport:
    """All three fit indices for one partition."""
    d, labels, n = _check_matrix_labels(d, labels)
    k = len(np.unique(labels))
    return IndexReport(
        asw=silhouette(d, labels).asw,
        ch=ch_index(d, labels),
        pearson_gamma=pearson_gamma(d, labels),
        k=k,
        n=n,
    )


def compute_index(name: str, d, labels) -> float:
    """Evaluate a fit index by name ('asw', 'ch' or 'pg')."""
    if name == "asw":
        return silhouette(d, labels).asw
    if name == "ch":
        return ch_index(d, labels)
    if name == "pg":
        return pearson_gamma(d, labels)
    raise ValueError(f"unknown index {name!r}; expected one of {INDEX_NAMES}")


def _pair_counts(labels: np.ndarray) -> int:
    """Number of within-cluster pairs in a labelling."""
    _, counts = np.unique(labels, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def pcr(previous, current) -> float:
    """Proportion of Connections Retained between two partitions.

    PCR = |pairs co-clustered in both| / |pairs co-clustered in previous|.
    Directional: coarsening the previous partition always yields 1.
    """
    previous = np.asarray(previous, dtype=int)
    current = np.asarray(current, dtype=int)
    if previous.shape != current.shape:
        raise ValueError("partitions must cover the same observations")
    denom = _pair_counts(previous)
    if denom == 0:
        raise ValueError(
            "PCR undefined: previous partition has no co-clustered pairs"
        )
    # joint contingency: pairs connected in both = within-cell pairs
    joint = previous.astype(np.int64) * (current.max() + 1) + current
    both = _pair_counts(joint)
    return both / denom
