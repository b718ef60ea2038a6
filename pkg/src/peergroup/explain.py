"""Tools for explaining what distinguishes clusters: PCA, random-forest
variable importance (global and per cluster pair), and location-vs-spread
discrimination via LDA, Mahalanobis and QDA classifiers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import RandomForestClassifier

from .hier import Partition
from .preprocess import FeatureTable


@dataclass
class PcaResult:
    loadings: np.ndarray  # (d, d), columns orthonormal
    scores: np.ndarray  # (n, d)
    variance_explained: np.ndarray  # (d,), nonincreasing
    rank_deficient: bool


def pca(table: FeatureTable) -> PcaResult:
    """Eigendecomposition of the sample covariance of a standardized table.

    Sign convention: the largest-magnitude loading in each component is
    positive.  Components beyond the matrix rank carry zero variance and
    set the ``rank_deficient`` flag.
    """
    if not table.standardized:
        raise ValueError("pca requires a standardized table")
    x = table.values
    n, d = x.shape
    if n <= d:
        import warnings

        warnings.warn("n <= d: principal components beyond the data rank "
                      "carry no information", stacklevel=2)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    evecs = evecs[:, order]
    for j in range(d):
        lead = np.argmax(np.abs(evecs[:, j]))
        if evecs[lead, j] < 0:
            evecs[:, j] = -evecs[:, j]
    rank = int(np.linalg.matrix_rank(cov))
    return PcaResult(
        loadings=evecs,
        scores=centered @ evecs,
        variance_explained=evals,
        rank_deficient=rank < d,
    )


@dataclass
class ImportanceReport:
    ranking: list[tuple[str, float]]  # (variable, importance), descending
    trees_used: int
    stability: float  # Spearman correlation between half-forest importances
    stable: bool
    importance_kind: str = "gini_decrease"


def _spearman(a: np.ndarray, b: np.ndarray) -> float:
    ra, rb = rankdata(a), rankdata(b)
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    denom = math.sqrt((ra @ ra) * (rb @ rb))
    return float(ra @ rb / denom) if denom > 0 else 0.0


def rf_importance(table: FeatureTable, labels, seed: int = 0,
                  start_trees: int = 100, max_trees: int = 6400,
                  stability_target: float = 0.9) -> ImportanceReport:
    """Mean-decrease-in-Gini variable importance with a stability loop.

    The forest is doubled until the Spearman rank correlation between the
    two half-forest importance vectors reaches the target, or the tree
    ceiling is hit (reported as unstable).  Rows are canonically ordered by
    id before fitting so the result is invariant to input permutation.
    """
    labels = labels.labels if isinstance(labels, Partition) else np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise ValueError("variable importance requires at least 2 clusters")
    _, counts = np.unique(labels, return_counts=True)
    if counts.min() < 2:
        raise ValueError("every cluster must have at least 2 members")
    order = np.argsort(np.array(table.ids, dtype=object), kind="stable")
    x = table.values[order]
    y = np.asarray(labels)[order]
    trees = start_trees
    while True:
        forest = RandomForestClassifier(
            n_estimators=trees, criterion="gini", max_features="sqrt",
            bootstrap=True, random_state=seed, n_jobs=1,
        ).fit(x, y)
        per_tree = np.array([t.feature_importances_ for t in forest.estimators_])
        half = trees // 2
        stability = _spearman(per_tree[:half].mean(axis=0),
                              per_tree[half:].mean(axis=0))
        if stability >= stability_target or trees >= max_trees:
            break
        trees *= 2
    importance = per_tree.mean(axis=0)
    ranking = sorted(zip(table.names, importance.tolist()),
                     key=lambda t: (-t[1], t[0]))
    return ImportanceReport(ranking=ranking, trees_used=trees,
                            stability=stability,
                            stable=stability >= stability_target)


def pairwise_importance(table: FeatureTable, partition: Partition,
                        seed: int = 0, **kwargs):
    """rf_importance restricted to every unordered cluster pair's subset."""
    from dataclasses import replace

    labels = partition.labels
    reports: dict[tuple[int, int], ImportanceReport] = {}
    for a in range(1, partition.k + 1):
        for b in range(a + 1, partition.k + 1):
            mask = (labels == a) | (labels == b)
            idx = np.nonzero(mask)[0]
            sub = replace(table, ids=[table.ids[i] for i in idx],
                          values=table.values[idx])
            reports[(a, b)] = rf_importance(sub, labels[idx], seed=seed, **kwargs)
    return reports


@dataclass
class DiscriminationReport:
    lda_accuracy: float
    qda_accuracy: float
    md_accuracy: float
    confusion: dict[str, np.ndarray]
    shrinkage_applied: bool


def _safe_inv(cov: np.ndarray, ridge: float = 1e-4):
    """Inverse with diagonal ridge shrinkage when near-singular."""
    d = cov.shape[0]
    try:
        if np.linalg.cond(cov) < 1e10:
            return np.linalg.inv(cov), False
    except np.linalg.LinAlgError:
        pass
    shrunk = cov + ridge * np.eye(d)
    try:
        return np.linalg.inv(shrunk), True
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"covariance singular even after shrinkage: {exc}")


def _confusion(y_true, y_pred) -> np.ndarray:
    out = np.zeros((2, 2), dtype=int)
    for t, p in zip(y_true, y_pred):
        out[t, p] += 1
    return out


def discriminate(table: FeatureTable, labels) -> DiscriminationReport:
    """Resubstitution accuracy of LDA, common-location Mahalanobis and QDA
    on a two-cluster labelling, with equal priors.

    The Mahalanobis classifier contrasts with LDA: it fixes a common
    (pooled-mean) location and lets the per-cluster spreads carry the
    decision, scoring each cluster by its Gaussian likelihood around the
    shared centre.
    """
    labels = labels.labels if isinstance(labels, Partition) else np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) != 2:
        raise ValueError("discrimination requires exactly 2 clusters")
    x = table.values
    n, d = x.shape
    y = (labels == uniq[1]).astype(int)
    groups = [x[y == 0], x[y == 1]]
    shrunk_any = False
    means = [g.mean(axis=0) for g in groups]
    covs = []
    for c, g in enumerate(groups):
        if len(g) <= d:
            import warnings

            warnings.warn(f"cluster {uniq[c]} has <= d members; applying "
                          "covariance shrinkage", stacklevel=2)
        covs.append(np.cov(g, rowvar=False, ddof=1))

    # LDA: pooled covariance, class means, equal priors
    pooled = (((len(groups[0]) - 1) * covs[0] + (len(groups[1]) - 1) * covs[1])
              / (n - 2))
    pooled_inv, s = _safe_inv(pooled)
    shrunk_any |= s
    lda_scores = np.stack([
        -0.5 * np.einsum("ij,jk,ik->i", x - mu, pooled_inv, x - mu)
        for mu in means
    ], axis=1)
    lda_pred = lda_scores.argmax(axis=1)

    # MD: per-cluster covariance about the pooled mean, common location
    grand = x.mean(axis=0)
    md_scores = []
    for g in groups:
        dev = g - grand
        cov_g = dev.T @ dev / (len(g) - 1)
        inv_g, s = _safe_inv(cov_g)
        shrunk_any |= s
        sign, logdet = np.linalg.slogdet(cov_g + (1e-4 * np.eye(d) if s else 0.0))
        maha = np.einsum("ij,jk,ik->i", x - grand, inv_g, x - grand)
        md_scores.append(-0.5 * maha - 0.5 * logdet)
    md_pred = np.stack(md_scores, axis=1).argmax(axis=1)

    # QDA: per-class mean and covariance with log-determinant terms
    qda_scores = []
    for mu, cov_g in zip(means, covs):
        inv_g, s = _safe_inv(cov_g)
        shrunk_any |= s
        sign, logdet = np.linalg.slogdet(cov_g + (1e-4 * np.eye(d) if s else 0.0))
        maha = np.einsum("ij,jk,ik->i", x - mu, inv_g, x - mu)
        qda_scores.append(-0.5 * maha - 0.5 * logdet)
    qda_pred = np.stack(qda_scores, axis=1).argmax(axis=1)

    return DiscriminationReport(
        lda_accuracy=float((lda_pred == y).mean()),
        qda_accuracy=float((qda_pred == y).mean()),
        md_accuracy=float((md_pred == y).mean()),
        confusion={
            "lda": _confusion(y, lda_pred),
            "md": _confusion(y, md_pred),
            "qda": _confusion(y, qda_pred),
        },
        shrinkage_applied=shrunk_any,
    )
