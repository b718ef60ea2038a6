"""Conjugate Gaussian Dirichlet process mixture fitted by collapsed Gibbs
sampling, producing the posterior dissimilarity matrix (PDM) and multi-chain
convergence diagnostics.

The base measure is an independent Normal-Inverse-Gamma prior per dimension
(diagonal covariance); the DP concentration is resampled each sweep by the
Escobar-West auxiliary-variable scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .preprocess import FeatureTable


@dataclass
class DpmmConfig:
    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 5
    chains: int = 4
    seed: int = 0
    alpha_shape: float = 2.0
    alpha_rate: float = 1.0
    m0: float = 0.0
    k0: float = 0.01
    a0: float = 2.0
    b0: float = 1.0

    def validate(self):
        if self.iterations <= self.burn_in or self.burn_in < 0:
            raise ValueError("iterations must exceed burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.chains < 1:
            raise ValueError("chains must be at least 1")
        if min(self.k0, self.a0, self.b0, self.alpha_shape, self.alpha_rate) <= 0:
            raise ValueError("k0, a0, b0 and the alpha prior must be positive")


@dataclass
class ChainResult:
    coassignment_counts: np.ndarray
    samples_used: int
    alpha_trace: np.ndarray
    log_posterior_trace: np.ndarray
    ids: list[str]

    def pdm(self) -> np.ndarray:
        if self.samples_used == 0:
            raise ValueError("chain recorded no samples")
        d = 1.0 - self.coassignment_counts / self.samples_used
        np.fill_diagonal(d, 0.0)
        return d


@dataclass
class DissimilarityMatrix:
    ids: list[str]
    d: np.ndarray
    kind: str  # posterior | metric

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        n = len(self.ids)
        if self.d.shape != (n, n):
            raise ValueError("matrix shape does not match ids")
        if not np.allclose(self.d, self.d.T, atol=1e-12):
            raise ValueError("dissimilarity matrix must be symmetric")
        if not np.allclose(np.diag(self.d), 0.0, atol=1e-12):
            raise ValueError("diagonal must be zero")
        if self.kind not in ("posterior", "metric"):
            raise ValueError("kind must be 'posterior' or 'metric'")
        if self.kind == "posterior" and (self.d.min() < -1e-12
                                         or self.d.max() > 1 + 1e-12):
            raise ValueError("posterior dissimilarities must lie in [0,1]")

    @property
    def n(self) -> int:
        return len(self.ids)


def _data_matrix(data) -> tuple[np.ndarray, list[str]]:
    if isinstance(data, FeatureTable):
        if not data.standardized:
            raise ValueError("DPMM input must be standardized")
        return data.values, list(data.ids)
    x = np.asarray(data, dtype=float)
    return x, [str(i) for i in range(x.shape[0])]


def run_chain(data, config: DpmmConfig, chain_seed: int) -> ChainResult:
    """One collapsed Gibbs chain; fully deterministic given the seed.

    Cluster assignments are resampled point by point from the conjugate
    predictive; after burn-in every thin-th sweep adds to the pairwise
    coassignment counts.
    """
    config.validate()
    x, ids = _data_matrix(data)
    n, d = x.shape
    if n < 2:
        raise ValueError("at least 2 observations required")
    rng = np.random.default_rng(chain_seed)
    k0, a0, b0, m0 = config.k0, config.a0, config.b0, config.m0

    counts = np.zeros(n + 1, dtype=int)
    sums = np.zeros((n + 1, d))
    sumsq = np.zeros((n + 1, d))
    labels = np.zeros(n, dtype=int)
    counts[0] = n
    sums[0] = x.sum(axis=0)
    sumsq[0] = (x**2).sum(axis=0)
    active = [0]
    free = list(range(n, 0, -1))

    # per-count constants for the Student-t predictive
    ms = np.arange(n + 1, dtype=float)
    kn_t = k0 + ms
    an_t = a0 + ms / 2.0
    c1_t = gammaln(an_t + 0.5) - gammaln(an_t) - 0.5 * np.log(2.0 * an_t * math.pi)

    scale20 = b0 * (k0 + 1.0) / (a0 * k0)
    new_const = d * c1_t[0] - 0.5 * d * math.log(scale20)

    alpha = config.alpha_shape / config.alpha_rate
    coassign = np.zeros((n, n), dtype=np.int64)
    alpha_trace = np.empty(config.iterations)
    logpost_trace = np.empty(config.iterations)
    samples_used = 0

    log_prior_alpha_const = (config.alpha_shape * math.log(config.alpha_rate)
                             - gammaln(config.alpha_shape))

    for sweep in range(config.iterations):
        for i in range(n):
            c = labels[i]
            counts[c] -= 1
            sums[c] -= x[i]
            sumsq[c] -= x[i] ** 2
            if counts[c] == 0:
                active.remove(c)
                free.append(c)
            act = np.array(active, dtype=int)
            m = counts[act].astype(float)
            s = sums[act]
            q = sumsq[act]
            mean = s / m[:, None]
            kn = kn_t[counts[act]][:, None]
            an = an_t[counts[act]][:, None]
            bn = (b0 + 0.5 * (q - s**2 / m[:, None])
                  + (k0 * m[:, None] * (mean - m0) ** 2) / (2.0 * kn))
            mn = (k0 * m0 + s) / kn
            scale2 = bn * (kn + 1.0) / (an * kn)
            dev2 = (x[i] - mn) ** 2
            logp = (c1_t[counts[act]][:, None] - 0.5 * np.log(scale2)
                    - (an + 0.5) * np.log1p(dev2 / (2.0 * an * scale2)))
            logw_exist = np.log(m) + logp.sum(axis=1)
            logw_new = (math.log(alpha) + new_const
                        - (a0 + 0.5)
                        * np.log1p((x[i] - m0) ** 2 / (2.0 * a0 * scale20)).sum())
            logw = np.append(logw_exist, logw_new)
            w = np.exp(logw - logw.max())
            cum = np.cumsum(w)
            choice = int(np.searchsorted(cum, rng.random() * cum[-1]))
            if choice == len(act):
                c_new = free.pop()
                active.append(c_new)
            else:
                c_new = int(act[choice])
            labels[i] = c_new
            counts[c_new] += 1
            sums[c_new] += x[i]
            sumsq[c_new] += x[i] ** 2

        k_clusters = len(active)
        # Escobar-West auxiliary update for the DP concentration
        eta = rng.beta(alpha + 1.0, n)
        rate_post = config.alpha_rate - math.log(eta)
        odds = (config.alpha_shape + k_clusters - 1) / (n * rate_post)
        if rng.random() < odds / (1.0 + odds):
            alpha = rng.gamma(config.alpha_shape + k_clusters, 1.0 / rate_post)
        else:
            alpha = rng.gamma(config.alpha_shape + k_clusters - 1, 1.0 / rate_post)

        alpha_trace[sweep] = alpha
        logpost_trace[sweep] = _log_posterior(
            counts, sums, sumsq, active, alpha, config, n, d,
            kn_t, an_t, log_prior_alpha_const,
        )

        if sweep >= config.burn_in and (sweep - config.burn_in) % config.thin == 0:
            coassign += labels[:, None] == labels[None, :]
            samples_used += 1

    return ChainResult(coassignment_counts=coassign, samples_used=samples_used,
                       alpha_trace=alpha_trace,
                       log_posterior_trace=logpost_trace, ids=ids)


def _log_posterior(counts, sums, sumsq, active, alpha, config, n, d,
                   kn_t, an_t, log_prior_alpha_const):
    """Unnormalised log posterior of the current partition and alpha."""
    k0, a0, b0, m0 = config.k0, config.a0, config.b0, config.m0
    act = np.array(active, dtype=int)
    m = counts[act].astype(float)
    s = sums[act]
    q = sumsq[act]
    mean = s / m[:, None]
    kn = kn_t[counts[act]][:, None]
    an = an_t[counts[act]][:, None]
    bn = (b0 + 0.5 * (q - s**2 / m[:, None])
          + (k0 * m[:, None] * (mean - m0) ** 2) / (2.0 * kn))
    marg = (-(m[:, None] / 2.0) * math.log(2.0 * math.pi)
            + 0.5 * (math.log(k0) - np.log(kn))
            + a0 * math.log(b0) - an * np.log(bn)
            + gammaln(an) - gammaln(a0))
    log_crp = (len(active) * math.log(alpha)
               + gammaln(m).sum()
               + gammaln(alpha) - gammaln(alpha + n))
    log_prior_alpha = (log_prior_alpha_const
                       + (config.alpha_shape - 1.0) * math.log(alpha)
                       - config.alpha_rate * alpha)
    return float(marg.sum() + log_crp + log_prior_alpha)


def run_dpmm(data, config: DpmmConfig) -> list[ChainResult]:
    """Run all configured chains with deterministic per-chain seeds."""
    config.validate()
    return [run_chain(data, config, config.seed + 1000003 * c)
            for c in range(config.chains)]


def posterior_dissimilarity(results: list[ChainResult]) -> DissimilarityMatrix:
    """Pool coassignment counts over chains: d_ij = 1 - pooled fraction."""
    if not results:
        raise ValueError("no chain results given")
    ids = results[0].ids
    for r in results[1:]:
        if r.ids != ids:
            raise ValueError("chains were run over different ids")
    total = sum(r.samples_used for r in results)
    if total == 0:
        raise ValueError("no recorded samples across chains")
    counts = sum(r.coassignment_counts for r in results)
    d = 1.0 - counts / total
    np.fill_diagonal(d, 0.0)
    return DissimilarityMatrix(ids=list(ids), d=d, kind="posterior")


def _lag1_autocorr(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if len(x) < 2 or np.all(x == x[0]):
        return 0.0
    xc = x - x.mean()
    return float((xc[:-1] @ xc[1:]) / (xc @ xc))


@dataclass
class TraceDiagnostics:
    means: list[float]
    lag1_autocorr: list[float]
    between_within_ratio: float


@dataclass
class ChainAgreement:
    pair_max_abs_diff: dict[tuple[int, int], float]
    pair_correlation: dict[tuple[int, int], float]
    alpha: TraceDiagnostics
    log_posterior: TraceDiagnostics
    scatter_series: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]]
    flagged: bool
    threshold: float


def _trace_diag(traces: list[np.ndarray]) -> TraceDiagnostics:
    means = [float(t.mean()) for t in traces]
    acs = [_lag1_autocorr(t) for t in traces]
    between = float(np.var(means, ddof=1)) if len(means) > 1 else 0.0
    within = float(np.mean([np.var(t, ddof=1) for t in traces]))
    ratio = between / within if within > 0 else math.inf
    return TraceDiagnostics(means=means, lag1_autocorr=acs,
                            between_within_ratio=ratio)


def chain_agreement(results: list[ChainResult],
                    threshold: float = 0.1) -> ChainAgreement:
    """Compare PDMs and traces across chains; flag poor agreement.

    For every chain pair the maximum absolute PDM difference and the
    Pearson correlation of off-diagonal entries are reported; any pair
    differing by more than ``threshold`` flags the run.
    """
    if len(results) < 2:
        raise ValueError("chain agreement diagnostics require at least 2 chains")
    n = len(results[0].ids)
    iu = np.triu_indices(n, k=1)
    pdms = [r.pdm() for r in results]
    max_diff, corrs, series = {}, {}, {}
    for a in range(len(results)):
        for b in range(a + 1, len(results)):
            xa, xb = pdms[a][iu], pdms[b][iu]
            max_diff[(a, b)] = float(np.abs(pdms[a] - pdms[b]).max())
            if np.all(xa == xa[0]) or np.all(xb == xb[0]):
                corrs[(a, b)] = 1.0 if np.array_equal(xa, xb) else 0.0
            else:
                corrs[(a, b)] = float(np.corrcoef(xa, xb)[0, 1])
            series[(a, b)] = (xa, xb)
    flagged = max(max_diff.values()) > threshold
    return ChainAgreement(
        pair_max_abs_diff=max_diff,
        pair_correlation=corrs,
        alpha=_trace_diag([r.alpha_trace for r in results]),
        log_posterior=_trace_diag([r.log_posterior_trace for r in results]),
        scatter_series=series,
        flagged=flagged,
        threshold=threshold,
    )


def euclidean_dissimilarity(data) -> DissimilarityMatrix:
    """Plain Euclidean distances as a metric-kind dissimilarity matrix."""
    x, ids = (data.values, list(data.ids)) if isinstance(data, FeatureTable) \
        else (np.asarray(data, dtype=float), None)
    if ids is None:
        ids = [str(i) for i in range(x.shape[0])]
    sq = (x**2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
    d = np.sqrt(d2)
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    return DissimilarityMatrix(ids=ids, d=d, kind="metric")
