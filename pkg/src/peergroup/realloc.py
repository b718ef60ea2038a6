"""Year-over-year re-clustering under a stability constraint.

Poorly fitting observations are flagged into singletons, the remainder kept
as intact clusters, and capped agglomeration resumes from that partial
partition.  A grid sweep over the flagged proportion p yields a
stability/fit tradeoff curve from which a solution is selected subject to a
PCR floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hier import (
    Partition,
    _merge_sequence,
    _profile_cuts,
    _best_k,
    group_dissimilarity,
    relabel_by_first_member,
)
from .indices import compute_index, pcr, silhouette


@dataclass
class PartialPartition:
    """Retained clusters plus observations flagged into singletons."""

    ids: list[str]
    retained: list[list[int]]  # member indices per kept cluster
    flagged: list[int]  # indices re-assigned to singletons

    @property
    def groups(self) -> list[list[int]]:
        return self.retained + [[i] for i in self.flagged]


@dataclass
class ReallocConfig:
    cap: int
    linkage: str = "ward"
    index: str = "ch"
    p_grid: list[float] = field(
        default_factory=lambda: [round(0.05 * i, 2) for i in range(20)]
    )
    pcr_min: float = 0.90

    def __post_init__(self):
        if any(p < 0.0 or p > 0.95 for p in self.p_grid):
            raise ValueError("grid values must lie in [0, 0.95]")
        if sorted(self.p_grid) != list(self.p_grid):
            raise ValueError("grid must be sorted ascending")
        if not 0.0 <= self.pcr_min <= 1.0:
            raise ValueError("pcr_min must lie in [0, 1]")


@dataclass
class TradeoffRow:
    p: float
    pcr: float
    index_value: float
    k: int
    reallocated: int
    partition: Partition | None
    error: str | None = None


@dataclass
class TradeoffCurve:
    rows: list[TradeoffRow]

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)


def flag_for_reallocation(d_new, previous: Partition, p: float) -> PartialPartition:
    """Flag the ceil(p*n) worst-fitting observations into singletons.

    Fit is the silhouette width under the previous labels on the new
    dissimilarities; the lowest widths are flagged, ties broken by id.
    """
    if not 0.0 <= p <= 0.95:
        raise ValueError("p must lie in [0, 0.95]")
    d_new = np.asarray(d_new, dtype=float)
    n = previous.n
    if d_new.shape != (n, n):
        raise ValueError("dissimilarity matrix does not match the partition")
    if previous.k < 2:
        raise ValueError("silhouette undefined for a single previous cluster")
    n_flag = math.ceil(p * n)
    if n_flag == 0:
        flagged: list[int] = []
    else:
        s = silhouette(d_new, previous.labels).s
        order = sorted(range(n), key=lambda i: (s[i], previous.ids[i]))
        flagged = sorted(order[:n_flag])
    flagged_set = set(flagged)
    retained = []
    for c in range(1, previous.k + 1):
        members = [i for i in np.nonzero(previous.labels == c)[0]
                   if i not in flagged_set]
        if members:
            retained.append([int(i) for i in members])
    return PartialPartition(ids=list(previous.ids), retained=retained,
                            flagged=flagged)


def _partition_at_cut(ids, groups, merge_steps, k_target) -> Partition:
    members = {gi: list(g) for gi, g in enumerate(groups)}
    k = len(members)
    for slot_i, slot_j, _, _ in merge_steps:
        if k == k_target:
            break
        members[slot_i] = members[slot_i] + members[slot_j]
        del members[slot_j]
        k -= 1
    if k != k_target:
        raise ValueError(f"cut with {k_target} clusters is unreachable")
    raw = np.empty(len(ids), dtype=int)
    for gi, g in members.items():
        raw[g] = gi
    return Partition(ids=list(ids), labels=relabel_by_first_member(raw))


def reallocate(d_new, previous: Partition, p: float, linkage: str,
               index: str, cap: int) -> Partition:
    """Constrained agglomeration restarted from the partial partition.

    Retained clusters are never split; singleton-singleton,
    singleton-cluster and cluster-cluster merges are all permitted subject
    to the cap, and the final cut is chosen by the fit index.
    """
    partial = flag_for_reallocation(d_new, previous, p)
    d_new = np.asarray(d_new, dtype=float)
    largest = max((len(g) for g in partial.retained), default=0)
    if cap < largest:
        raise ValueError(
            f"cap {cap} is smaller than a retained cluster of size {largest}; "
            "run a fresh (non-reallocation) clustering instead"
        )
    groups = partial.groups
    m = len(groups)
    work = np.full((m, m), np.inf)
    for a in range(m):
        for b in range(a + 1, m):
            work[a, b] = work[b, a] = group_dissimilarity(
                d_new, groups[a], groups[b], linkage
            )
    sizes = [len(g) for g in groups]
    steps = _merge_sequence(work, sizes, linkage, size_cap=cap)
    profile = _profile_cuts(d_new, groups, steps, index)
    best_k, _ = _best_k(profile)
    return _partition_at_cut(previous.ids, groups, steps, best_k)


def reallocated_count(previous: Partition, current: Partition) -> int:
    """Observations whose final cluster maps (by maximum overlap with the
    previous partition) to a different previous cluster than their own."""
    mapping = {}
    for c in range(1, current.k + 1):
        members = np.nonzero(current.labels == c)[0]
        overlap = np.bincount(previous.labels[members],
                              minlength=previous.k + 1)
        mapping[c] = int(np.argmax(overlap))
    mapped = np.array([mapping[c] for c in current.labels])
    return int(np.sum(mapped != previous.labels))


def tradeoff_grid(d_new, previous: Partition,
                  config: ReallocConfig) -> TradeoffCurve:
    """Run the reallocation at every grid p and record the tradeoff."""
    if not config.p_grid:
        raise ValueError("grid must be nonempty")
    rows = []
    for p in config.p_grid:
        try:
            part = reallocate(d_new, previous, p, config.linkage,
                              config.index, config.cap)
            rows.append(TradeoffRow(
                p=p,
                pcr=pcr(previous.labels, part.labels),
                index_value=compute_index(config.index, d_new, part.labels),
                k=part.k,
                reallocated=reallocated_count(previous, part),
                partition=part,
            ))
        except ValueError as exc:
            rows.append(TradeoffRow(p=p, pcr=math.nan, index_value=math.nan,
                                    k=0, reallocated=0, partition=None,
                                    error=str(exc)))
    return TradeoffCurve(rows=rows)


def select_stable(curve: TradeoffCurve, pcr_min: float) -> TradeoffRow:
    """Best-fit row whose PCR meets the floor.

    Ties break towards larger PCR, then smaller p.  Raises if no row
    qualifies, reporting the best achievable PCR.
    """
    if not curve.rows:
        raise ValueError("tradeoff curve is empty")
    feasible = [r for r in curve.rows
                if r.error is None and r.pcr >= pcr_min]
    if not feasible:
        achievable = max((r.pcr for r in curve.rows if r.error is None),
                         default=math.nan)
        raise ValueError(
            f"no grid point reaches PCR >= {pcr_min}; "
            f"maximum achievable PCR is {achievable:.4f}"
        )
    return max(feasible, key=lambda r: (r.index_value, r.pcr, -r.p))
