"""Hierarchical agglomeration with Lance-Williams updates, maximum-size
constrained clustering (kirigami-1 and kirigami-2), tree cutting and a PAM
baseline.

Merge records use the hclust-style encoding: negative entries are leaves
(-(i+1) for leaf i), positive entries reference earlier merges (1-based).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .indices import compute_index

LINKAGE_METHODS = ("average", "ward", "complete", "single")


@dataclass
class Partition:
    """Cluster labels per id; labels are contiguous integers from 1."""

    ids: list[str]
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.ids) != len(self.labels):
            raise ValueError("ids and labels lengths differ")
        uniq = np.unique(self.labels)
        if not np.array_equal(uniq, np.arange(1, len(uniq) + 1)):
            raise ValueError("labels must be contiguous integers from 1")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def k(self) -> int:
        return int(self.labels.max())

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels)[1:]


def relabel_by_first_member(raw_labels: np.ndarray) -> np.ndarray:
    """Relabel arbitrary group ids to 1..k in order of first appearance."""
    raw_labels = np.asarray(raw_labels)
    mapping: dict = {}
    out = np.empty(len(raw_labels), dtype=int)
    nxt = 1
    for i, g in enumerate(raw_labels):
        g = g.item() if hasattr(g, "item") else g
        if g not in mapping:
            mapping[g] = nxt
            nxt += 1
        out[i] = mapping[g]
    return out


@dataclass
class MergeTree:
    """Recorded agglomeration history over the input ids (possibly a forest)."""

    ids: list[str]
    merges: list[tuple[int, int, float, int]] = field(default_factory=list)

    @property
    def n_leaves(self) -> int:
        return len(self.ids)

    @property
    def n_roots(self) -> int:
        return self.n_leaves - len(self.merges)


def _lw_update(linkage, w_ik, w_jk, w_ij, ni, nj, nk):
    """Lance-Williams dissimilarity between the (i+j) merger and cluster k."""
    if linkage == "average":
        return (ni * w_ik + nj * w_jk) / (ni + nj)
    if linkage == "complete":
        return np.maximum(w_ik, w_jk)
    if linkage == "single":
        return np.minimum(w_ik, w_jk)
    if linkage == "ward":
        tot = ni + nj + nk
        return ((ni + nk) * w_ik + (nj + nk) * w_jk - nk * w_ij) / tot
    raise ValueError(f"unknown linkage {linkage!r}; expected {LINKAGE_METHODS}")


def initial_working_matrix(d: np.ndarray, linkage: str) -> np.ndarray:
    """Working dissimilarities between singletons (squared for ward)."""
    if linkage not in LINKAGE_METHODS:
        raise ValueError(f"unknown linkage {linkage!r}; expected {LINKAGE_METHODS}")
    return d.astype(float) ** 2 if linkage == "ward" else d.astype(float).copy()


def group_dissimilarity(d, members_a, members_b, linkage) -> float:
    """Inter-group working dissimilarity computed directly from the matrix.

    For average/complete/single this is the mean/max/min pairwise value; for
    ward it is the Lance-Williams value on squared dissimilarities,
    2*|A||B|/(|A|+|B|) times the squared centroid gap implied by the
    pairwise-squared identity.
    """
    block = np.asarray(d, dtype=float)[np.ix_(members_a, members_b)]
    if linkage == "average":
        return float(block.mean())
    if linkage == "complete":
        return float(block.max())
    if linkage == "single":
        return float(block.min())
    if linkage == "ward":
        na, nb = len(members_a), len(members_b)
        d2 = np.asarray(d, dtype=float) ** 2
        cross = d2[np.ix_(members_a, members_b)].mean()
        win_a = d2[np.ix_(members_a, members_a)].sum() / (na * na)
        win_b = d2[np.ix_(members_b, members_b)].sum() / (nb * nb)
        gap = cross - 0.5 * win_a - 0.5 * win_b
        return float(2.0 * na * nb / (na + nb) * gap)
    raise ValueError(f"unknown linkage {linkage!r}")


def _merge_sequence(work, sizes, linkage, size_cap=None):
    """Greedy feasible-minimum merging over group slots.

    ``work`` is modified in place; merged groups occupy the smaller slot.
    Returns merge steps (slot_i, slot_j, height, new_size) with
    slot_i < slot_j.  Stops at one group or when no merge satisfies the cap.
    Ties break towards the lexicographically smallest slot pair.
    """
    m = work.shape[0]
    active = np.ones(m, dtype=bool)
    sizes = np.asarray(sizes, dtype=int).copy()
    steps = []
    mask_inf = np.inf
    while active.sum() > 1:
        cand = np.where(active[:, None] & active[None, :], work, mask_inf)
        cand[np.tril_indices(m)] = mask_inf
        if size_cap is not None:
            merged = sizes[:, None] + sizes[None, :]
            cand[merged > size_cap] = mask_inf
        flat = int(np.argmin(cand))
        i, j = divmod(flat, m)
        height = cand[i, j]
        if not math.isfinite(height):
            break
        ni, nj, nk = sizes[i], sizes[j], sizes
        others = active.copy()
        others[i] = others[j] = False
        work[i, others] = _lw_update(
            linkage, work[i, others], work[j, others], work[i, j], ni, nj, nk[others]
        )
        work[others, i] = work[i, others]
        active[j] = False
        work[j, :] = mask_inf
        work[:, j] = mask_inf
        work[i, i] = mask_inf
        sizes[i] = ni + nj
        steps.append((int(i), int(j), float(height), int(sizes[i])))
    return steps


def agglomerate(d, linkage: str, size_cap: int | None = None,
                ids: list[str] | None = None) -> MergeTree:
    """Agglomerative clustering by repeated minimum-dissimilarity merging.

    With ``size_cap`` set, any merge producing a cluster above the cap is
    blocked, possibly leaving a forest.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if n < 2:
        raise ValueError("at least 2 observations required")
    if size_cap is not None and size_cap < 1:
        raise ValueError("size_cap must be at least 1")
    if ids is None:
        ids = [str(i) for i in range(n)]
    work = initial_working_matrix(d, linkage)
    np.fill_diagonal(work, np.inf)
    steps = _merge_sequence(work, np.ones(n, dtype=int), linkage, size_cap)
    # slots coincide with leaves initially; track the node currently at a slot
    node_of_slot = [-(s + 1) for s in range(n)]
    merges = []
    for step_no, (i, j, height, size) in enumerate(steps, start=1):
        merges.append((node_of_slot[i], node_of_slot[j], height, size))
        node_of_slot[i] = step_no
    return MergeTree(ids=list(ids), merges=merges)


def _node_children(tree: MergeTree):
    """children[node_id] for internal nodes; leaves are 0..n-1, merge m is n+m."""
    n = tree.n_leaves

    def decode(ref):
        return -ref - 1 if ref < 0 else n + ref - 1

    return {n + m: (decode(l), decode(r))
            for m, (l, r, _, _) in enumerate(tree.merges)}


def _node_members(tree: MergeTree):
    """Member leaf lists for every node id."""
    n = tree.n_leaves
    members = {leaf: [leaf] for leaf in range(n)}
    children = _node_children(tree)
    for m in range(len(tree.merges)):
        node = n + m
        l, r = children[node]
        members[node] = members[l] + members[r]
    return members


def _active_nodes_at(tree: MergeTree, k: int) -> list[int]:
    """Node ids forming the partition with k clusters (undo last merges)."""
    n = tree.n_leaves
    if k < tree.n_roots or k > n:
        raise ValueError(
            f"cannot cut to {k} clusters: tree has {tree.n_roots} root(s) "
            f"and {n} leaves"
        )
    n_apply = n - k
    children = _node_children(tree)
    active = set(range(n))
    for m in range(n_apply):
        node = n + m
        l, r = children[node]
        active.discard(l)
        active.discard(r)
        active.add(node)
    return sorted(active)


def _partition_from_nodes(tree: MergeTree, nodes) -> Partition:
    members = _node_members(tree)
    raw = np.empty(tree.n_leaves, dtype=int)
    for node in nodes:
        raw[members[node]] = node
    return Partition(ids=list(tree.ids), labels=relabel_by_first_member(raw))


def cut_tree(tree: MergeTree, k: int) -> Partition:
    """Partition with exactly k clusters obtained by undoing the last merges."""
    return _partition_from_nodes(tree, _active_nodes_at(tree, k))


def _profile_cuts(d, groups, merge_steps, index):
    """Index value at every cut along a merge sequence over groups.

    Returns a list of (k, value) where k is the cluster count of the cut;
    cuts where the index is undefined are skipped.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    d2 = d**2
    members = {gi: list(g) for gi, g in enumerate(groups)}
    labels = np.empty(n, dtype=int)
    s_within2 = {}
    for gi, g in members.items():
        labels[g] = gi
        s_within2[gi] = d2[np.ix_(g, g)].sum() / 2.0 if len(g) > 1 else 0.0
    t = d2.sum() / 2.0 / n
    sx = d.sum() / 2.0
    sxx = d2.sum() / 2.0
    pairs = n * (n - 1) // 2
    w = sum(s / len(members[gi]) for gi, s in s_within2.items())
    within_d = sum(
        d[np.ix_(g, g)].sum() / 2.0 for g in members.values() if len(g) > 1
    )
    n_within = sum(len(g) * (len(g) - 1) // 2 for g in members.values())
    k = len(members)

    def current_value():
        if k < 2 or k > n:
            return None
        if index == "ch":
            if k > n - 1:
                return None
            b = t - w
            if w == 0.0:
                return math.inf if b > 0 else None
            return (b / (k - 1)) / (w / (n - k))
        if index == "pg":
            sy = pairs - n_within
            if sy == 0 or n_within == 0:
                return None
            sxy = sx - within_d
            num = pairs * sxy - sx * sy
            den = (pairs * sxx - sx**2) * (pairs * sy - sy**2)
            if den <= 0:
                return None
            return num / math.sqrt(den)
        if index == "asw":
            from .indices import silhouette

            return silhouette(d, labels).asw
        raise ValueError(f"unknown index {index!r}")

    out = []
    val = current_value()
    if val is not None:
        out.append((k, val))
    for slot_i, slot_j, _, _ in merge_steps:
        gi, gj = members[slot_i], members[slot_j]
        cross2 = d2[np.ix_(gi, gj)].sum()
        cross1 = d[np.ix_(gi, gj)].sum()
        ni, nj = len(gi), len(gj)
        s_new = s_within2[slot_i] + s_within2[slot_j] + cross2
        w += s_new / (ni + nj) - s_within2[slot_i] / ni - s_within2[slot_j] / nj
        s_within2[slot_i] = s_new
        within_d += cross1
        n_within += ni * nj
        members[slot_i] = gi + gj
        labels[members[slot_i]] = slot_i
        del members[slot_j]
        k -= 1
        val = current_value()
        if val is not None:
            out.append((k, val))
    return out


def _best_k(profile):
    """Argmax cut: maximal index value, ties towards fewer clusters."""
    if not profile:
        raise ValueError("no cut admits the requested fit index")
    best_k, best_v = profile[0]
    for k, v in profile[1:]:
        if v > best_v or (v == best_v and k < best_k):
            best_k, best_v = k, v
    return best_k, best_v


def cut_index_profile(d, tree: MergeTree, index: str):
    """(k, index value) along every cut of an observation-level tree."""
    n = tree.n_leaves
    # replay the tree as slot merges over singleton groups
    node_slot = {}
    steps = []
    for m, (l, r, h, size) in enumerate(tree.merges):
        sl = -l - 1 if l < 0 else node_slot[l]
        sr = -r - 1 if r < 0 else node_slot[r]
        i, j = min(sl, sr), max(sl, sr)
        steps.append((i, j, h, size))
        node_slot[m + 1] = i
    groups = [[i] for i in range(n)]
    return _profile_cuts(d, groups, steps, index)


def kirigami1(d, linkage: str, index: str, cap: int,
              ids: list[str] | None = None) -> Partition:
    """Top-down constrained clustering: pick the index-optimal cut of the
    unconstrained tree, then bisect every oversize cluster at its subtree
    root until all clusters satisfy the cap."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    tree = agglomerate(d, linkage, ids=ids)
    profile = cut_index_profile(d, tree, index)
    best_k, _ = _best_k(profile)
    nodes = _active_nodes_at(tree, best_k)
    children = _node_children(tree)
    members = _node_members(tree)
    work = list(nodes)
    result = []
    while work:
        node = work.pop()
        if len(members[node]) <= cap:
            result.append(node)
        else:
            l, r = children[node]
            work.extend((l, r))
    return _partition_from_nodes(tree, sorted(result))


def kirigami2(d, linkage: str, index: str, cap: int,
              ids: list[str] | None = None):
    """Bottom-up constrained clustering: agglomerate under the cap, then
    return the index-optimal cut of the capped tree together with the tree."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    d = np.asarray(d, dtype=float)
    tree = agglomerate(d, linkage, size_cap=cap, ids=ids)
    profile = cut_index_profile(d, tree, index)
    best_k, _ = _best_k(profile)
    return cut_tree(tree, best_k), tree


def pam(d, k: int, seed: int = 0, ids: list[str] | None = None) -> Partition:
    """Partitioning Around Medoids (BUILD then SWAP) on a dissimilarity
    matrix.  The seed only permutes candidate order for tie-breaking."""
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}")
    if ids is None:
        ids = [str(i) for i in range(n)]
    rng = np.random.default_rng(seed)
    # BUILD
    medoids = [int(np.argmin(d.sum(axis=0)))]
    nearest = d[:, medoids[0]].copy()
    while len(medoids) < k:
        order = rng.permutation(n)
        best_gain, best_c = -np.inf, None
        for c in order:
            if c in medoids:
                continue
            gain = np.maximum(nearest - d[:, c], 0.0).sum()
            if gain > best_gain:
                best_gain, best_c = gain, int(c)
        medoids.append(best_c)
        nearest = np.minimum(nearest, d[:, best_c])
    # SWAP
    improved = True
    while improved:
        improved = False
        med = np.array(medoids)
        assign_cost = d[:, med].min(axis=1).sum()
        best_cost, best_swap = assign_cost, None
        order = rng.permutation(n)
        for h in order:
            if h in medoids:
                continue
            for mi in range(k):
                trial = med.copy()
                trial[mi] = h
                cost = d[:, trial].min(axis=1).sum()
                if cost < best_cost - 1e-12:
                    best_cost, best_swap = cost, (mi, int(h))
        if best_swap is not None:
            medoids[best_swap[0]] = best_swap[1]
            improved = True
    med = np.array(sorted(medoids))
    raw = med[np.argmin(d[:, med], axis=1)]
    return Partition(ids=list(ids), labels=relabel_by_first_member(raw))
