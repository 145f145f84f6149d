"""Contiguity-constrained divisive clustering of regions.

Spanning-tree regionalization: build the minimum spanning tree of the
contiguity graph under Euclidean feature distances, then repeatedly delete
the tree edge whose removal most reduces the total within-cluster sum of
squared deviations.  Every cluster is a subtree, hence connected in the
contiguity graph by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .weights import ContiguityMatrix


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class Split:
    parent: int  # label of the cluster being divided
    children: tuple[int, int]  # (label kept by one side, new label)
    reduction: float  # decrease in total within-cluster SSD
    cut_edge: tuple[str, str]  # region ids of the removed tree edge
    new_members: tuple[int, ...]  # region indices moved to the new label


@dataclass(frozen=True)
class Dendrogram:
    region_ids: tuple[str, ...]
    mst_edges: tuple[tuple[int, int], ...]
    splits: tuple[Split, ...]

    @property
    def k_max(self) -> int:
        return len(self.splits) + 1

    def to_json(self) -> str:
        doc = {
            "region_ids": list(self.region_ids),
            "mst_edges": [list(e) for e in self.mst_edges],
            "splits": [
                {
                    "parent": s.parent,
                    "children": list(s.children),
                    "reduction": s.reduction,
                    "cut_edge": list(s.cut_edge),
                    "new_members": list(s.new_members),
                }
                for s in self.splits
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Dendrogram":
        doc = json.loads(text)
        return cls(
            region_ids=tuple(doc["region_ids"]),
            mst_edges=tuple((int(a), int(b)) for a, b in doc["mst_edges"]),
            splits=tuple(
                Split(
                    parent=int(s["parent"]),
                    children=(int(s["children"][0]), int(s["children"][1])),
                    reduction=float(s["reduction"]),
                    cut_edge=(s["cut_edge"][0], s["cut_edge"][1]),
                    new_members=tuple(int(m) for m in s["new_members"]),
                )
                for s in doc["splits"]
            ),
        )


@dataclass(frozen=True)
class ClusterAssignment:
    """region_id -> cluster label in 1..k, every cluster non-empty."""

    labels: dict[str, int]
    k: int

    def __post_init__(self):
        seen = set(self.labels.values())
        if seen != set(range(1, self.k + 1)):
            raise ClusteringError(
                f"labels must cover 1..{self.k}, got {sorted(seen)}"
            )

    def members(self, label: int) -> list[str]:
        return sorted(r for r, l in self.labels.items() if l == label)

    def label_array(self, region_ids) -> np.ndarray:
        try:
            return np.array([self.labels[r] for r in region_ids], dtype=int)
        except KeyError as exc:
            raise ClusteringError(f"region {exc.args[0]!r} has no cluster label")


def standardize_columns(X: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance columns; constant columns become zeros."""
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd


def _mst_edges(W: ContiguityMatrix, X: np.ndarray) -> list[tuple[int, int]]:
    """Kruskal MST under Euclidean feature distance, deterministic ties."""
    costs = np.linalg.norm(X[W.edges[:, 0]] - X[W.edges[:, 1]], axis=1)
    order = sorted(range(len(costs)), key=lambda e: (costs[e], int(W.edges[e, 0]), int(W.edges[e, 1])))
    parent = list(range(W.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree = []
    for e in order:
        i, j = int(W.edges[e, 0]), int(W.edges[e, 1])
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree.append((i, j))
            if len(tree) == W.n - 1:
                break
    if len(tree) != W.n - 1:
        raise ClusteringError("contiguity graph is disconnected")
    return tree


def _best_cut(nodes, adj, X, rid):
    """Best single-edge cut of one subtree.

    Returns (reduction, cut_edge_idx_pair, cut_edge_id_pair, detached
    members).  The detached component is the subtree hanging below the cut
    edge in a DFS rooting; reduction = SSD(parent) - SSD(A) - SSD(B), which
    only depends on component sums.  Objective ties go to the smallest
    region-id pair.
    """
    root = nodes[0]
    order = [root]
    parent = {root: None}
    stack = [root]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in parent:
                parent[v] = u
                order.append(v)
                stack.append(v)

    sums = {u: X[u].copy() for u in order}
    counts = {u: 1 for u in order}
    for u in reversed(order):
        p = parent[u]
        if p is not None:
            sums[p] += sums[u]
            counts[p] += counts[u]
    total_sum = sums[root]
    total_n = counts[root]

    best = None
    for v in order[1:]:
        na, sa = counts[v], sums[v]
        nb, sb = total_n - na, total_sum - sa
        reduction = (
            float(sa @ sa) / na + float(sb @ sb) / nb - float(total_sum @ total_sum) / total_n
        )
        u = parent[v]
        pair = (min(u, v), max(u, v))
        id_pair = tuple(sorted((rid[u], rid[v])))
        cand = (reduction, pair, id_pair, v)
        if best is None or reduction > best[0] or (reduction == best[0] and id_pair < best[2]):
            best = cand
    if best is None:
        return None
    reduction, pair, id_pair, v = best
    # Collect the detached component: the subtree hanging below v once the
    # edge to parent[v] is blocked.
    members = []
    stack = [v]
    seen = {v}
    pv = parent[v]
    while stack:
        node = stack.pop()
        members.append(node)
        for w in adj[node]:
            if w in seen or (node == v and w == pv):
                continue
            seen.add(w)
            stack.append(w)
    return reduction, pair, id_pair, sorted(members)


def constrained_divisive_cluster(
    region_features: np.ndarray, W: ContiguityMatrix, k_max: int
) -> Dendrogram:
    """Divide the region set into up to ``k_max`` connected clusters.

    ``region_features`` is the (regions x attributes) matrix, standardized
    per column, aligned with ``W.region_ids``.  Each recorded split removes
    one spanning-tree edge; ties on the objective go to the smallest cut
    edge (by region-id pair).
    """
    X = np.asarray(region_features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != W.n:
        raise ClusteringError(f"feature matrix has {X.shape[0]} rows for {W.n} regions")
    if not np.isfinite(X).all():
        raise ClusteringError("non-finite feature value")
    if not 1 <= k_max <= W.n:
        raise ClusteringError(f"k_max must be in 1..{W.n}, got {k_max}")
    if not W.is_connected():
        raise ClusteringError("contiguity graph is disconnected")

    tree = _mst_edges(W, X)
    adj: dict[int, list[int]] = {u: [] for u in range(W.n)}
    for i, j in tree:
        adj[i].append(j)
        adj[j].append(i)
    for u in adj:
        adj[u] = sorted(adj[u])

    rid = W.region_ids
    clusters: dict[int, list[int]] = {1: list(range(W.n))}
    # Cache the best cut per live cluster; only children need recomputing.
    best_cuts = {1: _best_cut(clusters[1], adj, X, rid)} if k_max > 1 else {}
    splits: list[Split] = []

    while len(clusters) < k_max:
        candidates = [
            (cut[0], cut[2], label)
            for label, cut in best_cuts.items()
            if cut is not None
        ]
        if not candidates:
            raise ClusteringError("no splittable cluster left")
        candidates.sort(key=lambda t: (-t[0], t[1]))
        reduction, _, label = candidates[0]
        cut = best_cuts.pop(label)
        _, (u, v), _, detached = cut

        members = clusters[label]
        remaining = sorted(set(members) - set(detached))
        # The side holding the smallest region index keeps the parent label.
        new_label = len(clusters) + 1
        if min(detached) < min(remaining):
            detached, remaining = remaining, detached
        # Disconnect the cut edge in the tree adjacency.
        adj[u] = [w for w in adj[u] if w != v]
        adj[v] = [w for w in adj[v] if w != u]

        clusters[label] = remaining
        clusters[new_label] = detached
        splits.append(
            Split(
                parent=label,
                children=(label, new_label),
                reduction=reduction,
                cut_edge=(rid[min(u, v)], rid[max(u, v)]),
                new_members=tuple(detached),
            )
        )
        for lbl in (label, new_label):
            group = clusters[lbl]
            best_cuts[lbl] = _best_cut(group, adj, X, rid) if len(group) > 1 else None

    return Dendrogram(tuple(rid), tuple(tree), tuple(splits))


def cut_dendrogram(d: Dendrogram, k: int) -> ClusterAssignment:
    """Replay the first k-1 splits and label clusters in split order."""
    if not 1 <= k <= d.k_max:
        raise ClusteringError(f"k must be in 1..{d.k_max}, got {k}")
    labels = np.ones(len(d.region_ids), dtype=int)
    for split in d.splits[: k - 1]:
        labels[list(split.new_members)] = split.children[1]
    return ClusterAssignment(
        labels={rid: int(l) for rid, l in zip(d.region_ids, labels)}, k=k
    )


def assert_connected(assignment: ClusterAssignment, W: ContiguityMatrix) -> bool:
    """True iff every cluster induces a connected subgraph of W."""
    labels = assignment.label_array(W.region_ids)
    nbrs = W.neighbor_lists()
    for lbl in range(1, assignment.k + 1):
        members = np.flatnonzero(labels == lbl)
        if members.size == 0:
            return False
        member_set = set(members.tolist())
        seen = {int(members[0])}
        stack = [int(members[0])]
        while stack:
            u = stack.pop()
            for v in nbrs[u]:
                if v in member_set and v not in seen:
                    seen.add(v)
                    stack.append(v)
        if len(seen) != members.size:
            return False
    return True
