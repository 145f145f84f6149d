"""Histogram-based regression trees, gradient boosting and random forest.

One level-wise tree grower serves both ensembles.  Features are quantized
into at most 256 quantile bins once per fit; per level, gradient/hessian
histograms for every active node are accumulated in a single pass and the
second-order gain

    GL^2/HL + GR^2/HR - G^2/H

is evaluated for every (node, feature, bin) candidate at once.  With unit
hessians this is exactly the variance-reduction (equivalently Gini, for 0/1
targets) criterion used by the forest; with logistic-loss hessians it is
the Newton gain used by boosting.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..rng import generator
from .logistic import log_loss, sigmoid

MAX_BINS = 256
_EPS = 1e-12


def quantile_bin_edges(X: np.ndarray, max_bins: int = MAX_BINS) -> list[np.ndarray]:
    qs = np.linspace(0.0, 1.0, max_bins + 1)[1:-1]
    return [np.unique(np.quantile(X[:, j], qs)) for j in range(X.shape[1])]


def bin_columns(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    """bin = #{edges < x}; row goes left of edge b iff bin <= b iff x <= e[b]."""
    B = np.empty(X.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        B[:, j] = np.searchsorted(e, X[:, j], side="left")
    return B


def grow_tree(
    B: np.ndarray,
    edges: list[np.ndarray],
    g: np.ndarray,
    h: np.ndarray,
    max_depth: int,
    min_leaf: int,
    n_feats: int,
    rng: np.random.Generator | None,
    newton_leaf: bool,
) -> tuple[dict, np.ndarray]:
    """Grow one tree; returns (tree arrays, per-train-row leaf values)."""
    n, p = B.shape
    n_edges = np.array([len(e) for e in edges])
    n_bins = int(n_edges.max()) + 1 if p else 1

    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [0.0]

    def leaf_value(G, H, C):
        if newton_leaf:
            return float(-G / (H + _EPS))
        return float(G / C) if C else 0.0

    rows = np.arange(n)
    node_slot = np.zeros(n, dtype=np.int64)
    level_nodes = [0]  # node id per slot
    train_values = np.zeros(n)

    for depth in range(max_depth + 1):
        if not level_nodes:
            break
        m = len(level_nodes)
        if n_feats < p:
            feats = np.argsort(rng.random((m, p)), axis=1, kind="stable")[:, :n_feats]
        else:
            feats = np.tile(np.arange(p), (m, 1))
        q = feats.shape[1]

        sub = B[rows[:, None], feats[node_slot]]
        flat = ((node_slot[:, None] * q + np.arange(q)[None, :]) * n_bins + sub).ravel()
        size = m * q * n_bins
        rep_g = np.repeat(g[rows], q)
        rep_h = np.repeat(h[rows], q)
        hist_g = np.bincount(flat, weights=rep_g, minlength=size).reshape(m, q, n_bins)
        hist_h = np.bincount(flat, weights=rep_h, minlength=size).reshape(m, q, n_bins)
        hist_c = np.bincount(flat, minlength=size).reshape(m, q, n_bins)

        GL = np.cumsum(hist_g, axis=2)
        HL = np.cumsum(hist_h, axis=2)
        CL = np.cumsum(hist_c, axis=2)
        G = GL[:, 0, -1]
        H = HL[:, 0, -1]
        C = CL[:, 0, -1]
        GR = G[:, None, None] - GL
        HR = H[:, None, None] - HL
        CR = C[:, None, None] - CL

        valid = (CL >= min_leaf) & (CR >= min_leaf)
        valid &= np.arange(n_bins)[None, None, :] < n_edges[feats][:, :, None]
        gain = (
            GL**2 / (HL + _EPS)
            + GR**2 / (HR + _EPS)
            - (G**2 / (H + _EPS))[:, None, None]
        )
        gain = np.where(valid, gain, -np.inf)
        flat_gain = gain.reshape(m, q * n_bins)
        best = np.argmax(flat_gain, axis=1)
        best_gain = flat_gain[np.arange(m), best]

        # Decide each node: split or become a leaf.
        split_feat = np.full(m, -1, dtype=np.int64)
        split_bin = np.zeros(m, dtype=np.int64)
        next_nodes: list[int] = []
        slot_remap = np.full(m, -1, dtype=np.int64)
        for s, node in enumerate(level_nodes):
            can_split = depth < max_depth and best_gain[s] > _EPS
            if not can_split:
                feature[node] = -1
                value[node] = leaf_value(G[s], H[s], C[s])
                continue
            fq, b = divmod(int(best[s]), n_bins)
            f_global = int(feats[s, fq])
            feature[node] = f_global
            threshold[node] = float(edges[f_global][b])
            split_feat[s] = f_global
            split_bin[s] = b
            left[node] = len(feature)
            right[node] = len(feature) + 1
            slot_remap[s] = len(next_nodes)
            next_nodes.extend([left[node], right[node]])
            for _ in range(2):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)

        is_split = split_feat[node_slot] >= 0
        leaf_rows = rows[~is_split]
        if leaf_rows.size:
            ids = np.array(level_nodes)[node_slot[~is_split]]
            train_values[leaf_rows] = np.array(value)[ids]
        rows = rows[is_split]
        slots = node_slot[is_split]
        go_left = B[rows, split_feat[slots]] <= split_bin[slots]
        node_slot = slot_remap[slots] + np.where(go_left, 0, 1)
        level_nodes = next_nodes

    tree = {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "value": np.array(value),
    }
    return tree, train_values


def predict_tree(tree: dict, X: np.ndarray) -> np.ndarray:
    feature = np.asarray(tree["feature"], dtype=np.int64)
    threshold = np.asarray(tree["threshold"], dtype=float)
    left = np.asarray(tree["left"], dtype=np.int64)
    right = np.asarray(tree["right"], dtype=np.int64)
    value = np.asarray(tree["value"], dtype=float)

    idx = np.zeros(len(X), dtype=np.int64)
    active = np.arange(len(X))
    while active.size:
        nodes = idx[active]
        at_leaf = feature[nodes] < 0
        active = active[~at_leaf]
        if not active.size:
            break
        nodes = idx[active]
        f = feature[nodes]
        go_left = X[active, f] <= threshold[nodes]
        idx[active] = np.where(go_left, left[nodes], right[nodes])
    return value[idx]


# ---------------------------------------------------------------------------
# ensembles


def fit_gradient_boosting(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int,
    max_depth: int,
    learning_rate: float,
    min_samples_leaf: int,
) -> dict:
    """Boosted depth-limited trees on the logistic loss (Newton leaves)."""
    edges = quantile_bin_edges(X)
    B = bin_columns(X, edges)
    base = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    f0 = math.log(base / (1 - base))
    F = np.full(len(y), f0)
    trees = []
    history = [log_loss(y, sigmoid(F))]
    for _ in range(n_trees):
        prob = sigmoid(F)
        g = prob - y
        h = prob * (1.0 - prob)
        tree, train_values = grow_tree(
            B, edges, g, h, max_depth, min_samples_leaf, X.shape[1], None, True
        )
        F = F + learning_rate * train_values
        trees.append(tree)
        history.append(log_loss(y, sigmoid(F)))
    return {
        "f0": f0,
        "learning_rate": learning_rate,
        "trees": trees,
        "loss_history": history,
    }


def predict_gradient_boosting(params: dict, X: np.ndarray) -> np.ndarray:
    F = np.full(len(X), float(params["f0"]))
    for tree in params["trees"]:
        F = F + float(params["learning_rate"]) * predict_tree(tree, X)
    return sigmoid(F)


def fit_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int,
    min_samples_leaf: int,
    max_depth: int,
    seed: int,
    n_jobs: int = 1,
) -> dict:
    """Bagged trees with ceil(sqrt(p)) candidate features per split.

    Tree t draws its bootstrap and feature subsets from the (seed, t)
    stream, so a thread pool produces exactly the serial forest.
    """
    edges = quantile_bin_edges(X)
    B = bin_columns(X, edges)
    n, p = X.shape
    q = int(math.ceil(math.sqrt(p)))
    yf = y.astype(float)
    ones = np.ones(n)

    def one_tree(t: int) -> dict:
        rng = generator(seed, "tree", t)
        boot = rng.integers(0, n, size=n)
        tree, _ = grow_tree(
            B[boot], edges, yf[boot], ones, max_depth, min_samples_leaf, q, rng, False
        )
        return tree

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(one_tree, range(n_trees)))
    else:
        trees = [one_tree(t) for t in range(n_trees)]
    return {"trees": trees}


def predict_random_forest(params: dict, X: np.ndarray) -> np.ndarray:
    if len(X) == 0:
        return np.empty(0)
    votes = np.stack([predict_tree(tree, X) for tree in params["trees"]])
    return votes.mean(axis=0)
