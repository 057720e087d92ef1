"""Regression random forest built from first principles.

CART trees with variance-reduction splits, bootstrap bagging, per-node
random feature subsets, and mean-decrease-in-impurity feature importances.
Fitting is deterministic for a fixed seed: every tree draws from its own
stream derived from (seed, tree index), and nodes consume randomness in
depth-first, left-child-first order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    mtry: int | None = None  # None resolves to ceil(K / 3) at fit time
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1 or None, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError(f"mtry must be >= 1 or None, got {self.mtry}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")


@dataclass
class TreeNodes:
    """One fitted tree as flat arrays; feature = -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


@dataclass
class Forest:
    trees: list[TreeNodes] = field(repr=False)
    params: ForestParams
    importances: np.ndarray
    n_features: int


def _resolve_mtry(params: ForestParams, n_features: int) -> int:
    mtry = params.mtry if params.mtry is not None else math.ceil(n_features / 3)
    if mtry > n_features:
        raise ValueError(f"mtry={mtry} exceeds {n_features} features")
    return mtry


def _scan_features(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best split per candidate feature column of x.

    Returns (gain, threshold, valid) arrays, one entry per column. The gain is
    the decrease in the node's sum of squared errors; within a column, ties
    resolve to the lowest threshold. Columns without any admissible boundary
    (respecting min_leaf on both sides) are marked invalid.
    """
    n = x.shape[0]
    order = np.argsort(x, axis=0, kind="stable")
    xs = np.take_along_axis(x, order, axis=0)
    ys = y[order]
    prefix = np.cumsum(ys, axis=0)
    total = prefix[-1]
    # split position p sends the first p sorted rows left, p in [min_leaf, n - min_leaf]
    lo, hi = min_leaf, n - min_leaf
    if lo > hi:
        cols = x.shape[1]
        return np.zeros(cols), np.zeros(cols), np.zeros(cols, dtype=bool)
    left_sum = prefix[lo - 1 : hi]
    counts_left = np.arange(lo, hi + 1, dtype=np.float64)[:, None]
    counts_right = n - counts_left
    score = left_sum**2 / counts_left + (total - left_sum) ** 2 / counts_right
    boundary = xs[lo - 1 : hi] != xs[lo : hi + 1]
    score = np.where(boundary, score, -np.inf)
    best_pos = np.argmax(score, axis=0)  # first max, i.e. lowest threshold
    cols = np.arange(x.shape[1])
    best_score = score[best_pos, cols]
    valid = np.isfinite(best_score)
    gain = best_score - total**2 / n
    low = xs[lo - 1 + best_pos, cols]
    high = xs[lo + best_pos, cols]
    mid = low + (high - low) / 2.0
    # keep the predicate (value <= threshold) faithful to the scanned boundary
    # even when the midpoint rounds up to the higher value
    threshold = np.where(mid < high, mid, low)
    return gain, threshold, valid


def _choose_split(features, y, rows, rng, mtry, min_leaf):
    """Pick (feature, threshold) for a node, or None when nothing splits.

    Draws a feature permutation, evaluates the first mtry candidates, and
    keeps the best gain (ties: lowest feature index, then lowest threshold).
    If none of those admit a split, the remaining features are scanned in
    permutation order and the first that splits wins.
    """
    perm = rng.permutation(features.shape[1])
    node_y = y[rows]

    def best_among(cands):
        gains, thresholds, valid = _scan_features(features[np.ix_(rows, cands)], node_y, min_leaf)
        chosen = None
        for pos, feat in enumerate(cands):
            if not valid[pos]:
                continue
            entry = (gains[pos], feat, thresholds[pos])
            if chosen is None:
                chosen = entry
                continue
            gain, cf, ct = chosen
            if entry[0] > gain or (entry[0] == gain and (feat < cf or (feat == cf and entry[2] < ct))):
                chosen = entry
        return chosen

    best = best_among(perm[:mtry])
    if best is not None:
        return best
    for feat in perm[mtry:]:
        gains, thresholds, valid = _scan_features(features[rows][:, [feat]], node_y, min_leaf)
        if valid[0]:
            return gains[0], int(feat), thresholds[0]
    return None


def _grow_tree(features, y, rows, rng, mtry, min_leaf, max_depth, importance):
    feature_ids: list[int] = []
    thresholds: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    values: list[float] = []

    def new_node(node_rows) -> int:
        feature_ids.append(-1)
        thresholds.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        values.append(float(np.mean(y[node_rows])))
        return len(feature_ids) - 1

    root = new_node(rows)
    stack = [(root, rows, 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        n = node_rows.shape[0]
        if n < 2 or n < 2 * min_leaf:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        node_y = y[node_rows]
        if np.min(node_y) == np.max(node_y):
            continue
        split = _choose_split(features, y, node_rows, rng, mtry, min_leaf)
        if split is None:
            continue
        gain, feat, threshold = split
        importance[feat] += max(gain, 0.0)
        go_left = features[node_rows, feat] <= threshold
        left_rows = node_rows[go_left]
        right_rows = node_rows[~go_left]
        feature_ids[node] = int(feat)
        thresholds[node] = float(threshold)
        left_id = new_node(left_rows)
        right_id = new_node(right_rows)
        lefts[node] = left_id
        rights[node] = right_id
        # push right first so the left branch is grown (and consumes
        # randomness) first
        stack.append((right_id, right_rows, depth + 1))
        stack.append((left_id, left_rows, depth + 1))

    return TreeNodes(
        feature=np.array(feature_ids, dtype=np.int32),
        threshold=np.array(thresholds, dtype=np.float64),
        left=np.array(lefts, dtype=np.int32),
        right=np.array(rights, dtype=np.int32),
        value=np.array(values, dtype=np.float64),
    )


def fit_forest(features, targets, params: ForestParams) -> Forest:
    """Fit a bagged CART regression forest.

    Importances sum to 1: the per-feature impurity decrease is accumulated on
    each tree's training sample, averaged over trees, then normalized. When
    no split ever reduces impurity (constant targets), importances fall back
    to the uniform vector.
    """
    x = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    y = np.ascontiguousarray(np.asarray(targets, dtype=np.float64))
    if x.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ValueError(f"targets must be a vector of length {x.shape[0]}")
    n, k = x.shape
    if n < 1:
        raise ValueError("need at least one training row")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    mtry = _resolve_mtry(params, k)
    if params.min_samples_leaf > n:
        raise ValueError(f"min_samples_leaf={params.min_samples_leaf} exceeds {n} rows")

    trees: list[TreeNodes] = []
    importance_sum = np.zeros(k)
    all_rows = np.arange(n, dtype=np.intp)
    for t in range(params.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence([params.seed, t]))
        rows = rng.integers(0, n, size=n).astype(np.intp) if params.bootstrap else all_rows
        tree_importance = np.zeros(k)
        trees.append(_grow_tree(x, y, rows, rng, mtry, params.min_samples_leaf, params.max_depth, tree_importance))
        importance_sum += tree_importance

    mean_importance = importance_sum / params.n_trees
    total = float(mean_importance.sum())
    importances = mean_importance / total if total > 0.0 else np.full(k, 1.0 / k)
    return Forest(trees=trees, params=params, importances=importances, n_features=k)


def _tree_predict(tree: TreeNodes, x: np.ndarray) -> np.ndarray:
    node = np.zeros(x.shape[0], dtype=np.int64)
    while True:
        feat = tree.feature[node]
        active = feat >= 0
        if not active.any():
            break
        idx = np.flatnonzero(active)
        cur = node[idx]
        go_left = x[idx, feat[idx]] <= tree.threshold[cur]
        node[idx] = np.where(go_left, tree.left[cur], tree.right[cur])
    return tree.value[node]


def predict_forest_batch(forest: Forest, features) -> np.ndarray:
    """Row-wise predictions: the mean of all tree leaf values."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != forest.n_features:
        raise ValueError(f"expected a 2-D matrix with {forest.n_features} columns, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    out = np.zeros(x.shape[0])
    for tree in forest.trees:
        out += _tree_predict(tree, x)
    return out / len(forest.trees)


def predict_forest(forest: Forest, x) -> float:
    """Prediction for a single length-K measurement vector."""
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != forest.n_features:
        raise ValueError(f"expected a vector of {forest.n_features} features, got shape {vec.shape}")
    return float(predict_forest_batch(forest, vec[None, :])[0])


def feature_importance(forest: Forest) -> np.ndarray:
    """Normalized mean-decrease-in-impurity importances (sum to 1)."""
    return forest.importances.copy()
