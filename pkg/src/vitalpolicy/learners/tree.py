"""Depth-limited regression tree with exact greedy variance-reduction splits.

Each split minimizes the summed within-child squared error over every
(feature, midpoint-threshold) candidate; ties break toward the lowest feature
index, then the lowest threshold.  Leaves predict their training-target mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TreeNode:
    value: float
    n: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class RegressionTree:
    root: TreeNode
    max_depth: int
    min_leaf: int
    feature_count: int

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if x[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return float(out[0]) if single else out

    def leaves_with_paths(self):
        """Yields (leaf, path) where path is a list of (feature, is_left, threshold)."""
        stack = [(self.root, [])]
        while stack:
            node, path = stack.pop()
            if node.is_leaf:
                yield node, path
            else:
                stack.append((node.right, path + [(node.feature, False, node.threshold)]))
                stack.append((node.left, path + [(node.feature, True, node.threshold)]))

    def internal_features(self) -> list[int]:
        """Feature index of every internal node (one entry per split)."""
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if not node.is_leaf:
                out.append(node.feature)
                stack.append(node.left)
                stack.append(node.right)
        return out


def _best_split(X, y, rows, min_leaf):
    """Exact greedy scan; returns (child_sse, feature, threshold) or None."""
    n = len(rows)
    best = None
    for f in range(X.shape[1]):
        x = X[rows, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        ys = y[rows][order]
        cs = np.cumsum(ys)
        cs2 = np.cumsum(ys * ys)
        total, total2 = cs[-1], cs2[-1]
        ks = np.arange(1, n)
        valid = (xs[:-1] < xs[1:]) & (ks >= min_leaf) & (n - ks >= min_leaf)
        if not valid.any():
            continue
        k = ks[valid]
        sse_left = cs2[k - 1] - cs[k - 1] ** 2 / k
        sse_right = (total2 - cs2[k - 1]) - (total - cs[k - 1]) ** 2 / (n - k)
        sse = sse_left + sse_right
        j = int(np.argmin(sse))  # first min: lowest threshold within the feature
        cand = (float(sse[j]), f, float((xs[k[j] - 1] + xs[k[j]]) / 2.0))
        if best is None or cand[0] < best[0]:
            best = cand
    return best


def _node_sse(y, rows) -> float:
    vals = y[rows]
    return float((vals * vals).sum() - vals.sum() ** 2 / len(rows))


def fit_regression_tree(X, y, max_depth: int = 3, min_leaf: int = 20) -> RegressionTree:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, d) with matching targets")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    if X.shape[0] < min_leaf:
        raise ValueError(f"need at least min_leaf={min_leaf} samples, got {X.shape[0]}")

    def build(rows, depth):
        node = TreeNode(value=float(np.mean(y[rows])), n=len(rows))
        if depth >= max_depth or len(rows) < 2 * min_leaf:
            return node
        parent_sse = _node_sse(y, rows)
        best = _best_split(X, y, rows, min_leaf)
        if best is None or parent_sse - best[0] <= 1e-12:
            return node
        _, f, thr = best
        go_left = X[rows, f] <= thr
        node.feature = f
        node.threshold = thr
        node.left = build(rows[go_left], depth + 1)
        node.right = build(rows[~go_left], depth + 1)
        return node

    root = build(np.arange(X.shape[0], dtype=np.intp), 0)
    return RegressionTree(root, max_depth, min_leaf, X.shape[1])
