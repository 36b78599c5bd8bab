"""Gradient-boosted shallow trees on logistic loss, built from scratch.

Each round fits a depth-limited regression tree to the loss's gradient and
hessian statistics over quantile-binned features (second-order boosting).
Split search is histogram-based; siblings reuse the parent's histogram by
subtraction and leaf statistics come from the parent's split scan, so a
200-tree fit stays fast on a single core.  Everything is deterministic given
the spec and data.
"""
from __future__ import annotations

import numpy as np

from . import ClassifierBackendSpec, TrainedClassifier
from .logistic import sigmoid

def _bin_features(X: np.ndarray, n_bins: int):
    """Per-feature quantile edges and integer codes; code <= c  iff  x <= edges[c]."""
    n, d = X.shape
    edges_per_feature = []
    codes = np.empty((n, d), dtype=np.int64)
    for f in range(d):
        col = X[:, f]
        uniq = np.unique(col)
        if len(uniq) <= 1:
            edges = np.empty(0, dtype=np.float64)
        elif len(uniq) <= n_bins:
            edges = (uniq[:-1] + uniq[1:]) / 2.0
        else:
            qs = np.quantile(col, np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
            edges = np.unique(qs)
        edges_per_feature.append(edges)
        codes[:, f] = np.searchsorted(edges, col, side="left")
    return edges_per_feature, codes


class _TreeFitter:
    """Shared binned-feature state reused by every boosting round."""

    def __init__(self, X, n_bins, max_depth, l2, min_child_weight, lr):
        self.edges, self.codes = _bin_features(X, n_bins)
        self.n, self.d = X.shape
        n_edges = np.array([len(e) for e in self.edges], dtype=np.int64)
        self.bins = int(n_edges.max(initial=0)) + 1
        self.flat_codes = self.codes + np.arange(self.d, dtype=np.int64) * self.bins
        self.max_depth = max_depth
        self.l2 = l2
        self.min_child_weight = min_child_weight
        self.lr = lr
        if self.bins > 1:
            self.cand_mask = np.arange(self.bins - 1)[None, :] < n_edges[:, None]
        else:
            self.cand_mask = None

    def _hists(self, rows, g, h):
        size = self.d * self.bins
        if rows is None:  # root: every row, no gather needed
            fc = self.flat_codes.ravel()
            rep_g = np.repeat(g, self.d)
            rep_h = np.repeat(h, self.d)
        else:
            fc = self.flat_codes[rows].ravel()
            rep_g = np.repeat(g[rows], self.d)
            rep_h = np.repeat(h[rows], self.d)
        hg = np.bincount(fc, weights=rep_g, minlength=size).reshape(self.d, self.bins)
        hh = np.bincount(fc, weights=rep_h, minlength=size).reshape(self.d, self.bins)
        return hg, hh

    def _best_split(self, hg, hh, G, H):
        """Returns (f, c, GL, HL) for the best candidate, or None for a leaf."""
        if self.cand_mask is None:
            return None
        GLs = np.cumsum(hg, axis=1)[:, :-1]
        HLs = np.cumsum(hh, axis=1)[:, :-1]
        GRs = G - GLs
        HRs = H - HLs
        valid = self.cand_mask & (HLs >= self.min_child_weight) & (HRs >= self.min_child_weight)
        if not valid.any():
            return None
        gain = GLs * GLs / (HLs + self.l2) + GRs * GRs / (HRs + self.l2) - G * G / (H + self.l2)
        gain = np.where(valid, gain, -np.inf)
        flat = int(np.argmax(gain))  # first max: lowest feature, then lowest bin
        # zero-gain splits are prediction-neutral but break the symmetry of
        # parity-style targets (e.g. XOR), whose best single split gains 0
        if not gain.ravel()[flat] >= 0.0:
            return None
        f, c = divmod(flat, self.bins - 1)
        return f, c, float(GLs[f, c]), float(HLs[f, c])

    def _leaf(self, rows, G, H, F):
        value = -self.lr * G / (H + self.l2)
        F[rows if rows is not None else slice(None)] += value
        return {"value": value}

    def _node(self, rows, g, h, hg, hh, G, H, depth, F):
        split = self._best_split(hg, hh, G, H) if depth < self.max_depth else None
        if split is None:
            return self._leaf(rows, G, H, F)
        f, c, GL, HL = split
        col = self.codes[:, f] if rows is None else self.codes[rows, f]
        go_left = col <= c
        base = np.arange(self.n, dtype=np.intp) if rows is None else rows
        left_rows = base[go_left]
        right_rows = base[~go_left]
        GR, HR = G - GL, H - HL
        child_depth = depth + 1
        if child_depth >= self.max_depth:
            # children are leaves: their stats are already known, no histograms
            left = self._leaf(left_rows, GL, HL, F)
            right = self._leaf(right_rows, GR, HR, F)
        elif len(left_rows) <= len(right_rows):
            lhg, lhh = self._hists(left_rows, g, h)
            left = self._node(left_rows, g, h, lhg, lhh, GL, HL, child_depth, F)
            right = self._node(right_rows, g, h, hg - lhg, hh - lhh, GR, HR, child_depth, F)
        else:
            rhg, rhh = self._hists(right_rows, g, h)
            right = self._node(right_rows, g, h, rhg, rhh, GR, HR, child_depth, F)
            left = self._node(left_rows, g, h, hg - rhg, hh - rhh, GL, HL, child_depth, F)
        return {
            "feature": int(f),
            "threshold": float(self.edges[f][c]),
            "left": left,
            "right": right,
        }

    def fit_tree(self, g, h, F):
        """One tree on (g, h); adds its lr-scaled output to F. Returns node dict."""
        hg, hh = self._hists(None, g, h)
        return self._node(None, g, h, hg, hh, float(g.sum()), float(h.sum()), 0, F)


def _pack_tree(node, arrays):
    """Flatten a nested node dict into parallel arrays for fast prediction."""
    idx = len(arrays["feature"])
    for key in arrays:
        arrays[key].append(0)
    if "value" in node:
        arrays["feature"][idx] = -1
        arrays["value"][idx] = node["value"]
    else:
        arrays["feature"][idx] = node["feature"]
        arrays["threshold"][idx] = node["threshold"]
        arrays["left"][idx] = _pack_tree(node["left"], arrays)
        arrays["right"][idx] = _pack_tree(node["right"], arrays)
    return idx


class BoostedTreesClassifier(TrainedClassifier):
    model_type = "boosted_trees"

    def __init__(self, backend_kind, feature_count, base_score, trees, training_meta):
        super().__init__(backend_kind, feature_count, training_meta)
        self.base_score = float(base_score)
        self.trees = trees  # list of nested node dicts
        self._packed = None

    def _pack(self):
        packed = []
        for tree in self.trees:
            arrays = {"feature": [], "threshold": [], "left": [], "right": [], "value": []}
            _pack_tree(tree, arrays)
            packed.append({
                "feature": np.array(arrays["feature"], dtype=np.int32),
                "threshold": np.array(arrays["threshold"], dtype=np.float64),
                "left": np.array(arrays["left"], dtype=np.int32),
                "right": np.array(arrays["right"], dtype=np.int32),
                "value": np.array(arrays["value"], dtype=np.float64),
            })
        return packed

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        if self._packed is None:
            self._packed = self._pack()
        n = X.shape[0]
        F = np.full(n, self.base_score)
        rows = np.arange(n)
        for t in self._packed:
            idx = np.zeros(n, dtype=np.int32)
            while True:
                feat = t["feature"][idx]
                active = feat >= 0
                if not active.any():
                    break
                cur = idx[active]
                go_left = X[rows[active], feat[active]] <= t["threshold"][cur]
                idx[active] = np.where(go_left, t["left"][cur], t["right"][cur])
            F += t["value"][idx]
        return F

    def _proba(self, X):
        return sigmoid(self.decision_function(X))

    def tree_depths(self) -> list[int]:
        def depth(node):
            if "value" in node:
                return 0
            return 1 + max(depth(node["left"]), depth(node["right"]))

        return [depth(t) for t in self.trees]

    def to_dict(self):
        return {
            "model": self.model_type,
            "backend_kind": self.backend_kind,
            "feature_count": self.feature_count,
            "base_score": self.base_score,
            "trees": self.trees,
            "training_meta": self.training_meta,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(payload["backend_kind"], payload["feature_count"], payload["base_score"],
                   payload["trees"], payload.get("training_meta", {}))


def _tree_outputs(node, X):
    if "value" in node:
        return np.full(X.shape[0], node["value"])
    go_left = X[:, node["feature"]] <= node["threshold"]
    out = np.empty(X.shape[0])
    if go_left.any():
        out[go_left] = _tree_outputs(node["left"], X[go_left])
    if (~go_left).any():
        out[~go_left] = _tree_outputs(node["right"], X[~go_left])
    return out


_EARLY_STOP_TOL = 0.0
_MIN_SAMPLES_FOR_HOLDOUT = 20


def train(spec: ClassifierBackendSpec, X, y, sample_weight, meta) -> BoostedTreesClassifier:
    """Boosting with round-wise early stopping on a seeded holdout slice.

    The holdout keeps long ensembles from memorizing the training split, so
    the training-split probabilities that downstream threshold tuning relies
    on remain honest estimates.  The ensemble never exceeds the configured
    tree count; early stopping truncates it at the best validation round.
    """
    hp = spec.resolved()
    n, d = X.shape
    y = y.astype(np.float64)
    w = sample_weight

    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    if n >= _MIN_SAMPLES_FOR_HOLDOUT:
        perm = rng.permutation(n)
        n_val = max(1, int(round(float(hp["holdout_fraction"]) * n)))
        val_idx, fit_idx = perm[:n_val], perm[n_val:]
    else:
        rng.permutation(n)  # keep the rng stream identical either way
        val_idx, fit_idx = np.empty(0, dtype=np.intp), np.arange(n)
    Xf, yf, wf = X[fit_idx], y[fit_idx], w[fit_idx]
    Xv, yv, wv = X[val_idx], y[val_idx], w[val_idx]
    if yf.min() == yf.max():  # degenerate holdout draw: fall back to all rows
        Xf, yf, wf = X, y, w
        Xv = np.empty((0, d))

    fitter = _TreeFitter(Xf, int(hp["n_bins"]), int(hp["max_depth"]),
                         float(hp["l2"]), float(hp["min_child_weight"]),
                         float(hp["learning_rate"]))
    rate = float((wf * yf).sum() / wf.sum())
    base_score = float(np.log(rate / (1.0 - rate)))
    F = np.full(Xf.shape[0], base_score)
    F_val = np.full(Xv.shape[0], base_score)
    trees = []
    losses = []
    best_round = None
    best_val = np.inf
    patience = int(hp["early_stopping_rounds"])
    for _ in range(int(hp["n_trees"])):
        p = sigmoid(F)
        losses.append(float(np.mean(wf * (np.logaddexp(0.0, F) - yf * F))))
        g = wf * (p - yf)
        h = wf * p * (1.0 - p)
        trees.append(fitter.fit_tree(g, h, F))
        if len(Xv):
            F_val += _tree_outputs(trees[-1], Xv)
            val_loss = float(np.mean(wv * (np.logaddexp(0.0, F_val) - yv * F_val)))
            if val_loss < best_val - _EARLY_STOP_TOL:
                best_val = val_loss
                best_round = len(trees)
            elif len(trees) - (best_round or 0) >= patience:
                break
    losses.append(float(np.mean(wf * (np.logaddexp(0.0, F) - yf * F))))
    if best_round is not None:
        trees = trees[:best_round]
        losses = losses[:best_round + 1]
    meta = dict(meta)
    meta["n_trees"] = len(trees)
    meta["holdout_size"] = int(len(val_idx))
    meta["train_losses"] = losses
    return BoostedTreesClassifier(spec.kind, d, base_score, trees, meta)
