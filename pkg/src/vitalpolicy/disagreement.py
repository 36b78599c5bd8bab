"""Mining state-space regions where the policy diverges from the clinicians.

The per-sample disagreement target is d = |y_c - p_c| on the change stage:
y_c says whether the clinician intervened, p_c is the model's change
probability.  A shallow regression tree over the state features carves the
samples into regions; leaves with high mean d are where the model most
disagrees with observed practice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labeler import ActionLabel, LabeledSample
from .learners.tree import RegressionTree, fit_regression_tree
from .policy import PolicyArtifact


@dataclass
class Predicate:
    feature: str
    lower: float | None  # value > lower
    upper: float | None  # value <= upper

    def render(self, fmt: str = "{:.4g}") -> str:
        if self.lower is not None and self.upper is not None:
            return f"{fmt.format(self.lower)} < {self.feature} ≤ {fmt.format(self.upper)}"
        if self.lower is not None:
            return f"{self.feature} > {fmt.format(self.lower)}"
        return f"{self.feature} ≤ {fmt.format(self.upper)}"


@dataclass
class DisagreementRegion:
    knob: str
    predicates: list[Predicate]
    n: int
    mean_d: float

    def render(self) -> str:
        if self.predicates:
            conds = ", ".join(p.render() for p in self.predicates)
        else:
            conds = "all states"
        return f"{conds} (n={self.n}, d(s)={self.mean_d:.2f})"


def disagreement_targets(
    samples: list[LabeledSample],
    artifact: PolicyArtifact,
    knob: str,
) -> list[tuple[LabeledSample, float]]:
    """d = |y_c - p_c| per sample, with y_c = 1 iff the clinician intervened."""
    if not samples:
        return []
    X = np.stack([s.state.features for s in samples])
    p_c = np.atleast_1d(artifact.heads[knob].change_model.predict_proba(X))
    out = []
    for s, p in zip(samples, p_c):
        y_c = 1.0 if s.actions[knob] != ActionLabel.SAME else 0.0
        out.append((s, float(abs(y_c - p))))
    return out


def targets_from_predictions(truth: list[ActionLabel], p_change: np.ndarray) -> np.ndarray:
    y_c = np.array([t != ActionLabel.SAME for t in truth], dtype=np.float64)
    return np.abs(y_c - np.asarray(p_change, dtype=np.float64))


def _path_predicates(path, feature_names) -> list[Predicate]:
    # merge per-feature bounds along the root-to-leaf path into intervals
    bounds: dict[int, list[float | None]] = {}
    order: list[int] = []
    for feature, is_left, threshold in path:
        if feature not in bounds:
            bounds[feature] = [None, None]
            order.append(feature)
        lo, hi = bounds[feature]
        if is_left:  # value <= threshold
            bounds[feature][1] = threshold if hi is None else min(hi, threshold)
        else:  # value > threshold
            bounds[feature][0] = threshold if lo is None else max(lo, threshold)
    return [Predicate(feature_names[f], bounds[f][0], bounds[f][1]) for f in order]


def mine_regions(
    X,
    d,
    feature_names: list[str],
    knob: str,
    max_depth: int = 3,
    min_leaf: int = 20,
) -> tuple[list[DisagreementRegion], RegressionTree]:
    """Fit the disagreement tree and convert each leaf into a region.

    Regions come back sorted by mean disagreement, highest first.
    """
    tree = fit_regression_tree(X, d, max_depth=max_depth, min_leaf=min_leaf)
    regions = [
        DisagreementRegion(knob, _path_predicates(path, feature_names), leaf.n, leaf.value)
        for leaf, path in tree.leaves_with_paths()
    ]
    regions.sort(key=lambda r: (-r.mean_d, -r.n))
    return regions, tree


def split_frequency(trees: dict[tuple[str, str], RegressionTree], feature_names: list[str]):
    """Rows of (feature, per-model split counts), sorted by total then name.

    `trees` maps (model name, knob name) to that pair's disagreement tree.
    """
    if not trees:
        raise ValueError("split_frequency requires at least one tree")
    models = sorted({model for model, _ in trees})
    counts: dict[str, dict[str, int]] = {}
    for (model, _knob), tree in trees.items():
        for f in tree.internal_features():
            name = feature_names[f]
            counts.setdefault(name, {m: 0 for m in models})
            counts[name][model] += 1
    rows = sorted(
        counts.items(),
        key=lambda item: (-sum(item[1].values()), item[0]),
    )
    return models, rows
