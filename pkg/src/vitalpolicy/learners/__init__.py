"""Probabilistic binary classifier backends behind one abstraction.

All policy heads are backend-agnostic: they see only `fit` and
`TrainedClassifier.predict_proba`.  Class imbalance is handled uniformly via
inverse-frequency sample weights inside every backend's loss; predicted
probabilities are clamped away from exactly 0 and 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_EPS = 1e-6

BACKEND_KINDS = ("logistic", "boosted_trees", "mlp")

_DEFAULT_HYPERPARAMETERS = {
    "logistic": {
        "max_iter": 400,
        "l2": 1e-4,
        "tol": 1e-10,
    },
    "boosted_trees": {
        "n_trees": 200,
        "max_depth": 3,
        "learning_rate": 0.1,
        "l2": 1.0,
        "min_child_weight": 0.1,
        "n_bins": 128,
        "early_stopping_rounds": 20,
        "holdout_fraction": 0.1,
    },
    "mlp": {
        "hidden_layers": 3,
        "hidden_width": 64,
        "learning_rate": 1e-3,
        "epochs": 200,
        "batch_size": 256,
        "patience": 20,
        "holdout_fraction": 0.1,
        "l2": 0.0,
    },
}


class DimensionMismatch(ValueError):
    """Feature count of the input does not match the trained model."""


@dataclass(frozen=True)
class ClassifierBackendSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}; expected one of {BACKEND_KINDS}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must fit in 64 unsigned bits")
        unknown = set(self.hyperparameters) - set(_DEFAULT_HYPERPARAMETERS[self.kind])
        if unknown:
            raise ValueError(f"unknown hyperparameters for {self.kind}: {sorted(unknown)}")
        hp = self.resolved()
        positive_int = {
            "logistic": ["max_iter"],
            "boosted_trees": ["n_trees", "max_depth", "n_bins"],
            "mlp": ["hidden_layers", "hidden_width", "epochs", "batch_size", "patience"],
        }[self.kind]
        for key in positive_int:
            if int(hp[key]) < 1:
                raise ValueError(f"{self.kind}.{key} must be >= 1")
        if self.kind in ("boosted_trees", "mlp") and not (0.0 < hp["learning_rate"] <= 1.0):
            raise ValueError(f"{self.kind}.learning_rate must be in (0, 1]")
        for key in ("l2",):
            if hp.get(key, 0.0) < 0.0:
                raise ValueError(f"{self.kind}.{key} must be >= 0")
        if self.kind in ("boosted_trees", "mlp") and not (0.0 < hp["holdout_fraction"] < 1.0):
            raise ValueError(f"{self.kind}.holdout_fraction must be in (0, 1)")
        if self.kind == "boosted_trees" and int(hp["early_stopping_rounds"]) < 1:
            raise ValueError("boosted_trees.early_stopping_rounds must be >= 1")

    def resolved(self) -> dict:
        hp = dict(_DEFAULT_HYPERPARAMETERS[self.kind])
        hp.update(self.hyperparameters)
        return hp

    def with_seed(self, seed: int) -> "ClassifierBackendSpec":
        return ClassifierBackendSpec(self.kind, dict(self.hyperparameters), seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, payload: dict) -> "ClassifierBackendSpec":
        return cls(payload["kind"], dict(payload.get("hyperparameters", {})), int(payload.get("seed", 0)))


class TrainedClassifier:
    """Immutable trained model; subclasses implement `_proba` and payloads."""

    model_type = "base"

    def __init__(self, backend_kind: str, feature_count: int, training_meta: dict):
        self.backend_kind = backend_kind
        self.feature_count = int(feature_count)
        self.training_meta = dict(training_meta)

    def predict_proba(self, X):
        """Probability of the positive class, clamped to [eps, 1-eps].

        Accepts a single feature vector or a (n, d) matrix; returns a float or
        a float array accordingly.
        """
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.feature_count:
            raise DimensionMismatch(
                f"expected {self.feature_count} features, got shape {X.shape}"
            )
        p = np.clip(self._proba(X), PROB_EPS, 1.0 - PROB_EPS)
        return float(p[0]) if single else p

    def _proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(payload: dict) -> "TrainedClassifier":
        from . import boosted, logistic, mlp  # local import to avoid cycles

        model_type = payload.get("model")
        table = {
            "constant": ConstantClassifier,
            "logistic": logistic.LogisticClassifier,
            "boosted_trees": boosted.BoostedTreesClassifier,
            "mlp": mlp.MlpClassifier,
        }
        if model_type not in table:
            raise ValueError(f"unknown model payload type {model_type!r}")
        return table[model_type].from_dict(payload)


class ConstantClassifier(TrainedClassifier):
    """Degenerate single-class fit: emits the (clamped) empirical class rate."""

    model_type = "constant"

    def __init__(self, backend_kind: str, feature_count: int, rate: float, training_meta: dict):
        super().__init__(backend_kind, feature_count, training_meta)
        self.rate = float(np.clip(rate, PROB_EPS, 1.0 - PROB_EPS))

    def _proba(self, X):
        return np.full(X.shape[0], self.rate)

    def to_dict(self):
        return {
            "model": self.model_type,
            "backend_kind": self.backend_kind,
            "feature_count": self.feature_count,
            "rate": self.rate,
            "training_meta": self.training_meta,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(payload["backend_kind"], payload["feature_count"], payload["rate"],
                   payload.get("training_meta", {}))


def inverse_frequency_weights(y: np.ndarray) -> np.ndarray:
    """Per-sample weights n / (2 * n_class); mean weight is 1 for binary y."""
    y = np.asarray(y)
    n = y.shape[0]
    n_pos = int(y.sum())
    n_neg = n - n_pos
    w = np.empty(n, dtype=np.float64)
    if n_pos:
        w[y == 1] = n / (2.0 * n_pos)
    if n_neg:
        w[y == 0] = n / (2.0 * n_neg)
    return w


def fit(spec: ClassifierBackendSpec, X, y) -> TrainedClassifier:
    """Train one binary classifier; deterministic given (spec, X, y, seed).

    Single-class input degrades to a constant-probability classifier carrying
    a warning flag (direction heads routinely see such folds).
    """
    from . import boosted, logistic, mlp

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int8)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d feature matrix")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training samples")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be binary 0/1")
    n_pos = int(y.sum())
    meta = {
        "n_samples": int(X.shape[0]),
        "class_counts": {"0": int(X.shape[0] - n_pos), "1": n_pos},
        "seed": int(spec.seed),
    }
    if n_pos == 0 or n_pos == X.shape[0]:
        meta["constant"] = True
        meta["warning"] = "single-class training input"
        return ConstantClassifier(spec.kind, X.shape[1], n_pos / X.shape[0], meta)
    sample_weight = inverse_frequency_weights(y)
    if spec.kind == "logistic":
        return logistic.train(spec, X, y, sample_weight, meta)
    if spec.kind == "boosted_trees":
        return boosted.train(spec, X, y, sample_weight, meta)
    return mlp.train(spec, X, y, sample_weight, meta)
