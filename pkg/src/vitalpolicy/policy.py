"""Multi-head hierarchical action policy.

Per knob: a change model scores whether any intervention happens, thresholded
by a tuned tau; a direction model (trained only on change samples) splits
Increase from Decrease.  The two stages merge into a 3-class action
distribution via the chain factorization p(Same)=1-p_c, p(Inc)=p_c*p_d,
p(Dec)=p_c*(1-p_d).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .labeler import ActionLabel, KnobSpec, LabeledSample
from .learners import ClassifierBackendSpec, DimensionMismatch, TrainedClassifier, fit

FORMAT_VERSION = 1

TAU_GRID_HUNDREDTHS = range(1, 100)  # tau candidates i/100 for i in 1..99


class ArtifactError(ValueError):
    """Raised for unreadable, mismatched, or corrupted policy artifact files."""


@dataclass
class ActionDistribution:
    p_same: float
    p_increase: float
    p_decrease: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_same, self.p_increase, self.p_decrease)

    def confidence(self) -> float:
        return max(self.as_tuple())


@dataclass
class KnobHead:
    knob: str
    change_model: TrainedClassifier
    direction_model: TrainedClassifier | None
    tau: float
    fallback_direction: ActionLabel = ActionLabel.INCREASE

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.fallback_direction not in (ActionLabel.INCREASE, ActionLabel.DECREASE):
            raise ValueError("fallback_direction must be Increase or Decrease")


@dataclass
class PolicyArtifact:
    heads: dict[str, KnobHead]
    backend: ClassifierBackendSpec
    feature_names: list[str]
    fingerprint: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def knob_names(self) -> list[str]:
        return list(self.heads)


def tune_tau(change_model: TrainedClassifier, X_train, c_train) -> float:
    """Grid-search tau over {0.01..0.99} maximizing change-class F1 on train.

    Ties break toward the tau closest to 0.5, then the smaller tau; with no
    change samples the tuning is vacuous and tau defaults to 0.5.
    """
    c = np.asarray(c_train).astype(bool)
    if len(c) == 0 or not c.any():
        return 0.5
    probs = np.asarray(change_model.predict_proba(np.asarray(X_train, dtype=np.float64)))
    best = None  # (f1, |i-50|, i)
    for i in TAU_GRID_HUNDREDTHS:
        pred = probs > i / 100.0
        tp = int(np.sum(pred & c))
        fp = int(np.sum(pred & ~c))
        fn = int(np.sum(~pred & c))
        f1 = 2.0 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
        key = (f1, -abs(i - 50), -i)
        if best is None or key > best[0]:
            best = (key, i)
    return best[1] / 100.0


def _head_seed(base_seed: int, knob_index: int, stage: int) -> int:
    # derive independent, reproducible per-head seeds from the backend seed
    ss = np.random.SeedSequence([int(base_seed), knob_index, stage])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def train_policy(
    samples: list[LabeledSample],
    backend: ClassifierBackendSpec,
    knobs: list[KnobSpec],
    fold_id: str = "full",
) -> PolicyArtifact:
    """Fit all knob heads on a training split.

    The change model sees every sample (target: label != Same); the direction
    model sees only change samples (positive class: Increase).  Heads are
    independent: knob k's models never see knob j's labels.
    """
    if not samples:
        raise ValueError("cannot train a policy on an empty sample list")
    feature_names = samples[0].state.feature_names
    X = np.stack([s.state.features for s in samples])
    heads: dict[str, KnobHead] = {}
    counts: dict[str, dict] = {}
    for k_idx, knob in enumerate(knobs):
        labels = [s.actions[knob.name] for s in samples]
        c = np.array([lab != ActionLabel.SAME for lab in labels], dtype=np.int8)
        change_model = fit(backend.with_seed(_head_seed(backend.seed, k_idx, 0)), X, c)
        tau = tune_tau(change_model, X, c)
        change_idx = np.flatnonzero(c)
        direction_model = None
        fallback = ActionLabel.INCREASE
        if len(change_idx) >= 2:
            d = np.array([labels[i] == ActionLabel.INCREASE for i in change_idx], dtype=np.int8)
            if d.min() == d.max():
                fallback = ActionLabel.INCREASE if d[0] == 1 else ActionLabel.DECREASE
            else:
                direction_model = fit(
                    backend.with_seed(_head_seed(backend.seed, k_idx, 1)), X[change_idx], d
                )
        counts[knob.name] = {
            "n": len(samples),
            "n_change": int(len(change_idx)),
            "n_increase": int(sum(1 for lab in labels if lab == ActionLabel.INCREASE)),
            "n_decrease": int(sum(1 for lab in labels if lab == ActionLabel.DECREASE)),
            "direction_model": direction_model is not None,
        }
        heads[knob.name] = KnobHead(knob.name, change_model, direction_model, tau, fallback)
    fingerprint = {
        "fold": fold_id,
        "seed": int(backend.seed),
        "sample_count": len(samples),
        "per_knob": counts,
    }
    return PolicyArtifact(heads, backend, list(feature_names), fingerprint)


def _merge(p_c: np.ndarray, p_d: np.ndarray, tau: float):
    hard_change = p_c > tau
    hard_inc = p_d >= 0.5
    dist = np.stack([1.0 - p_c, p_c * p_d, p_c * (1.0 - p_d)], axis=-1)
    return hard_change, hard_inc, dist


def predict_action_batch(head: KnobHead, X: np.ndarray):
    """Vectorized head prediction: (labels list, distributions (n, 3) array)."""
    X = np.asarray(X, dtype=np.float64)
    p_c = np.atleast_1d(head.change_model.predict_proba(X))
    if head.direction_model is not None:
        p_d = np.atleast_1d(head.direction_model.predict_proba(X))
    else:
        p_d = np.full_like(p_c, 1.0 if head.fallback_direction == ActionLabel.INCREASE else 0.0)
    hard_change, hard_inc, dist = _merge(p_c, p_d, head.tau)
    labels = [
        ActionLabel.SAME if not hc else (ActionLabel.INCREASE if hi else ActionLabel.DECREASE)
        for hc, hi in zip(hard_change, hard_inc)
    ]
    return labels, dist, p_c


def predict_action(head: KnobHead, x) -> tuple[ActionLabel, ActionDistribution]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("predict_action expects a single feature vector")
    labels, dist, _ = predict_action_batch(head, x[None, :])
    return labels[0], ActionDistribution(*map(float, dist[0]))


def predict_all(artifact: PolicyArtifact, x) -> dict[str, tuple[ActionLabel, ActionDistribution]]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != len(artifact.feature_names):
        raise DimensionMismatch(
            f"expected {len(artifact.feature_names)} features, got shape {x.shape}"
        )
    return {name: predict_action(head, x) for name, head in artifact.heads.items()}


def _head_to_dict(head: KnobHead) -> dict:
    return {
        "knob": head.knob,
        "tau": head.tau,
        "fallback_direction": head.fallback_direction.value,
        "change_model": head.change_model.to_dict(),
        "direction_model": head.direction_model.to_dict() if head.direction_model else None,
    }


def _head_from_dict(payload: dict) -> KnobHead:
    return KnobHead(
        knob=payload["knob"],
        change_model=TrainedClassifier.from_dict(payload["change_model"]),
        direction_model=(TrainedClassifier.from_dict(payload["direction_model"])
                         if payload.get("direction_model") else None),
        tau=float(payload["tau"]),
        fallback_direction=ActionLabel.from_token(payload["fallback_direction"]),
    )


def save_artifact(artifact: PolicyArtifact, path) -> None:
    payload = {
        "format": "vitalpolicy-artifact",
        "format_version": artifact.format_version,
        "backend": artifact.backend.to_dict(),
        "feature_names": artifact.feature_names,
        "heads": {name: _head_to_dict(head) for name, head in artifact.heads.items()},
        "fingerprint": artifact.fingerprint,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def artifact_bytes(artifact: PolicyArtifact) -> bytes:
    """Canonical serialized form, used for byte-level comparisons."""
    payload = {
        "format": "vitalpolicy-artifact",
        "format_version": artifact.format_version,
        "backend": artifact.backend.to_dict(),
        "feature_names": artifact.feature_names,
        "heads": {name: _head_to_dict(head) for name, head in artifact.heads.items()},
        "fingerprint": artifact.fingerprint,
    }
    return json.dumps(payload, sort_keys=True).encode("utf-8")


def load_artifact(path) -> PolicyArtifact:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: corrupted artifact payload: {exc}") from None
    if payload.get("format") != "vitalpolicy-artifact":
        raise ArtifactError(f"{path}: not a policy artifact file")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ArtifactError(
            f"{path}: format version mismatch (file has {version!r}, tool expects {FORMAT_VERSION})"
        )
    feature_names = list(payload["feature_names"])
    heads = {}
    for name, head_payload in payload["heads"].items():
        head = _head_from_dict(head_payload)
        models = [head.change_model] + ([head.direction_model] if head.direction_model else [])
        for model in models:
            if model.feature_count != len(feature_names):
                raise ArtifactError(
                    f"{path}: head {name!r} expects {model.feature_count} features but the "
                    f"artifact names {len(feature_names)}"
                )
        heads[name] = head
    return PolicyArtifact(
        heads=heads,
        backend=ClassifierBackendSpec.from_dict(payload["backend"]),
        feature_names=feature_names,
        fingerprint=payload.get("fingerprint", {}),
        format_version=version,
    )
