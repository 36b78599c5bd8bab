"""Leave-one-out evaluation harness and the metric suite.

Every fold re-derives imputation statistics from its training split only, so
nothing about a held-out trajectory can influence the models that are scored
on it.  All backends see identical folds and an identical feature pipeline.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from .ingest import Cohort, fallback_means, featurize, impute_windows
from .labeler import ActionLabel, KnobSpec, LabeledSample, build_dataset
from .learners import ClassifierBackendSpec
from .policy import PolicyArtifact, predict_action_batch, train_policy
from .registry import AgeNormTable, VariableRegistry

CLASS_ORDER = (ActionLabel.SAME, ActionLabel.INCREASE, ActionLabel.DECREASE)
_CLASS_INDEX = {label: i for i, label in enumerate(CLASS_ORDER)}


# ---------------------------------------------------------------------------
# metrics

def balanced_accuracy(confusion) -> float:
    """Mean per-class recall over classes with at least one true instance."""
    c = np.asarray(confusion, dtype=np.float64)
    if c.shape != (3, 3) or c.sum() == 0:
        raise ValueError("confusion matrix must be 3x3 with at least one entry")
    if np.any(c < 0):
        raise ValueError("confusion matrix entries must be non-negative")
    recalls = [c[i, i] / c[i].sum() for i in range(3) if c[i].sum() >= 1]
    return float(sum(recalls) / len(recalls))


def macro_prf(confusion) -> tuple[float, float, float]:
    """Macro precision/recall/F1 over classes present in truth or predictions.

    Per-class ratios with empty denominators are defined as 0, so spurious
    predictions of an absent class are penalized rather than ignored.
    """
    c = np.asarray(confusion, dtype=np.float64)
    if c.shape != (3, 3) or c.sum() == 0:
        raise ValueError("confusion matrix must be 3x3 with at least one entry")
    precisions, recalls, f1s = [], [], []
    for i in range(3):
        row, col = c[i].sum(), c[:, i].sum()
        if row == 0 and col == 0:
            continue
        p = c[i, i] / col if col > 0 else 0.0
        r = c[i, i] / row if row > 0 else 0.0
        f1 = 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0
        precisions.append(p)
        recalls.append(r)
        f1s.append(f1)
    k = len(f1s)
    return (float(sum(precisions) / k), float(sum(recalls) / k), float(sum(f1s) / k))


def confusion_matrix(truth: list[ActionLabel], predicted: list[ActionLabel]) -> np.ndarray:
    c = np.zeros((3, 3), dtype=np.int64)
    for t, p in zip(truth, predicted):
        c[_CLASS_INDEX[t], _CLASS_INDEX[p]] += 1
    return c


def ece(records, bins: int = 10) -> float:
    """Expected calibration error over equal-width bins ((b-1)/B, b/B].

    A confidence of exactly 0 falls into the first bin.
    """
    records = list(records)
    if not records:
        raise ValueError("ece requires at least one record")
    conf = np.array([r[0] for r in records], dtype=np.float64)
    correct = np.array([bool(r[1]) for r in records], dtype=np.float64)
    return _ece_arrays(conf, correct, bins)


def _ece_arrays(conf: np.ndarray, correct: np.ndarray, bins: int) -> float:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if conf.size == 0:
        raise ValueError("ece requires at least one record")
    if np.any(conf < 0.0) or np.any(conf > 1.0):
        raise ValueError("confidences must lie in [0, 1]")
    edges = np.array([b / bins for b in range(1, bins + 1)])
    idx = np.searchsorted(edges, conf, side="left")
    total = 0.0
    n = conf.size
    for b in range(bins):
        mask = idx == b
        if not mask.any():
            continue
        # (n_b/N)*|acc_b - conf_b| written as |sum(correct) - sum(conf)|/N
        total += abs(correct[mask].sum() - conf[mask].sum()) / n
    return float(total)


# ---------------------------------------------------------------------------
# folds

def loo_folds(items_by_patient: dict[str, list]) -> list[tuple[str, list, list]]:
    """One fold per patient: (held_out_id, train items, test items)."""
    if len(items_by_patient) < 2:
        raise ValueError("leave-one-out requires at least 2 patients")
    pids = sorted(items_by_patient)
    folds = []
    for held_out in pids:
        train = [item for pid in pids if pid != held_out for item in items_by_patient[pid]]
        folds.append((held_out, train, list(items_by_patient[held_out])))
    return folds


def fold_samples(
    cohort: Cohort,
    held_out: str,
    registry: VariableRegistry,
    age_table: AgeNormTable,
    knobs: list[KnobSpec],
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Featurize and label one fold; imputation fallback comes from train only."""
    train_ids = [pid for pid in cohort.patient_ids if pid != held_out]
    if not train_ids:
        raise ValueError("leave-one-out requires at least 2 patients")
    fb = fallback_means({pid: cohort.patients[pid].windows for pid in train_ids}, registry)

    def build(pids):
        samples = []
        for pid in pids:
            patient = cohort.patients[pid]
            imputed, _ = impute_windows(patient.windows, registry, fb)
            states = featurize(imputed, patient.meta.age_years, registry, age_table)
            samples.extend(build_dataset(states, imputed, knobs))
        return samples

    return build(train_ids), build([held_out])


def train_fold_artifact(
    cohort: Cohort,
    held_out: str,
    backend: ClassifierBackendSpec,
    knobs: list[KnobSpec],
    registry: VariableRegistry,
    age_table: AgeNormTable,
) -> PolicyArtifact:
    """The artifact a LOO fold trains while holding out one patient."""
    train, _ = fold_samples(cohort, held_out, registry, age_table, knobs)
    return train_policy(train, backend, knobs, fold_id=held_out)


# ---------------------------------------------------------------------------
# evaluation run

@dataclass
class FoldReport:
    held_out: str
    n_test: int
    confusions: dict[str, np.ndarray]
    balanced_accuracy: dict[str, float]
    macro_f1: dict[str, float]
    # per-knob (hard-label confidence, correctness) pairs for this fold
    calibration: dict[str, list[tuple[float, bool]]]
    overall_prf: tuple[float, float, float] | None


@dataclass
class HeldOutPredictions:
    """Pooled held-out predictions for one (backend, knob), in sample order."""
    truth: list[ActionLabel]
    hard: list[ActionLabel]
    p_change: np.ndarray
    confidence: np.ndarray
    correct: np.ndarray


@dataclass
class EvalSummary:
    backend_name: str
    fold_count: int
    sample_count: int
    per_knob_balanced_accuracy: dict[str, tuple[float, float]]
    per_knob_macro_f1: dict[str, tuple[float, float]]
    overall_macro_precision: tuple[float, float]
    overall_macro_recall: tuple[float, float]
    overall_macro_f1: tuple[float, float]
    ece: float


@dataclass
class BackendResult:
    name: str
    spec: ClassifierBackendSpec
    fold_reports: list[FoldReport]
    heldout: dict[str, HeldOutPredictions]
    summary: EvalSummary | None = None


@dataclass
class EvalRun:
    knob_names: list[str]
    feature_names: list[str]
    sample_index: list[tuple[str, int]]  # (patient_id, hour) in canonical order
    features: np.ndarray
    backends: list[BackendResult] = field(default_factory=list)

    def backend(self, name: str) -> BackendResult:
        for b in self.backends:
            if b.name == name:
                return b
        raise KeyError(name)


def _mean_sd(values: list[float]) -> tuple[float, float]:
    arr = np.array(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())  # population sd across folds


def _backend_names(specs: list[ClassifierBackendSpec]) -> list[str]:
    names = []
    for spec in specs:
        name = spec.kind
        if name in names:
            suffix = 2
            while f"{name}-{suffix}" in names:
                suffix += 1
            name = f"{name}-{suffix}"
        names.append(name)
    return names


def _run_fold(args):
    try:
        return _run_fold_inner(args)
    except Exception as exc:
        raise RuntimeError(f"fold holding out patient {args[1]!r}: {exc}") from exc


def _run_fold_inner(args):
    cohort, held_out, specs, knobs, registry, age_table = args
    train, test = fold_samples(cohort, held_out, registry, age_table, knobs)
    if not train:
        raise ValueError("training split has no samples")
    X_test = np.stack([s.state.features for s in test]) if test else None
    out = {"held_out": held_out, "index": [(s.patient_id, s.hour_index) for s in test],
           "features": X_test, "per_backend": []}
    for spec in specs:
        artifact = train_policy(train, spec, knobs, fold_id=held_out) if train else None
        knob_payload = {}
        for knob in knobs:
            truth = [s.actions[knob.name] for s in test]
            if test:
                hard, dist, p_c = predict_action_batch(artifact.heads[knob.name], X_test)
                conf = dist.max(axis=1)
                correct = np.array([h == t for h, t in zip(hard, truth)], dtype=np.float64)
            else:
                hard, p_c = [], np.empty(0)
                conf = np.empty(0)
                correct = np.empty(0)
            knob_payload[knob.name] = (truth, hard, p_c, conf, correct)
        out["per_backend"].append(knob_payload)
    return out


def run_evaluation(
    cohort: Cohort,
    backend_specs: list[ClassifierBackendSpec],
    knobs: list[KnobSpec],
    registry: VariableRegistry,
    age_table: AgeNormTable,
    ece_bins: int = 10,
    jobs: int = 1,
) -> EvalRun:
    """LOO-evaluate every backend on identical folds and pipelines."""
    if len(cohort) < 2:
        raise ValueError("evaluation requires at least 2 patients")
    pids = cohort.patient_ids
    names = _backend_names(backend_specs)
    tasks = [(cohort, held_out, backend_specs, knobs, registry, age_table) for held_out in pids]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            fold_payloads = list(pool.map(_run_fold, tasks))
    else:
        fold_payloads = [_run_fold(t) for t in tasks]
    # canonical patient-id order regardless of execution order
    fold_payloads.sort(key=lambda p: p["held_out"])

    sample_index = [pair for p in fold_payloads for pair in p["index"]]
    feats = [p["features"] for p in fold_payloads if p["features"] is not None]
    features = np.vstack(feats) if feats else np.empty((0, registry.feature_count))
    knob_names = [k.name for k in knobs]
    run = EvalRun(knob_names, registry.feature_names(), sample_index, features)

    for b_idx, (name, spec) in enumerate(zip(names, backend_specs)):
        fold_reports = []
        pooled: dict[str, dict[str, list]] = {
            k: {"truth": [], "hard": [], "p": [], "conf": [], "correct": []} for k in knob_names
        }
        for payload in fold_payloads:
            knob_payload = payload["per_backend"][b_idx]
            confusions, bal, mf1, calibration = {}, {}, {}, {}
            n_test = len(payload["index"])
            pooled_conf = np.zeros((3, 3), dtype=np.int64)
            for k in knob_names:
                truth, hard, p_c, conf, correct = knob_payload[k]
                cm = confusion_matrix(truth, hard)
                confusions[k] = cm
                pooled_conf += cm
                if n_test:
                    bal[k] = balanced_accuracy(cm)
                    mf1[k] = macro_prf(cm)[2]
                calibration[k] = [(float(c), bool(r)) for c, r in zip(conf, correct)]
                pooled[k]["truth"].extend(truth)
                pooled[k]["hard"].extend(hard)
                pooled[k]["p"].append(p_c)
                pooled[k]["conf"].append(conf)
                pooled[k]["correct"].append(correct)
            overall = macro_prf(pooled_conf) if n_test else None
            fold_reports.append(FoldReport(payload["held_out"], n_test, confusions, bal, mf1,
                                           calibration, overall))

        heldout = {
            k: HeldOutPredictions(
                truth=pooled[k]["truth"],
                hard=pooled[k]["hard"],
                p_change=np.concatenate(pooled[k]["p"]) if pooled[k]["p"] else np.empty(0),
                confidence=np.concatenate(pooled[k]["conf"]) if pooled[k]["conf"] else np.empty(0),
                correct=np.concatenate(pooled[k]["correct"]) if pooled[k]["correct"] else np.empty(0),
            )
            for k in knob_names
        }
        scored = [fr for fr in fold_reports if fr.n_test >= 1]
        all_conf = np.concatenate([heldout[k].confidence for k in knob_names])
        all_correct = np.concatenate([heldout[k].correct for k in knob_names])
        summary = EvalSummary(
            backend_name=name,
            fold_count=len(fold_reports),
            sample_count=len(sample_index),
            per_knob_balanced_accuracy={
                k: _mean_sd([fr.balanced_accuracy[k] for fr in scored]) for k in knob_names
            },
            per_knob_macro_f1={
                k: _mean_sd([fr.macro_f1[k] for fr in scored]) for k in knob_names
            },
            overall_macro_precision=_mean_sd([fr.overall_prf[0] for fr in scored]),
            overall_macro_recall=_mean_sd([fr.overall_prf[1] for fr in scored]),
            overall_macro_f1=_mean_sd([fr.overall_prf[2] for fr in scored]),
            ece=_ece_arrays(all_conf, all_correct, ece_bins),
        )
        run.backends.append(BackendResult(name, spec, fold_reports, heldout, summary))
    return run
