"""End-to-end dataset assembly used by the CLI and tests.

This is the whole-cohort path: imputation fallback means come from every
patient.  Leave-one-out evaluation does NOT use this module's statistics; it
recomputes them per fold from the training split (see evaluation.fold_samples).
"""
from __future__ import annotations

from .config import ToolConfig
from .ingest import (
    Cohort,
    ImputationStats,
    fallback_means,
    featurize,
    impute_windows,
    load_cohort,
)
from .labeler import LabeledDataset, build_dataset


def load_dataset_dir(data_dir, cfg: ToolConfig) -> Cohort:
    from pathlib import Path

    data_dir = Path(data_dir)
    traj = data_dir / "trajectories.csv"
    meta = data_dir / "patients.csv"
    for p in (traj, meta):
        if not p.exists():
            raise FileNotFoundError(f"expected dataset file {p}")
    return load_cohort(traj, meta, cfg.registry, cfg.window_minutes)


def label_cohort(cohort: Cohort, cfg: ToolConfig):
    """Featurize and label the full cohort with cohort-wide fallback means.

    Returns (LabeledDataset, per-patient ImputationStats).
    """
    fb = fallback_means({pid: p.windows for pid, p in cohort.patients.items()}, cfg.registry)
    dataset = LabeledDataset(cfg.registry.feature_names(), [k.name for k in cfg.knobs])
    stats: dict[str, ImputationStats] = {}
    for pid in cohort.patient_ids:
        patient = cohort.patients[pid]
        imputed, st = impute_windows(patient.windows, cfg.registry, fb)
        stats[pid] = st
        states = featurize(imputed, patient.meta.age_years, cfg.registry, cfg.age_table)
        dataset.samples.extend(build_dataset(states, imputed, cfg.knobs))
    return dataset, stats
