"""Trajectory ingestion: parse raw telemetry, window it, impute, featurize.

The pipeline is parse -> windowize -> impute -> featurize.  Imputation is
forward-fill within a patient; leading gaps are filled from a caller-supplied
per-variable fallback mean so that evaluation folds can restrict those
statistics to their training split.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .registry import (
    ECMO_TYPE_CODE,
    ECMO_TYPES,
    AgeNormTable,
    VariableRegistry,
)


class IngestError(ValueError):
    """Raised for malformed or inconsistent input files."""


@dataclass(frozen=True)
class RawRecord:
    patient_id: str
    timestamp: int  # minutes since trajectory start
    variable: str
    value: float


@dataclass(frozen=True)
class PatientMeta:
    patient_id: str
    age_years: float
    ecmo_type: str  # "VV" or "VA"
    on_ecmo_start_min: int
    on_ecmo_end_min: int


@dataclass
class ObservationWindow:
    patient_id: str
    hour_index: int
    means: dict[str, float]
    coverage: dict[str, int]
    ecmo_type: str = "VA"
    on_ecmo: bool = True


@dataclass
class StateVector:
    patient_id: str
    hour_index: int
    features: np.ndarray  # float64, length 2*|registry|+2
    feature_names: list[str]

    def as_map(self) -> dict[str, float]:
        return dict(zip(self.feature_names, (float(v) for v in self.features)))


@dataclass
class ImputationStats:
    forward_filled: int = 0
    fallback_filled: int = 0

    def merged(self, other: "ImputationStats") -> "ImputationStats":
        return ImputationStats(
            self.forward_filled + other.forward_filled,
            self.fallback_filled + other.fallback_filled,
        )


@dataclass
class PatientData:
    """One patient's windowed trajectory plus metadata."""
    patient_id: str
    meta: PatientMeta
    windows: list[ObservationWindow]


@dataclass
class Cohort:
    """All patients of a dataset, in canonical patient-id order."""
    patients: dict[str, PatientData] = field(default_factory=dict)

    @property
    def patient_ids(self) -> list[str]:
        return sorted(self.patients)

    def __len__(self) -> int:
        return len(self.patients)


def _parse_float(text: str, line_no: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestError(f"line {line_no}: non-numeric {what}: {text!r}") from None
    if not math.isfinite(value):
        raise IngestError(f"line {line_no}: non-finite {what}: {text!r}")
    return value


TRAJECTORY_HEADER = ["patient_id", "timestamp_min", "variable", "value"]
METADATA_HEADER = ["patient_id", "age_years", "ecmo_type", "on_ecmo_start_min", "on_ecmo_end_min"]


def parse_trajectory_file(path, registry: VariableRegistry) -> dict[str, list[RawRecord]]:
    """Parse a long-format trajectory CSV into per-patient record lists.

    Records come back sorted by (patient_id, timestamp).  An empty file is an
    empty result, not an error.
    """
    groups: dict[str, list[RawRecord]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return {}
        if [h.strip() for h in header] != TRAJECTORY_HEADER:
            raise IngestError(
                f"{path}: expected header {','.join(TRAJECTORY_HEADER)!r}, got {','.join(header)!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise IngestError(f"line {line_no}: expected 4 fields, got {len(row)}")
            pid, ts_text, variable, value_text = (f.strip() for f in row)
            if not pid:
                raise IngestError(f"line {line_no}: empty patient_id")
            try:
                ts = int(ts_text)
            except ValueError:
                raise IngestError(f"line {line_no}: non-integer timestamp: {ts_text!r}") from None
            if ts < 0:
                raise IngestError(f"line {line_no}: negative timestamp: {ts}")
            if variable not in registry:
                raise IngestError(f"line {line_no}: unknown variable {variable!r}")
            value = _parse_float(value_text, line_no, "value")
            groups.setdefault(pid, []).append(RawRecord(pid, ts, variable, value))
    for pid in groups:
        groups[pid].sort(key=lambda r: r.timestamp)
    return dict(sorted(groups.items()))


def parse_metadata_file(path) -> dict[str, PatientMeta]:
    metas: dict[str, PatientMeta] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return {}
        if [h.strip() for h in header] != METADATA_HEADER:
            raise IngestError(
                f"{path}: expected header {','.join(METADATA_HEADER)!r}, got {','.join(header)!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 5:
                raise IngestError(f"line {line_no}: expected 5 fields, got {len(row)}")
            pid, age_text, ecmo_type, start_text, end_text = (f.strip() for f in row)
            age = _parse_float(age_text, line_no, "age_years")
            if ecmo_type not in ECMO_TYPES:
                raise IngestError(f"line {line_no}: ecmo_type must be one of {ECMO_TYPES}, got {ecmo_type!r}")
            try:
                start, end = int(start_text), int(end_text)
            except ValueError:
                raise IngestError(f"line {line_no}: non-integer on-ecmo bounds") from None
            if pid in metas:
                raise IngestError(f"line {line_no}: duplicate patient_id {pid!r}")
            metas[pid] = PatientMeta(pid, age, ecmo_type, start, end)
    return metas


def windowize(
    records: list[RawRecord],
    meta: PatientMeta,
    window_minutes: int = 60,
) -> list[ObservationWindow]:
    """Bucket one patient's records into contiguous windows and average.

    Window t covers timestamps in [t*w, (t+1)*w); timestamps are minutes
    since trajectory start, so window 0 starts at t=0.  Windows with no
    records at all are still emitted (imputation fills them later).
    """
    if window_minutes <= 0:
        raise ValueError("window_minutes must be positive")
    if not records:
        return []
    last_hour = records[-1].timestamp // window_minutes
    sums: list[dict[str, float]] = [dict() for _ in range(last_hour + 1)]
    counts: list[dict[str, int]] = [dict() for _ in range(last_hour + 1)]
    prev_ts = -1
    for rec in records:
        if rec.timestamp < prev_ts:
            raise ValueError("records must be sorted by timestamp within a patient")
        prev_ts = rec.timestamp
        h = rec.timestamp // window_minutes
        sums[h][rec.variable] = sums[h].get(rec.variable, 0.0) + rec.value
        counts[h][rec.variable] = counts[h].get(rec.variable, 0) + 1
    windows = []
    for h in range(last_hour + 1):
        mid = (h + 0.5) * window_minutes
        windows.append(ObservationWindow(
            patient_id=meta.patient_id,
            hour_index=h,
            means={v: sums[h][v] / counts[h][v] for v in sums[h]},
            coverage=dict(counts[h]),
            ecmo_type=meta.ecmo_type,
            on_ecmo=meta.on_ecmo_start_min <= mid < meta.on_ecmo_end_min,
        ))
    return windows


def fallback_means(
    windows_by_patient: dict[str, list[ObservationWindow]],
    registry: VariableRegistry,
) -> dict[str, float]:
    """Per-variable mean of observed windowed means across the given patients.

    Used to fill windows that precede a variable's first observation.  Callers
    decide which patients contribute (e.g. only an evaluation fold's training
    split) so that no statistic leaks from held-out trajectories.
    """
    totals = {name: 0.0 for name in registry.names}
    n = {name: 0 for name in registry.names}
    for windows in windows_by_patient.values():
        for w in windows:
            for v, m in w.means.items():
                totals[v] += m
                n[v] += 1
    return {v: totals[v] / n[v] for v in totals if n[v] > 0}


def impute_windows(
    windows: list[ObservationWindow],
    registry: VariableRegistry,
    fallback: dict[str, float],
) -> tuple[list[ObservationWindow], ImputationStats]:
    """Complete every window so each registry variable has a value.

    Forward-fill from the most recent prior window; windows before the first
    observation take the fallback mean for that variable.
    """
    stats = ImputationStats()
    out: list[ObservationWindow] = []
    last: dict[str, float] = {}
    for w in windows:
        means = dict(w.means)
        for var in registry.names:
            if var in means:
                last[var] = means[var]
            elif var in last:
                means[var] = last[var]
                stats.forward_filled += 1
            else:
                if var not in fallback:
                    raise IngestError(
                        f"variable {var!r} has no observed values anywhere; cannot impute"
                    )
                means[var] = fallback[var]
                stats.fallback_filled += 1
        out.append(ObservationWindow(
            patient_id=w.patient_id,
            hour_index=w.hour_index,
            means=means,
            coverage=dict(w.coverage),
            ecmo_type=w.ecmo_type,
            on_ecmo=w.on_ecmo,
        ))
    return out, stats


def age_normalize(value: float, variable: str, age_years: float, table: AgeNormTable) -> float:
    """Z-score a value against the age bracket containing age_years."""
    mean, sd = table.params_for(variable, age_years)
    return (value - mean) / sd


def featurize(
    windows: list[ObservationWindow],
    age_years: float,
    registry: VariableRegistry,
    table: AgeNormTable,
) -> list[StateVector]:
    """Turn imputed windows into per-hour state vectors.

    Each vector interleaves (value, delta-vs-previous-window) per registry
    variable, then appends the ECMO-type code and the on-ecmo flag.  The first
    window is dropped: it has no previous window, so no honest delta exists.
    Age-normalized variables are z-scored before the delta is taken, so both
    their value and delta entries are on the normalized scale.
    """
    if len(windows) < 2:
        return []
    names = registry.feature_names()
    n_vars = len(registry)
    values = np.empty((len(windows), n_vars), dtype=np.float64)
    for i, w in enumerate(windows):
        if i > 0 and w.hour_index != windows[i - 1].hour_index + 1:
            raise ValueError(
                f"windows must be contiguous; got hour {w.hour_index} after {windows[i - 1].hour_index}"
            )
        for j, spec in enumerate(registry.entries):
            if spec.name not in w.means:
                raise IngestError(
                    f"window {w.hour_index} of patient {w.patient_id} missing variable "
                    f"{spec.name!r}; run imputation first"
                )
            v = w.means[spec.name]
            if spec.age_normalized:
                v = age_normalize(v, spec.name, age_years, table)
            values[i, j] = v
    out = []
    for i in range(1, len(windows)):
        w = windows[i]
        feats = np.empty(2 * n_vars + 2, dtype=np.float64)
        feats[0:2 * n_vars:2] = values[i]
        feats[1:2 * n_vars:2] = values[i] - values[i - 1]
        feats[2 * n_vars] = ECMO_TYPE_CODE[w.ecmo_type]
        feats[2 * n_vars + 1] = 1.0 if w.on_ecmo else 0.0
        if not np.all(np.isfinite(feats)):
            bad = names[int(np.flatnonzero(~np.isfinite(feats))[0])]
            raise IngestError(
                f"non-finite feature {bad!r} at hour {w.hour_index} of patient {w.patient_id}"
            )
        out.append(StateVector(w.patient_id, w.hour_index, feats, names))
    return out


def load_cohort(
    trajectory_path,
    metadata_path,
    registry: VariableRegistry,
    window_minutes: int = 60,
) -> Cohort:
    """Parse and windowize a dataset directory's CSV pair."""
    groups = parse_trajectory_file(trajectory_path, registry)
    metas = parse_metadata_file(metadata_path)
    missing = sorted(set(groups) - set(metas))
    if missing:
        raise IngestError(f"patients missing from metadata file: {', '.join(missing)}")
    cohort = Cohort()
    for pid, records in groups.items():
        meta = metas[pid]
        cohort.patients[pid] = PatientData(pid, meta, windowize(records, meta, window_minutes))
    return cohort


def ingestion_report(
    cohort: Cohort,
    stats_by_patient: dict[str, ImputationStats],
) -> str:
    lines = ["Ingestion report", "================", ""]
    lines.append(f"{'patient':<12}{'windows':>9}{'fwd-filled':>12}{'mean-filled':>13}")
    total = ImputationStats()
    for pid in cohort.patient_ids:
        st = stats_by_patient.get(pid, ImputationStats())
        total = total.merged(st)
        lines.append(f"{pid:<12}{len(cohort.patients[pid].windows):>9}{st.forward_filled:>12}{st.fallback_filled:>13}")
    lines.append("")
    lines.append(f"total patients: {len(cohort)}")
    lines.append(f"total forward-filled values: {total.forward_filled}")
    lines.append(f"total fallback-mean-filled values: {total.fallback_filled}")
    return "\n".join(lines) + "\n"
