"""Threshold-based action labeling over consecutive observation windows.

An action on a knob is inferred when its windowed mean moves by more than the
knob's threshold between consecutive windows; ties at exactly the threshold
are Same (strict inequalities).
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .ingest import IngestError, ObservationWindow, StateVector


class ActionLabel(enum.Enum):
    SAME = "SAME"
    INCREASE = "INC"
    DECREASE = "DEC"

    @classmethod
    def from_token(cls, token: str) -> "ActionLabel":
        for m in cls:
            if m.value == token:
                return m
        raise ValueError(f"unknown action token {token!r}")


@dataclass(frozen=True)
class KnobSpec:
    """An actionable variable with its change threshold."""
    name: str
    threshold: float
    window_minutes: int = 60

    def __post_init__(self):
        if not (self.threshold > 0):
            raise ValueError(f"knob {self.name!r}: threshold must be positive")
        if self.window_minutes <= 0:
            raise ValueError(f"knob {self.name!r}: window_minutes must be positive")


def default_knobs() -> list[KnobSpec]:
    return [
        KnobSpec("PO2", 25.0),
        KnobSpec("PCO2", 5.0),
        KnobSpec("SpO2", 5.0),
        KnobSpec("FiO2", 10.0),
    ]


@dataclass
class LabeledSample:
    patient_id: str
    hour_index: int
    state: StateVector
    actions: dict[str, ActionLabel]


def label_knob(x_t: float, x_next: float, spec: KnobSpec) -> ActionLabel:
    """Increase iff the delta exceeds the threshold, Decrease iff it falls
    below its negative; anything in between (ties included) is Same."""
    if not (math.isfinite(x_t) and math.isfinite(x_next)):
        raise ValueError(f"knob {spec.name!r}: non-finite value in ({x_t}, {x_next})")
    delta = x_next - x_t
    if delta > spec.threshold:
        return ActionLabel.INCREASE
    if delta < -spec.threshold:
        return ActionLabel.DECREASE
    return ActionLabel.SAME


def build_dataset(
    states: list[StateVector],
    windows: list[ObservationWindow],
    knobs: list[KnobSpec],
) -> list[LabeledSample]:
    """Pair each state s_t with labels computed from windows t and t+1.

    Windows must already be imputation-complete.  The final window of each
    patient yields no sample (there is no t+1 to diff against).
    """
    win_by_key = {(w.patient_id, w.hour_index): w for w in windows}
    samples = []
    for st in states:
        cur = win_by_key.get((st.patient_id, st.hour_index))
        nxt = win_by_key.get((st.patient_id, st.hour_index + 1))
        if cur is None:
            raise ValueError(f"no window for state at ({st.patient_id}, {st.hour_index})")
        if nxt is None:
            continue  # last state of the patient is unpaired
        actions = {}
        for knob in knobs:
            if knob.name not in cur.means or knob.name not in nxt.means:
                raise IngestError(
                    f"knob variable {knob.name!r} missing from window "
                    f"{st.hour_index} or {st.hour_index + 1} of patient {st.patient_id}"
                )
            actions[knob.name] = label_knob(cur.means[knob.name], nxt.means[knob.name], knob)
        samples.append(LabeledSample(st.patient_id, st.hour_index, st, actions))
    return samples


def class_balance(samples: list[LabeledSample]) -> dict[str, dict[ActionLabel, int]]:
    """Per-knob counts of each action label."""
    if not samples:
        return {}
    counts: dict[str, dict[ActionLabel, int]] = {}
    for knob_name in samples[0].actions:
        counts[knob_name] = {label: 0 for label in ActionLabel}
    for s in samples:
        for knob_name, label in s.actions.items():
            counts[knob_name][label] += 1
    return counts


def class_balance_report(samples: list[LabeledSample]) -> str:
    counts = class_balance(samples)
    lines = ["Class balance report", "====================", ""]
    lines.append(f"samples: {len(samples)}")
    lines.append("")
    lines.append(f"{'knob':<10}{'INC':>8}{'DEC':>8}{'SAME':>8}{'%same':>8}")
    for knob_name, c in counts.items():
        n = sum(c.values())
        pct = 100.0 * c[ActionLabel.SAME] / n if n else 0.0
        lines.append(
            f"{knob_name:<10}{c[ActionLabel.INCREASE]:>8}{c[ActionLabel.DECREASE]:>8}"
            f"{c[ActionLabel.SAME]:>8}{pct:>8.1f}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class LabeledDataset:
    """Flat labeled samples plus the feature layout they share."""
    feature_names: list[str]
    knob_names: list[str]
    samples: list[LabeledSample] = field(default_factory=list)

    def by_patient(self) -> dict[str, list[LabeledSample]]:
        out: dict[str, list[LabeledSample]] = {}
        for s in self.samples:
            out.setdefault(s.patient_id, []).append(s)
        return dict(sorted(out.items()))

    def matrix(self) -> np.ndarray:
        return np.stack([s.state.features for s in self.samples]) if self.samples else \
            np.empty((0, len(self.feature_names)))


def write_labeled_csv(path, dataset: LabeledDataset) -> None:
    """One row per sample: ids, named feature columns, one label col per knob."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["patient_id", "hour"]
            + dataset.feature_names
            + [f"action_{k}" for k in dataset.knob_names]
        )
        for s in dataset.samples:
            writer.writerow(
                [s.patient_id, s.hour_index]
                + [repr(float(v)) for v in s.state.features]
                + [s.actions[k].value for k in dataset.knob_names]
            )


def read_labeled_csv(path) -> LabeledDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty labeled dataset") from None
        if header[:2] != ["patient_id", "hour"]:
            raise IngestError(f"{path}: not a labeled dataset CSV")
        knob_cols = [(i, h[len("action_"):]) for i, h in enumerate(header) if h.startswith("action_")]
        if not knob_cols:
            raise IngestError(f"{path}: no action columns found")
        first_knob_col = knob_cols[0][0]
        feature_names = header[2:first_knob_col]
        dataset = LabeledDataset(feature_names, [k for _, k in knob_cols])
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}: line {line_no}: wrong field count")
            feats = np.array([float(v) for v in row[2:first_knob_col]], dtype=np.float64)
            state = StateVector(row[0], int(row[1]), feats, feature_names)
            actions = {k: ActionLabel.from_token(row[i]) for i, k in knob_cols}
            dataset.samples.append(LabeledSample(row[0], int(row[1]), state, actions))
    return dataset
