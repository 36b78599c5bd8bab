"""Synthetic bedside trajectories with a known scripted clinician.

Variables follow first-order mean-reverting noise; a configurable rule set
fires knob adjustments whose effects land across window boundaries so the
threshold labeler can recover them exactly.  This is a verification oracle
and demo environment, deliberately not a physiological model.

Determinism contract: everything derives from the config seed; per-patient
streams are independent, so generation order cannot change the output.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .labeler import ActionLabel, KnobSpec
from .registry import VariableRegistry


@dataclass(frozen=True)
class VariableDynamics:
    baseline: float
    noise_sd: float
    reversion: float  # fraction of the gap to baseline closed per hour

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if not 0.0 <= self.reversion <= 1.0:
            raise ValueError("reversion must be in [0, 1]")


@dataclass(frozen=True)
class ClinicianRule:
    """Fire `response` on `knob` when every (variable, op, threshold) holds."""
    knob: str
    conditions: tuple[tuple[str, str, float], ...]
    response: ActionLabel
    fire_probability: float = 1.0

    def __post_init__(self):
        if self.response not in (ActionLabel.INCREASE, ActionLabel.DECREASE):
            raise ValueError("rule response must be Increase or Decrease")
        if not 0.0 <= self.fire_probability <= 1.0:
            raise ValueError("fire_probability must be in [0, 1]")
        for _, op, _ in self.conditions:
            if op not in ("<", ">"):
                raise ValueError(f"condition operator must be '<' or '>', got {op!r}")

    def triggered(self, observed: dict[str, float]) -> bool:
        for var, op, thr in self.conditions:
            v = observed.get(var)
            if v is None:  # lab not observed yet: the clinician cannot act on it
                return False
            if op == "<" and not v < thr:
                return False
            if op == ">" and not v > thr:
                return False
        return True


@dataclass
class SimConfig:
    n_patients: int = 30
    hours_mean: int = 120
    hours_jitter: int = 40
    seed: int = 7
    dynamics: dict[str, VariableDynamics] = field(default_factory=dict)
    rules: list[ClinicianRule] = field(default_factory=list)
    effects: dict[str, float] = field(default_factory=dict)
    label_noise: float = 0.0
    lab_every_hours: int = 6
    age_lo: float = 0.2
    age_hi: float = 17.5

    def validate(self, registry: VariableRegistry, knobs: list[KnobSpec]) -> None:
        if self.n_patients < 1:
            raise ValueError("n_patients must be >= 1")
        if self.hours_mean - self.hours_jitter < 4:
            raise ValueError("trajectories must span at least 4 hours")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValueError("label_noise must be in [0, 1)")
        if self.lab_every_hours < 1:
            raise ValueError("lab_every_hours must be >= 1")
        for name in registry.names:
            if name not in self.dynamics:
                raise ValueError(f"no dynamics configured for variable {name!r}")
        for knob in knobs:
            effect = self.effects.get(knob.name)
            if effect is None:
                raise ValueError(f"no action effect configured for knob {knob.name!r}")
            if not abs(effect) > knob.threshold:
                raise ValueError(
                    f"knob {knob.name!r}: effect magnitude {abs(effect)} must exceed "
                    f"threshold {knob.threshold} so planted actions are recoverable"
                )
        for rule in self.rules:
            if rule.knob not in {k.name for k in knobs}:
                raise ValueError(f"rule references unknown knob {rule.knob!r}")
            for var, _, _ in rule.conditions:
                if var not in registry:
                    raise ValueError(f"rule condition references unknown variable {var!r}")


# Sparse-emission laboratory variables: sampled every `lab_every_hours`, with a
# per-patient phase so some trajectories have leading gaps.  Knob variables are
# always emitted hourly, otherwise planted actions would be invisible.
SPARSE_LAB_VARIABLES = ("pH", "BaseExcess", "Lactate", "IonCa", "TotalCO2", "INR")


def default_dynamics() -> dict[str, VariableDynamics]:
    # knob variables (PO2, PCO2, SpO2, FiO2) move slowly and quietly so that
    # planted action effects dominate their hour-to-hour deltas; the trigger
    # variables (rSO2, labs) revert fast so rule crossings are crisp
    d = {
        "ARTm": VariableDynamics(65.0, 3.0, 0.25),
        "HR": VariableDynamics(110.0, 4.0, 0.25),
        "SpO2": VariableDynamics(93.0, 0.4, 0.02),
        "rSO2-1": VariableDynamics(70.0, 3.0, 0.25),
        "rSO2-2": VariableDynamics(68.0, 3.0, 0.25),
        "BloodFlow": VariableDynamics(100.0, 4.0, 0.3),
        "SweepCO2Flow": VariableDynamics(0.5, 0.05, 0.3),
        "SweepO2Flow": VariableDynamics(1.0, 0.08, 0.3),
        "FiO2ECMO": VariableDynamics(60.0, 2.0, 0.3),
        "VolumeSensor": VariableDynamics(10.0, 1.0, 0.3),
        "PAW": VariableDynamics(12.0, 0.8, 0.3),
        "PEEP": VariableDynamics(7.0, 0.4, 0.3),
        "FiO2": VariableDynamics(45.0, 0.5, 0.02),
        "TidalVolume": VariableDynamics(6.0, 0.4, 0.3),
        "etCO2": VariableDynamics(38.0, 2.0, 0.25),
        "PO2": VariableDynamics(85.0, 1.5, 0.02),
        "PCO2": VariableDynamics(45.0, 0.3, 0.02),
        "pH": VariableDynamics(7.38, 0.03, 0.25),
        "BaseExcess": VariableDynamics(0.0, 1.0, 0.25),
        "Lactate": VariableDynamics(1.8, 0.35, 0.2),
        "IonCa": VariableDynamics(1.2, 0.05, 0.3),
        "TotalCO2": VariableDynamics(24.0, 1.0, 0.3),
        "INR": VariableDynamics(1.2, 0.08, 0.3),
    }
    return d


def default_rules(fire_probability: float = 1.0) -> list[ClinicianRule]:
    """Two rules per knob, each driven by a fast-reverting trigger variable.

    The knob-bound guard conditions sit between the value clusters the action
    kicks create, so guard boundaries rarely coincide with observed states.
    """
    p = fire_probability
    return [
        ClinicianRule("PO2", (("Lactate", ">", 2.3), ("PO2", "<", 110.0)), ActionLabel.INCREASE, p),
        ClinicianRule("PO2", (("Lactate", "<", 1.5), ("PO2", ">", 110.0)), ActionLabel.DECREASE, p),
        ClinicianRule("PCO2", (("pH", ">", 7.43), ("PCO2", "<", 50.0)), ActionLabel.INCREASE, p),
        ClinicianRule("PCO2", (("pH", "<", 7.33), ("PCO2", ">", 40.0)), ActionLabel.DECREASE, p),
        ClinicianRule("SpO2", (("rSO2-1", "<", 63.0), ("SpO2", "<", 98.0)), ActionLabel.INCREASE, p),
        ClinicianRule("SpO2", (("rSO2-1", ">", 77.0), ("SpO2", ">", 88.0)), ActionLabel.DECREASE, p),
        ClinicianRule("FiO2", (("rSO2-2", "<", 61.0), ("FiO2", "<", 55.0)), ActionLabel.INCREASE, p),
        ClinicianRule("FiO2", (("rSO2-2", ">", 75.0), ("FiO2", ">", 35.0)), ActionLabel.DECREASE, p),
    ]


def default_effects() -> dict[str, float]:
    # twice each knob's labeling threshold: comfortably recoverable
    return {"PO2": 50.0, "PCO2": 10.0, "SpO2": 10.0, "FiO2": 20.0}


def default_sim_config(seed: int = 7) -> SimConfig:
    return SimConfig(
        dynamics=default_dynamics(),
        rules=default_rules(),
        effects=default_effects(),
        seed=seed,
    )


def step(
    state: dict[str, float],
    actions: dict[str, ActionLabel],
    config: SimConfig,
    rng: np.random.Generator,
    registry: VariableRegistry,
) -> dict[str, float]:
    """One hour of dynamics: mean-reverting noise plus chosen action effects."""
    nxt = {}
    for name in registry.names:
        dyn = config.dynamics[name]
        x = state[name]
        x = x + dyn.reversion * (dyn.baseline - x) + dyn.noise_sd * rng.standard_normal()
        action = actions.get(name, ActionLabel.SAME)
        if action == ActionLabel.INCREASE:
            x += config.effects[name]
        elif action == ActionLabel.DECREASE:
            x -= config.effects[name]
        nxt[name] = x
    return nxt


@dataclass
class SimResult:
    trajectory_csv: str
    metadata_csv: str
    actions_csv: str
    actions: list[tuple[str, int, str, str]]  # (patient_id, hour, knob, INC/DEC)


def _simulate_patient(
    pid: str,
    pid_index: int,
    rng: np.random.Generator,
    config: SimConfig,
    registry: VariableRegistry,
    knobs: list[KnobSpec],
    traj_writer,
    actions: list,
):
    hours = int(rng.integers(config.hours_mean - config.hours_jitter,
                             config.hours_mean + config.hours_jitter + 1))
    age = float(rng.uniform(config.age_lo, config.age_hi))
    ecmo_type = "VA" if rng.random() < 0.6 else "VV"
    weaned = rng.random() < 0.2
    on_ecmo_end = int(hours * 0.8) * 60 if weaned else hours * 60

    lab_phase = pid_index % config.lab_every_hours
    knob_names = [k.name for k in knobs]
    state = {
        name: config.dynamics[name].baseline + config.dynamics[name].noise_sd * rng.standard_normal()
        for name in registry.names
    }
    observed: dict[str, float] = {}

    for t in range(hours):
        for name in registry.names:
            sparse = name in SPARSE_LAB_VARIABLES and name not in knob_names
            if sparse and (t < lab_phase or (t - lab_phase) % config.lab_every_hours != 0):
                continue
            observed[name] = state[name]
            traj_writer.writerow([pid, t * 60, name, repr(float(state[name]))])
        if t == hours - 1:
            break
        # the scripted clinician reads last-observed values, exactly what the
        # forward-filled features will show the learned policy
        fired: dict[str, ActionLabel] = {}
        if t >= 1:  # hour 0 has no sample downstream (its state has no delta)
            for knob in knob_names:
                for rule in config.rules:
                    if rule.knob != knob or not rule.triggered(observed):
                        continue
                    if rng.random() < rule.fire_probability:
                        fired[knob] = rule.response
                        actions.append((pid, t, knob, rule.response.value))
                    break  # first triggered rule per knob owns this hour
            if config.label_noise > 0.0:
                for knob in knob_names:
                    if knob in fired:
                        continue
                    if rng.random() < config.label_noise:
                        # spurious, unlogged intervention: label/state mismatch
                        fired[knob] = (ActionLabel.INCREASE if rng.random() < 0.5
                                       else ActionLabel.DECREASE)
        state = step(state, fired, config, rng, registry)
    return age, ecmo_type, on_ecmo_end, hours


def simulate(
    config: SimConfig,
    registry: VariableRegistry,
    knobs: list[KnobSpec],
) -> SimResult:
    """Generate the cohort; byte-identical output for a given config."""
    config.validate(registry, knobs)
    ss = np.random.SeedSequence(config.seed)
    children = ss.spawn(config.n_patients)

    traj_buf = io.StringIO()
    meta_buf = io.StringIO()
    act_buf = io.StringIO()
    traj_writer = csv.writer(traj_buf, lineterminator="\n")
    meta_writer = csv.writer(meta_buf, lineterminator="\n")
    act_writer = csv.writer(act_buf, lineterminator="\n")
    traj_writer.writerow(["patient_id", "timestamp_min", "variable", "value"])
    meta_writer.writerow(["patient_id", "age_years", "ecmo_type", "on_ecmo_start_min", "on_ecmo_end_min"])
    act_writer.writerow(["patient_id", "hour", "knob", "action"])

    actions: list[tuple[str, int, str, str]] = []
    width = len(str(max(config.n_patients - 1, 1)))
    for i in range(config.n_patients):
        pid = f"P{i:0{width}d}"
        rng = np.random.default_rng(children[i])
        age, ecmo_type, on_ecmo_end, _hours = _simulate_patient(
            pid, i, rng, config, registry, knobs, traj_writer, actions
        )
        meta_writer.writerow([pid, repr(round(age, 2)), ecmo_type, 0, on_ecmo_end])
    for row in actions:
        act_writer.writerow(row)
    return SimResult(traj_buf.getvalue(), meta_buf.getvalue(), act_buf.getvalue(), actions)


def write_simulation(result: SimResult, out_dir) -> dict[str, str]:
    """Write the standard dataset file trio; returns name -> path."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, content in [
        ("trajectories.csv", result.trajectory_csv),
        ("patients.csv", result.metadata_csv),
        ("actions.csv", result.actions_csv),
    ]:
        p = out / name
        p.write_text(content, encoding="utf-8")
        paths[name] = str(p)
    return paths
