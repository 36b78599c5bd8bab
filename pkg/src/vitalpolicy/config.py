"""One human-editable YAML configuration shared by every subcommand.

It covers the variable registry, age-normalization table, knob thresholds,
backend hyperparameters, simulator settings, and evaluation options.  Any
section omitted from a user file keeps its built-in default.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .labeler import ActionLabel, KnobSpec, default_knobs
from .learners import ClassifierBackendSpec
from .registry import (
    AgeBracket,
    AgeNormTable,
    VariableRegistry,
    VariableSpec,
    default_age_table,
    default_registry,
)
from .simulator import (
    ClinicianRule,
    SimConfig,
    VariableDynamics,
    default_sim_config,
)


@dataclass
class ToolConfig:
    registry: VariableRegistry
    age_table: AgeNormTable
    knobs: list[KnobSpec]
    backends: dict[str, dict] = field(default_factory=dict)
    simulator: SimConfig = field(default_factory=default_sim_config)
    window_minutes: int = 60
    ece_bins: int = 10
    disagreement_min_leaf: int = 20
    disagreement_max_depth: int = 3

    def backend_spec(self, kind: str, seed: int) -> ClassifierBackendSpec:
        return ClassifierBackendSpec(kind, dict(self.backends.get(kind, {})), seed)

    def validate(self) -> None:
        for knob in self.knobs:
            if knob.name not in self.registry:
                raise ValueError(f"knob {knob.name!r} is not a registry variable")
        self.simulator.validate(self.registry, self.knobs)


def default_config() -> ToolConfig:
    return ToolConfig(
        registry=default_registry(),
        age_table=default_age_table(),
        knobs=default_knobs(),
        backends={},
        simulator=default_sim_config(),
    )


def _registry_from(payload) -> VariableRegistry:
    entries = [
        VariableSpec(
            name=str(row["name"]),
            unit=str(row.get("unit", "-")),
            category=str(row["category"]),
            age_normalized=bool(row.get("age_normalized", False)),
        )
        for row in payload
    ]
    return VariableRegistry(entries)


def _age_table_from(payload) -> AgeNormTable:
    brackets = [
        AgeBracket(
            float(row["age_lo"]), float(row["age_hi"]),
            float(row["hr_mean"]), float(row["hr_sd"]),
            float(row["artm_mean"]), float(row["artm_sd"]),
        )
        for row in payload
    ]
    return AgeNormTable(brackets)


def _knobs_from(payload) -> list[KnobSpec]:
    return [
        KnobSpec(str(row["name"]), float(row["threshold"]),
                 int(row.get("window_minutes", 60)))
        for row in payload
    ]


def _simulator_from(payload, base: SimConfig) -> SimConfig:
    dynamics = dict(base.dynamics)
    for name, row in (payload.get("dynamics") or {}).items():
        dynamics[str(name)] = VariableDynamics(
            float(row["baseline"]), float(row["noise_sd"]), float(row["reversion"])
        )
    rules = base.rules
    if "rules" in payload:
        rules = [
            ClinicianRule(
                knob=str(row["knob"]),
                conditions=tuple(
                    (str(c["variable"]), str(c["op"]), float(c["threshold"]))
                    for c in row.get("conditions", [])
                ),
                response=ActionLabel.from_token(str(row["response"])),
                fire_probability=float(row.get("fire_probability", 1.0)),
            )
            for row in payload["rules"]
        ]
    effects = dict(base.effects)
    effects.update({str(k): float(v) for k, v in (payload.get("effects") or {}).items()})
    return SimConfig(
        n_patients=int(payload.get("n_patients", base.n_patients)),
        hours_mean=int(payload.get("hours_mean", base.hours_mean)),
        hours_jitter=int(payload.get("hours_jitter", base.hours_jitter)),
        seed=int(payload.get("seed", base.seed)),
        dynamics=dynamics,
        rules=rules,
        effects=effects,
        label_noise=float(payload.get("label_noise", base.label_noise)),
        lab_every_hours=int(payload.get("lab_every_hours", base.lab_every_hours)),
        age_lo=float(payload.get("age_lo", base.age_lo)),
        age_hi=float(payload.get("age_hi", base.age_hi)),
    )


def load_config(path=None) -> ToolConfig:
    """Built-in defaults, overlaid with whatever sections the file provides."""
    cfg = default_config()
    if path is None:
        return cfg
    with open(path, encoding="utf-8") as fh:
        payload = yaml.safe_load(fh) or {}
    if not isinstance(payload, dict):
        raise ValueError(f"{path}: config root must be a mapping")
    if "registry" in payload:
        cfg.registry = _registry_from(payload["registry"])
    if "age_table" in payload:
        cfg.age_table = _age_table_from(payload["age_table"])
    if "knobs" in payload:
        cfg.knobs = _knobs_from(payload["knobs"])
    if "backends" in payload:
        cfg.backends = {str(k): dict(v or {}) for k, v in payload["backends"].items()}
    if "simulator" in payload:
        cfg.simulator = _simulator_from(payload["simulator"], cfg.simulator)
    if "window_minutes" in payload:
        cfg.window_minutes = int(payload["window_minutes"])
    if "ece_bins" in payload:
        cfg.ece_bins = int(payload["ece_bins"])
    if "disagreement_min_leaf" in payload:
        cfg.disagreement_min_leaf = int(payload["disagreement_min_leaf"])
    if "disagreement_max_depth" in payload:
        cfg.disagreement_max_depth = int(payload["disagreement_max_depth"])
    cfg.validate()
    return cfg


def dump_config(cfg: ToolConfig) -> str:
    """Render a config back to YAML (the shipped default file is this output)."""
    payload = {
        "registry": [
            {"name": e.name, "unit": e.unit, "category": e.category,
             "age_normalized": e.age_normalized}
            for e in cfg.registry.entries
        ],
        "age_table": [
            {"age_lo": b.age_lo, "age_hi": b.age_hi, "hr_mean": b.hr_mean,
             "hr_sd": b.hr_sd, "artm_mean": b.artm_mean, "artm_sd": b.artm_sd}
            for b in cfg.age_table.brackets
        ],
        "knobs": [
            {"name": k.name, "threshold": k.threshold, "window_minutes": k.window_minutes}
            for k in cfg.knobs
        ],
        "backends": cfg.backends,
        "simulator": {
            "n_patients": cfg.simulator.n_patients,
            "hours_mean": cfg.simulator.hours_mean,
            "hours_jitter": cfg.simulator.hours_jitter,
            "seed": cfg.simulator.seed,
            "label_noise": cfg.simulator.label_noise,
            "lab_every_hours": cfg.simulator.lab_every_hours,
            "age_lo": cfg.simulator.age_lo,
            "age_hi": cfg.simulator.age_hi,
            "dynamics": {
                name: {"baseline": d.baseline, "noise_sd": d.noise_sd, "reversion": d.reversion}
                for name, d in cfg.simulator.dynamics.items()
            },
            "rules": [
                {
                    "knob": r.knob,
                    "conditions": [
                        {"variable": v, "op": op, "threshold": thr}
                        for v, op, thr in r.conditions
                    ],
                    "response": r.response.value,
                    "fire_probability": r.fire_probability,
                }
                for r in cfg.simulator.rules
            ],
            "effects": cfg.simulator.effects,
        },
        "window_minutes": cfg.window_minutes,
        "ece_bins": cfg.ece_bins,
        "disagreement_min_leaf": cfg.disagreement_min_leaf,
        "disagreement_max_depth": cfg.disagreement_max_depth,
    }
    return yaml.safe_dump(payload, sort_keys=False, allow_unicode=True)
