"""Variable registry and age-normalization reference table.

The registry fixes which telemetry variables exist, their order (which in
turn fixes the feature layout), and which of them are age-normalized.
"""
from __future__ import annotations

from dataclasses import dataclass


CATEGORIES = ("Hemodynamics", "ECMO Circuit", "Ventilator", "Laboratory")

ECMO_TYPES = ("VV", "VA")
ECMO_TYPE_CODE = {"VV": 0.0, "VA": 1.0}

DELTA_PREFIX = "Δ"  # "Δ"
ECMO_TYPE_FEATURE = "ECMOType"
ON_ECMO_FEATURE = "OnECMO"


@dataclass(frozen=True)
class VariableSpec:
    name: str
    unit: str
    category: str
    age_normalized: bool = False


class VariableRegistry:
    """Ordered set of telemetry variables; order defines the feature layout."""

    def __init__(self, entries: list[VariableSpec]):
        if not entries:
            raise ValueError("variable registry must not be empty")
        names = [e.name for e in entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names in registry")
        for e in entries:
            if e.category not in CATEGORIES:
                raise ValueError(f"unknown category {e.category!r} for variable {e.name!r}")
        self.entries = list(entries)
        self._by_name = {e.name: e for e in entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self.entries)

    def get(self, name: str) -> VariableSpec:
        return self._by_name[name]

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def feature_names(self) -> list[str]:
        """Value/delta pair per variable, then ECMO type and on-ecmo flags."""
        out: list[str] = []
        for e in self.entries:
            out.append(e.name)
            out.append(DELTA_PREFIX + e.name)
        out.append(ECMO_TYPE_FEATURE)
        out.append(ON_ECMO_FEATURE)
        return out

    @property
    def feature_count(self) -> int:
        return 2 * len(self.entries) + 2


@dataclass(frozen=True)
class AgeBracket:
    age_lo: float
    age_hi: float
    hr_mean: float
    hr_sd: float
    artm_mean: float
    artm_sd: float


class AgeNormTable:
    """Age-bracketed reference means/sds for HR and ARTm z-scoring.

    Brackets must be contiguous, non-overlapping and cover [0, 18) years.
    The shipped defaults are a documented stand-in, editable in the config
    file without code changes.
    """

    def __init__(self, brackets: list[AgeBracket]):
        if not brackets:
            raise ValueError("age table must not be empty")
        brackets = sorted(brackets, key=lambda b: b.age_lo)
        if brackets[0].age_lo != 0.0 or brackets[-1].age_hi != 18.0:
            raise ValueError("age brackets must cover [0, 18) years")
        for a, b in zip(brackets, brackets[1:]):
            if a.age_hi != b.age_lo:
                raise ValueError("age brackets must be contiguous and non-overlapping")
        for b in brackets:
            if b.age_hi <= b.age_lo:
                raise ValueError("empty age bracket")
            if b.hr_sd <= 0 or b.artm_sd <= 0:
                raise ValueError("age bracket sds must be positive")
        self.brackets = brackets

    def bracket_for(self, age_years: float) -> AgeBracket:
        if not 0.0 <= age_years < 18.0:
            raise ValueError(f"age {age_years} outside table coverage [0, 18)")
        for b in self.brackets:
            if b.age_lo <= age_years < b.age_hi:
                return b
        raise ValueError(f"age {age_years} outside table coverage [0, 18)")

    def params_for(self, variable: str, age_years: float) -> tuple[float, float]:
        b = self.bracket_for(age_years)
        if variable == "HR":
            return b.hr_mean, b.hr_sd
        if variable == "ARTm":
            return b.artm_mean, b.artm_sd
        raise ValueError(f"no age-normalization parameters for variable {variable!r}")


def default_registry() -> VariableRegistry:
    """The 23-variable bedside panel: hemodynamics, circuit, ventilator, labs."""
    h, c, v, l = CATEGORIES
    return VariableRegistry([
        VariableSpec("ARTm", "mmHg", h, age_normalized=True),
        VariableSpec("HR", "bpm", h, age_normalized=True),
        VariableSpec("SpO2", "%", h),
        VariableSpec("rSO2-1", "%", h),
        VariableSpec("rSO2-2", "%", h),
        VariableSpec("BloodFlow", "mL/kg/min", c),
        VariableSpec("SweepCO2Flow", "L/min", c),
        VariableSpec("SweepO2Flow", "L/min", c),
        VariableSpec("FiO2ECMO", "%", c),
        VariableSpec("VolumeSensor", "mmHg", c),
        VariableSpec("PAW", "cmH2O", v),
        VariableSpec("PEEP", "cmH2O", v),
        VariableSpec("FiO2", "%", v),
        VariableSpec("TidalVolume", "mL/kg", v),
        VariableSpec("etCO2", "mmHg", v),
        VariableSpec("PO2", "mmHg", l),
        VariableSpec("PCO2", "mmHg", l),
        VariableSpec("pH", "-", l),
        VariableSpec("BaseExcess", "mmol/L", l),
        VariableSpec("Lactate", "mmol/L", l),
        VariableSpec("IonCa", "mmol/L", l),
        VariableSpec("TotalCO2", "mEq/L", l),
        VariableSpec("INR", "-", l),
    ])


def default_age_table() -> AgeNormTable:
    return AgeNormTable([
        AgeBracket(0.0, 1.0, 130.0, 20.0, 55.0, 12.0),
        AgeBracket(1.0, 3.0, 115.0, 18.0, 60.0, 12.0),
        AgeBracket(3.0, 6.0, 100.0, 15.0, 65.0, 12.0),
        AgeBracket(6.0, 12.0, 90.0, 14.0, 70.0, 12.0),
        AgeBracket(12.0, 18.0, 80.0, 12.0, 75.0, 12.0),
    ])
