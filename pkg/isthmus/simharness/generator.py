"""
Seeded synthetic data: patient documents per cycle, air quality readings and
outcome labels. Every value depends only on the script, never on call order.
"""

import math
from datetime import datetime, timedelta
from functools import lru_cache
from typing import Any, Dict, List, Tuple

import numpy as np

from isthmus.utils.time import format_timestamp, parse_timestamp

from .scenario import ScenarioScript

# (mean, std, low, high)
Distribution = Tuple[float, float, float, float]

VITALS: Dict[str, Distribution] = {
    "heart_rate": (85.0, 15.0, 40.0, 180.0),
    "systolic_bp": (125.0, 20.0, 70.0, 220.0),
    "resp_rate": (18.0, 4.0, 8.0, 40.0),
    "temperature": (37.0, 0.6, 34.0, 42.0),
}
LABS: Dict[str, Distribution] = {
    "wbc": (9.0, 3.0, 2.0, 25.0),
    "lactate": (1.6, 0.8, 0.3, 12.0),
}
SENSORS: Dict[str, Distribution] = {
    "pm25": (12.0, 6.0, 0.0, 300.0),
    "co2": (650.0, 120.0, 380.0, 5000.0),
    "temperature": (22.0, 1.5, 10.0, 35.0),
    "humidity": (45.0, 8.0, 5.0, 95.0),
}
UNITS = ("ED", "ICU", "WARD")
SEXES = ("F", "M")
MEDICATIONS = ("ceftriaxone", "norepinephrine", "heparin", "insulin", "ondansetron")

PATIENT_STREAM = 1
SENSOR_STREAM = 2
OUTCOME_STREAM = 3


def patient_id(index: int) -> str:
    return f"P{index + 1:03d}"


def _draw(rng: np.random.Generator, spec: Distribution) -> float:
    mean, std, low, high = spec
    return round(float(np.clip(rng.normal(mean, std), low, high)), 1)


class ScenarioGenerator:
    def __init__(self, script: ScenarioScript) -> None:
        self.script = script
        self.start = parse_timestamp(script.start)
        self._documents = lru_cache(maxsize=None)(self._build_documents)
        self._readings = lru_cache(maxsize=None)(self._build_readings)

    def _rng(self, *stream: int) -> np.random.Generator:
        return np.random.default_rng([self.script.seed, *stream])

    def cycle_time(self, cycle: int) -> datetime:
        return self.start + timedelta(minutes=self.script.cycle_minutes * (cycle - 1))

    @property
    def patient_ids(self) -> List[str]:
        return [patient_id(index) for index in range(self.script.patients)]

    def _spec_of(self, field: str, cycle: int, default: Distribution) -> Distribution:
        for shift in self.script.shifts:
            if shift.field == field and cycle >= shift.from_cycle:
                _, _, low, high = default
                return (shift.mean, shift.std, low, high)
        return default

    def _demographics(self, index: int) -> Dict[str, Any]:
        rng = self._rng(PATIENT_STREAM, 0, index)
        return {
            "id": patient_id(index),
            "age": int(rng.integers(18, 95)),
            "sex": SEXES[int(rng.integers(0, len(SEXES)))],
        }

    def _document(self, index: int, cycle: int) -> Dict[str, Any]:
        script = self.script
        rng = self._rng(PATIENT_STREAM, cycle, index)
        at = self.cycle_time(cycle)
        vitals = []
        for entry in range(script.vitals_per_cycle):
            reading: Dict[str, Any] = {
                "taken_at": format_timestamp(at + timedelta(minutes=entry * 5))
            }
            for name, spec in VITALS.items():
                reading[name] = _draw(rng, self._spec_of(name, cycle, spec))
            vitals.append(reading)
        labs = []
        for entry in range(script.labs_per_cycle):
            panel: Dict[str, Any] = {
                "collected_at": format_timestamp(at + timedelta(minutes=entry * 10))
            }
            for name, spec in LABS.items():
                panel[name] = _draw(rng, self._spec_of(name, cycle, spec))
            labs.append(panel)

        document: Dict[str, Any] = {
            "resourceType": "PatientUpdate",
            "patient": {"id": patient_id(index)},
            "vitals": vitals,
            "labs": labs,
            "medications": [
                {
                    "code": MEDICATIONS[int(rng.integers(0, len(MEDICATIONS)))],
                    "ordered_at": format_timestamp(at),
                }
            ],
        }
        if cycle == 1:
            document["resourceType"] = "PatientAdmission"
            document["patient"] = self._demographics(index)
            document["encounter"] = {
                "id": f"E{index + 1:03d}",
                "unit": UNITS[int(rng.integers(0, len(UNITS)))],
                "admitted_at": format_timestamp(at),
            }

        for override in script.overrides:
            if override.cycle == cycle and override.patient_id == patient_id(index):
                target = vitals if override.field in VITALS else labs
                if target:
                    target[0][override.field] = override.value
        return document

    def _build_documents(self, cycle: int) -> Tuple[Dict[str, Any], ...]:
        script = self.script
        if cycle < 1 or cycle > script.cycles or cycle in script.faults.silent_cycles:
            return ()
        selector = self._rng(PATIENT_STREAM, cycle)
        documents = []
        for index in range(script.patients):
            chosen = selector.random() < script.update_fraction
            if cycle == 1 or chosen:
                documents.append(self._document(index, cycle))
        return tuple(documents)

    def documents(self, cycle: int) -> List[Dict[str, Any]]:
        """The patient documents released when `cycle` starts."""
        return list(self._documents(cycle))

    def _build_readings(self, cycle: int) -> Tuple[Dict[str, Any], ...]:
        sensors = self.script.sensors
        if cycle < 1 or cycle > self.script.cycles or cycle in sensors.gap_cycles:
            return ()
        rng = self._rng(SENSOR_STREAM, cycle)
        at = self.cycle_time(cycle)
        step = self.script.cycle_minutes * 60 / max(sensors.rate, 1)
        readings = []
        for index in range(sensors.rate):
            reading: Dict[str, Any] = {
                "device_id": f"S{index % sensors.devices + 1:02d}",
                "taken_at": format_timestamp(at + timedelta(seconds=index * step)),
            }
            for name, spec in SENSORS.items():
                reading[name] = _draw(rng, spec)
            for override in sensors.overrides:
                if override.cycle == cycle and override.index == index:
                    reading[override.field] = override.value
            readings.append(reading)
        return tuple(readings)

    def readings(self, cycle: int) -> List[Dict[str, Any]]:
        return list(self._readings(cycle))

    def outcomes(self) -> Dict[str, int]:
        """Outcome labels by patient id."""
        model = self.script.outcomes
        rng = self._rng(OUTCOME_STREAM)
        labels = {}
        for index, document in enumerate(self.documents(1)):
            values: Dict[str, float] = dict(document["patient"])
            if document["vitals"]:
                values.update(document["vitals"][0])
            if document["labs"]:
                values.update(document["labs"][0])
            z = model.intercept + math.fsum(
                weight * float(values.get(name, 0.0))
                for name, weight in sorted(model.weights.items())
            )
            probability = 1.0 / (1.0 + math.exp(-max(min(z, 500.0), -500.0)))
            labels[patient_id(index)] = int(rng.random() < probability)
        labels.update(model.labels)
        return labels
