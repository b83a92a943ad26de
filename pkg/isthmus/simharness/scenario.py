"""
Scenario scripts drive the mock EHR and the sensor simulator. A script fixes
the seed, the patients, what each cycle releases, and the faults to inject.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from isthmus.common.issues import issues_from_validation_error
from isthmus.config.errors import ConfigParseError, ConfigValidationError
from isthmus.settings.json import json_settings

VITAL_FIELDS = ("heart_rate", "systolic_bp", "resp_rate", "temperature")
LAB_FIELDS = ("wbc", "lactate")
SENSOR_FIELDS = ("pm25", "co2", "temperature", "humidity")


class _Script(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class FaultSchedule(_Script):
    """Request numbers count GET /api/patients calls from 1."""

    fail_500_at: List[int] = Field(default_factory=list)
    malformed_at: List[int] = Field(default_factory=list)
    auth_fail_at: List[int] = Field(default_factory=list)
    silent_cycles: List[int] = Field(default_factory=list)
    sink_fail_at: List[int] = Field(default_factory=list)
    webhook_down: bool = False


class Shift(_Script):
    """From `from_cycle` on, a vital or lab is drawn from N(mean, std)."""

    field: str
    from_cycle: int = Field(ge=1)
    mean: float
    std: float = Field(ge=0)


class ValueOverride(_Script):
    """Replaces one served value: the first vitals or labs entry of a patient."""

    cycle: int = Field(ge=1)
    patient_id: str
    field: str
    value: Any


class SensorOverride(_Script):
    cycle: int = Field(ge=1)
    index: int = Field(ge=0)
    field: str
    value: Any


class SensorScript(_Script):
    devices: int = Field(default=2, ge=1)
    rate: int = Field(default=10, ge=0)
    gap_cycles: List[int] = Field(default_factory=list)
    overrides: List[SensorOverride] = Field(default_factory=list)


class OutcomeModel(_Script):
    """
    Labels drawn from a logistic model over first-cycle values, unless given
    explicitly per patient.
    """

    intercept: float = 0.0
    weights: Dict[str, float] = Field(default_factory=dict)
    labels: Dict[str, int] = Field(default_factory=dict)


class ScenarioScript(_Script):
    seed: int = 7
    patients: int = Field(default=10, ge=0)
    cycles: int = Field(default=1, ge=1)
    start: str = "2026-01-01T08:00:00.000Z"
    cycle_minutes: float = Field(default=60.0, gt=0)
    vitals_per_cycle: int = Field(default=1, ge=0)
    labs_per_cycle: int = Field(default=1, ge=0)
    update_fraction: float = Field(default=1.0, ge=0, le=1)
    token: Optional[str] = None
    faults: FaultSchedule = FaultSchedule()
    shifts: List[Shift] = Field(default_factory=list)
    overrides: List[ValueOverride] = Field(default_factory=list)
    outcomes: OutcomeModel = OutcomeModel()
    sensors: SensorScript = SensorScript()
    auto_advance_seconds: Optional[float] = Field(default=None, gt=0)


def parse_scenario(document: Any) -> ScenarioScript:
    try:
        return ScenarioScript.model_validate(document)
    except ValidationError as validation_error:
        raise ConfigValidationError(
            issues_from_validation_error(validation_error, "$")
        ) from validation_error


def load_scenario(path: Union[str, Path]) -> ScenarioScript:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf8")
    except OSError as read_error:
        raise ConfigParseError(str(path), str(read_error))
    try:
        document = json_settings.loads(text)
    except ValueError as decode_error:
        raise ConfigParseError(str(path), f"malformed JSON: {decode_error}")
    return parse_scenario(document)
