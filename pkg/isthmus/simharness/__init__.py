"""
Deterministic simulation harness: a seeded scenario generator and mock EHR,
sensor, sink and webhook endpoints driven by scenario scripts.
"""

from .generator import ScenarioGenerator, patient_id
from .scenario import (
    FaultSchedule,
    OutcomeModel,
    ScenarioScript,
    SensorScript,
    Shift,
    ValueOverride,
    load_scenario,
    parse_scenario,
)
from .server import (
    HarnessError,
    HarnessState,
    PortInUseError,
    ServerHandle,
    create_app,
    sensor_stream,
    serve,
)

__all__ = [
    "FaultSchedule",
    "HarnessError",
    "HarnessState",
    "OutcomeModel",
    "PortInUseError",
    "ScenarioGenerator",
    "ScenarioScript",
    "SensorScript",
    "ServerHandle",
    "Shift",
    "ValueOverride",
    "create_app",
    "load_scenario",
    "parse_scenario",
    "patient_id",
    "sensor_stream",
    "serve",
]
