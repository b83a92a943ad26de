"""
Scheduling and execution of pipeline cycles, and the governance operations
of the engine.
"""

from .engine import Engine
from .exceptions import (
    InsufficientSilentHistoryError,
    OrchestratorError,
    UnknownPipelineError,
)
from .feed import PullReport, SourceFeed
from .pipeline import PipelineDefinition, PipelineRunner, load_definition
from .process import is_stopping, use_shutdown_handler
from .runs import PipelineRun, RunOutcome, Stage, StageHook
from .services import DataLayout, EngineServices, build_services
from .sink import DeliveryReport, SinkDelivery

__all__ = [
    "DataLayout",
    "DeliveryReport",
    "Engine",
    "EngineServices",
    "InsufficientSilentHistoryError",
    "OrchestratorError",
    "PipelineDefinition",
    "PipelineRun",
    "PipelineRunner",
    "PullReport",
    "RunOutcome",
    "SinkDelivery",
    "SourceFeed",
    "Stage",
    "StageHook",
    "UnknownPipelineError",
    "build_services",
    "is_stopping",
    "load_definition",
    "use_shutdown_handler",
]
