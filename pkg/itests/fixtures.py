"""
Fixtures of the acceptance tests: a mock EHR per test, and engines built on a
configuration written next to the artifacts.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional

import pytest

from isthmus.config.loader import load_config
from isthmus.orchestrator import Engine
from isthmus.simharness import ServerHandle, serve
from isthmus.utils.time import FrozenClock
from tests.conftest import scenario
from tests.utils.artifacts import (
    config_document,
    get_free_port,
    http_source,
    pipeline,
    write_config,
)


class SimulatedCrash(BaseException):
    """Stops a cycle the way a killed process would: nothing handles it."""


@pytest.fixture
def clock():
    return FrozenClock("2026-01-01T08:00:00.000Z")


@pytest.fixture
def mock_ehr():
    handles: List[ServerHandle] = []

    def start(script="ward_small", **changes) -> ServerHandle:
        if isinstance(script, str):
            script = scenario(script, **changes)
        handle = serve(script, get_free_port())
        handles.append(handle)
        return handle

    yield start
    for handle in handles:
        handle.stop()


def ehr_config(
    folder: Path,
    handle: ServerHandle,
    pipelines: List[Dict[str, Any]],
    *,
    sources: Optional[List[Dict[str, Any]]] = None,
    **options: Any,
) -> Path:
    """Writes a configuration reading the patients endpoint of `handle`."""
    return write_config(
        folder,
        config_document(
            sources or [http_source("ehr", handle.endpoint("/api/patients"))],
            pipelines,
            **options,
        ),
    )


def live(pipeline_id: str, signature: str, handle: ServerHandle) -> Dict[str, Any]:
    return pipeline(pipeline_id, "ehr", signature, sink=handle.endpoint("/emr/score"))


def shadow(pipeline_id: str, signature: str) -> Dict[str, Any]:
    return pipeline(pipeline_id, "ehr", signature)


def open_engine(config_path: Path, clock: FrozenClock, **options: Any) -> Engine:
    return Engine(
        load_config(config_path),
        clock=clock,
        data_dir=config_path.parent / "data",
        config_path=config_path,
        **options,
    )


def crash_at(call: int):
    """A stage hook raising SimulatedCrash at its `call`-th invocation."""
    calls = []

    def hook(pipeline_id, stage):
        calls.append((pipeline_id, stage))
        if len(calls) == call:
            raise SimulatedCrash()

    return hook
