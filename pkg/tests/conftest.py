import logging
import os
from pathlib import Path

import pytest

from isthmus.monitor.logs import get_logger
from isthmus.simharness import ScenarioScript, load_scenario, serve
from isthmus.store.sql import SQLScoreStore
from isthmus.utils.time import FrozenClock
from tests.utils.artifacts import get_free_port, write_artifacts

# tests never install signal handlers nor read a token from the host
os.environ["ISTHMUS_SIGNAL_HANDLER"] = "0"
os.environ.pop("ISTHMUS_TOKEN_EHR", None)

SCENARIOS = Path(__file__).parent / "scenarios"


def scenario(name: str, **changes) -> ScenarioScript:
    script = load_scenario(SCENARIOS / f"{name}.json")
    if changes:
        script = script.model_copy(update=changes)
    return script


@pytest.fixture
def clock():
    return FrozenClock("2026-01-01T08:00:00.000Z")


@pytest.fixture
def artifacts(tmp_path):
    return write_artifacts(tmp_path / "artifacts")


@pytest.fixture
def store(tmp_path):
    store = SQLScoreStore.from_path(tmp_path / "scores.db")
    yield store
    store.close()


@pytest.fixture
def harness():
    """Starts mock EHR servers on free ports; stops them after the test."""
    handles = []

    def start(script="ward_small", **changes):
        if isinstance(script, str):
            script = scenario(script, **changes)
        handle = serve(script, get_free_port())
        handles.append(handle)
        return handle

    yield start
    for handle in handles:
        handle.stop()


@pytest.fixture(autouse=True)
def restore_logging():
    """Removes the handlers installed by configure_logging during a test."""
    yield
    logger = get_logger()
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.propagate = True
    logger.setLevel(logging.NOTSET)
