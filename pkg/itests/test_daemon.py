import asyncio

import pytest

from tests.utils.artifacts import (
    config_document,
    http_source,
    write_artifacts,
    write_json,
)

from .fixtures import *  # NoQA
from .fixtures import live, open_engine, shadow


def daemon_config(handle, pipelines):
    return config_document(
        [http_source("ehr", handle.endpoint("/api/patients"), cadence=2)],
        pipelines,
        run={"reload_interval": 1, "monitor_interval": 0.2},
    )


@pytest.mark.asyncio
async def test_daemon_schedules_at_the_source_cadence(tmp_path, mock_ehr, clock):
    handle = mock_ehr("daemon")
    config_path = write_json(
        tmp_path / "isthmus.json",
        daemon_config(handle, [live("sepsis-live", "sepsis_v1", handle)]),
    )
    write_artifacts(tmp_path / "artifacts")
    stop = asyncio.Event()
    loop = asyncio.get_event_loop()

    def add_pipeline():
        write_json(
            config_path,
            daemon_config(
                handle,
                [
                    live("sepsis-live", "sepsis_v1", handle),
                    shadow("deterioration-shadow", "deterioration_v1"),
                ],
            ),
        )

    async with open_engine(config_path, clock) as engine:
        loop.call_later(3, add_pipeline)
        loop.call_later(10, stop.set)
        cycles = await engine.run_daemon(stop)
        store = engine.services.store
        live_scores = len(store.score_documents("sepsis-live"))
        shadow_scores = len(store.score_documents("deterioration-shadow"))

    assert 4 <= cycles["sepsis-live"] <= 6
    assert cycles["deterioration-shadow"] >= 1
    assert live_scores == 5
    assert shadow_scores == 5
    assert len(handle.sink_requests()) == 5
