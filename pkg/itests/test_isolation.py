import pytest

from isthmus.monitor.alerts import AlertKind
from isthmus.orchestrator import RunOutcome
from tests.utils.artifacts import http_source, pipeline

from .fixtures import *  # NoQA
from .fixtures import ehr_config, live, open_engine


@pytest.mark.asyncio
async def test_failing_source_does_not_stop_other_pipelines(tmp_path, mock_ehr, clock):
    handle = mock_ehr("ward_small")
    config_path = ehr_config(
        tmp_path,
        handle,
        [
            live("sepsis-live", "sepsis_v1", handle),
            pipeline("broken-shadow", "broken", "deterioration_v1"),
        ],
        sources=[
            http_source("ehr", handle.endpoint("/api/patients")),
            http_source("broken", handle.endpoint("/api/faulty")),
        ],
    )

    outcomes = []
    async with open_engine(config_path, clock) as engine:
        for cycle in (1, 2, 3):
            if cycle > 1:
                handle.advance_cycle()
            runs = {run.pipeline: run for run in await engine.run_all_once()}
            outcomes.append(
                (runs["sepsis-live"].outcome, runs["broken-shadow"].outcome)
            )
        alerts = engine.services.alerts.pending()
        checkpoint = engine.services.store.read_checkpoint("broken-shadow")
        scores = len(engine.services.store.score_documents("sepsis-live"))

    assert outcomes == [(RunOutcome.COMMITTED, RunOutcome.FAILED)] * 3
    assert scores == 30
    assert len(handle.sink_requests()) == 30
    assert checkpoint is None
    failures = [alert for alert in alerts if alert.kind is AlertKind.PIPELINE_FAILURE]
    assert [(alert.pipeline, alert.count) for alert in failures] == [
        ("broken-shadow", 3)
    ]
