"""
Two pipelines reading one source score the same numbered documents, even when
the source answers differently from one request to the next.
"""

import pytest

from isthmus.orchestrator import RunOutcome
from isthmus.simharness import FaultSchedule

from .fixtures import *  # NoQA
from .fixtures import ehr_config, live, open_engine, shadow


def _ranges(batches):
    return [(batch.first_sequence, batch.last_sequence) for batch in batches]


@pytest.mark.asyncio
async def test_pipelines_sharing_a_source_read_one_sequence_space(
    tmp_path, mock_ehr, clock
):
    # the first request serves a malformed item in place of the first patient
    handle = mock_ehr("ward_small", faults=FaultSchedule(malformed_at=[1]))
    config_path = ehr_config(
        tmp_path,
        handle,
        [
            live("sepsis-live", "sepsis_v1", handle),
            shadow("sepsis-shadow", "sepsis_v1"),
        ],
        run={"batch_size": 4},
    )

    async with open_engine(config_path, clock) as engine:
        runs = [await engine.run_cycle("sepsis-live")]
        handle.advance_cycle()
        runs.append(await engine.run_cycle("sepsis-shadow"))
        runs.append(await engine.run_cycle("sepsis-live"))

        store = engine.services.store
        live_batches = store.committed_batches("sepsis-live")
        shadow_batches = store.committed_batches("sepsis-shadow")
        live_scores = store.score_documents("sepsis-live")
        shadow_scores = store.score_documents("sepsis-shadow")
        archived = engine.services.archive.line_count("ehr")
        quarantined = engine.services.quarantine.count("ehr")
        violations = engine.verify_archive()

        engine.replay("sepsis-live")
        engine.replay("sepsis-shadow")
        live_replayed = store.score_documents("sepsis-live", replay=True)
        shadow_replayed = store.score_documents("sepsis-shadow", replay=True)
        status = engine.status()

    assert [run.outcome for run in runs] == [RunOutcome.COMMITTED] * 3
    # one malformed item among the twenty served, quarantined once, never archived
    assert archived == 19
    assert quarantined == 1
    assert violations == []

    assert _ranges(live_batches) == [
        (1, 4),
        (5, 8),
        (9, 10),
        (11, 14),
        (15, 18),
        (19, 20),
    ]
    assert _ranges(shadow_batches) == [(1, 4), (5, 8), (9, 12), (13, 16), (17, 20)]
    assert live_batches[0].quarantined == shadow_batches[0].quarantined == 1
    assert sum(batch.payloads for batch in live_batches) == 19
    assert sum(batch.payloads for batch in shadow_batches) == 19

    assert len(live_scores) == len(shadow_scores) == 19
    assert live_replayed == live_scores
    assert shadow_replayed == shadow_scores

    assert status["pipelines"]["sepsis-live"]["source"]["last_sequence"] == 20
    assert status["pipelines"]["sepsis-shadow"]["source"]["last_sequence"] == 20
