import math

import pytest

from isthmus.common.types import DeploymentMode
from isthmus.orchestrator import RunOutcome
from tests.utils.artifacts import DETERIORATION_V1, SEPSIS_V1, SEPSIS_V2

from .fixtures import *  # NoQA
from .fixtures import ehr_config, live, open_engine, shadow

CYCLES = 5
PATIENTS = 50


def expected_score(signature, values):
    z = signature["intercept"]
    for name, weight in zip(signature["features"], signature["coefficients"]):
        z += weight * values[name]
    return 1.0 / (1.0 + math.exp(-z))


def oracle(generator):
    """Expected feature values per (patient, cycle), computed from the documents."""
    units = {
        document["patient"]["id"]: document["encounter"]["unit"]
        for document in generator.documents(1)
    }
    expected = {}
    for cycle in range(1, CYCLES + 1):
        for document in generator.documents(cycle):
            patient_id = document["patient"]["id"]
            vitals = document["vitals"][-1]
            labs = document["labs"][-1]
            expected[(patient_id, cycle)] = {
                "heart_rate": vitals["heart_rate"],
                "systolic_bp": vitals["systolic_bp"],
                "resp_rate": vitals["resp_rate"],
                "temperature": min(max(vitals["temperature"], 35.0), 41.0),
                "wbc": labs["wbc"],
                "lactate": labs["lactate"],
                "unit=ICU": 1.0 if units[patient_id] == "ICU" else 0.0,
            }
    return expected


def cycle_of(batch_id):
    first = int(batch_id.split(":")[1].split("-")[0])
    return (first - 1) // PATIENTS + 1


@pytest.mark.asyncio
async def test_three_pipelines_over_five_cycles(tmp_path, mock_ehr, clock):
    handle = mock_ehr("trauma_e2e")
    config_path = ehr_config(
        tmp_path,
        handle,
        [
            live("sepsis-live", "sepsis_v1", handle),
            live("deterioration-live", "deterioration_v1", handle),
            shadow("sepsis-shadow", "sepsis_v2"),
        ],
    )

    async with open_engine(config_path, clock) as engine:
        for cycle in range(1, CYCLES + 1):
            if cycle > 1:
                handle.advance_cycle()
                clock.advance(3600)
            runs = await engine.run_all_once()
            assert [run.outcome for run in runs] == [RunOutcome.COMMITTED] * 3

        store = engine.services.store
        documents = {
            pipeline_id: store.score_documents(pipeline_id)
            for pipeline_id in ("sepsis-live", "deterioration-live", "sepsis-shadow")
        }
        silent_v2 = store.count_scores("sepsis", 2, DeploymentMode.SILENT)
        live_v2 = store.count_scores("sepsis", 2, DeploymentMode.LIVE)

    expected = oracle(handle.state.generator)
    signatures = {
        "sepsis-live": SEPSIS_V1,
        "deterioration-live": DETERIORATION_V1,
        "sepsis-shadow": SEPSIS_V2,
    }
    for pipeline_id, signature in signatures.items():
        found = documents[pipeline_id]
        assert len(found) == CYCLES * PATIENTS
        for document in found:
            values = expected[(document["patient_id"], cycle_of(document["batch_id"]))]
            for name in signature["features"]:
                assert document["features"][name] == pytest.approx(
                    values[name], abs=1e-9
                )
            assert document["score"] == pytest.approx(
                expected_score(signature, values), abs=1e-9
            )
            assert document["version"] == signature["version"]

    bodies = handle.sink_requests()
    stored = {
        document["dedup_key"]: document
        for pipeline_id in ("sepsis-live", "deterioration-live")
        for document in documents[pipeline_id]
    }
    by_pipeline = {}
    for body in bodies:
        by_pipeline.setdefault(body["pipeline"], []).append(body)
        document = stored[body["dedup_key"]]
        values = expected[(body["patient_id"], cycle_of(document["batch_id"]))]
        assert body["score"] == pytest.approx(
            expected_score(signatures[body["pipeline"]], values), abs=1e-9
        )

    assert sorted(by_pipeline) == ["deterioration-live", "sepsis-live"]
    assert len(by_pipeline["sepsis-live"]) == CYCLES * PATIENTS
    assert len(by_pipeline["deterioration-live"]) == CYCLES * PATIENTS
    assert len({body["dedup_key"] for body in bodies}) == len(bodies)
    # silent scores are stored and never delivered
    assert silent_v2 == CYCLES * PATIENTS
    assert live_v2 == 0
