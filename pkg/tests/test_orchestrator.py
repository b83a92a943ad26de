import asyncio
from datetime import timedelta
from itertools import groupby

import pytest

from isthmus.common.types import DeploymentMode
from isthmus.config.loader import load_config
from isthmus.monitor.alerts import AlertKind
from isthmus.monitor.logs import configure_logging, read_log_events
from isthmus.monitor.metrics import COMMITTED_RUNS, FAILED_RUNS, SCORED
from isthmus.orchestrator import (
    Engine,
    InsufficientSilentHistoryError,
    RunOutcome,
    Stage,
    UnknownPipelineError,
)
from isthmus.scoring.scorer import sigmoid
from isthmus.scoring.training import Hyperparameters
from isthmus.simharness import FaultSchedule
from isthmus.store.exceptions import MissingArchiveRangeError
from tests.utils.artifacts import (
    TEMPLATE,
    config_document,
    file_source,
    http_source,
    pipeline,
    write_config,
    write_json,
)


class SimulatedCrash(BaseException):
    """Stops a cycle the way a killed process would: nothing handles it."""


def _document(patient_id, heart_rate=90, *, unit=None, labs=True, resp_rate=18):
    document = {
        "patient": {"id": patient_id},
        "vitals": [
            {"heart_rate": heart_rate, "resp_rate": resp_rate, "temperature": 37.0}
        ],
    }
    if labs:
        document["labs"] = [{"lactate": 1.2, "wbc": 8.0}]
    if unit:
        document["encounter"] = {"unit": unit}
    return document


def _drop(folder, name, document):
    write_json(folder / name, document)


@pytest.fixture
def drop_folder(tmp_path):
    folder = tmp_path / "drop"
    folder.mkdir()
    _drop(folder, "001.json", _document("P001", unit="ICU"))
    _drop(folder, "002.json", _document("P002", 110, unit="WARD"))
    _drop(folder, "003.json", _document("P003", 70, unit="ED"))
    return folder


def _drop_config(tmp_path, pipelines=None, **options):
    return write_config(
        tmp_path,
        config_document(
            [file_source("drop", "drop", cadence=60)],
            pipelines or [pipeline("shadow", "drop", "sepsis_v1")],
            **options,
        ),
    )


def _engine(config_path, clock, **options):
    return Engine(
        load_config(config_path),
        clock=clock,
        data_dir=config_path.parent / "data",
        config_path=config_path,
        **options,
    )


@pytest.mark.asyncio
async def test_file_drop_cycle_scores_every_patient(tmp_path, drop_folder, clock):
    async with _engine(_drop_config(tmp_path), clock) as engine:
        run = await engine.run_cycle("shadow")
        again = await engine.run_cycle("shadow")

        store = engine.services.store
        documents = {doc["patient_id"]: doc for doc in store.score_documents("shadow")}
        checkpoint = store.read_checkpoint("shadow")
        metrics = store.metrics()["shadow"]

    assert run.outcome is RunOutcome.COMMITTED
    assert run.batch_ids == ["drop:1-3"]
    assert run.counts["scores"] == 3
    assert again.outcome is RunOutcome.EMPTY
    assert again.batch_ids == []

    assert sorted(documents) == ["P001", "P002", "P003"]
    first = documents["P001"]
    z = -20.0 + 0.03 * 90 + 0.08 * 18 + 0.4 * 37.0 + 0.5 * 1.2 + 0.7
    assert first["score"] == pytest.approx(sigmoid(z), abs=1e-9)
    assert first["mode"] == "silent"
    assert first["batch_id"] == "drop:1-3"
    assert first["version"] == 1
    assert checkpoint.batch_id == "drop:1-3"
    assert checkpoint.last_sequence == 3
    assert metrics[SCORED] == 3
    assert metrics[COMMITTED_RUNS] == 1


@pytest.mark.asyncio
async def test_huge_number_does_not_stall_the_pipeline(tmp_path, drop_folder, clock):
    _drop(drop_folder, "004.json", _document("P004", 10**400, labs=False))

    async with _engine(_drop_config(tmp_path), clock) as engine:
        run = await engine.run_cycle("shadow")
        again = await engine.run_cycle("shadow")
        documents = {
            doc["patient_id"]: doc
            for doc in engine.services.store.score_documents("shadow")
        }

    assert run.outcome is RunOutcome.COMMITTED
    assert run.batch_ids == ["drop:1-4"]
    assert again.outcome is RunOutcome.EMPTY
    assert sorted(documents) == ["P001", "P002", "P003", "P004"]
    # no value ever observed for P004: the baseline mean stands in
    assert documents["P004"]["features"]["heart_rate"] == 85
    assert "heart_rate" in documents["P004"]["imputed_flags"]


def _timed_document(patient_id, measured_at):
    document = _document(patient_id)
    document["vitals"][0]["measured_at"] = measured_at
    return document


@pytest.mark.asyncio
async def test_timestamps_without_zone_are_reported_once_per_source(
    tmp_path, clock
):
    folder = tmp_path / "drop"
    folder.mkdir()
    _drop(folder, "001.json", _timed_document("P001", "2026-01-01T07:00:00"))
    _drop(folder, "002.json", _timed_document("P002", "2026-01-01T07:10:00"))
    _drop(folder, "003.json", _timed_document("P003", "2026-01-01T07:20:00Z"))
    config_path = _drop_config(
        tmp_path,
        [
            pipeline("shadow", "drop", "sepsis_v1"),
            pipeline("other", "drop", "deterioration_v1"),
        ],
    )
    template = dict(TEMPLATE)
    template["rules"] = TEMPLATE["rules"] + [
        {
            "out": "measured_at",
            "path": "$.vitals[*].measured_at",
            "type": "timestamp",
            "array_mode": "last",
        }
    ]
    write_json(tmp_path / "artifacts" / "template.json", template)
    log_path = configure_logging(tmp_path / "logs", "DEBUG")

    async with _engine(config_path, clock) as engine:
        first = await engine.run_cycle("shadow")
        _drop(folder, "004.json", _timed_document("P004", "2026-01-01T07:30:00"))
        second = await engine.run_cycle("shadow")
        other = await engine.run_cycle("other")

    warnings = [
        event
        for event in read_log_events(log_path)
        if event["message"].startswith("Timestamps of drop")
    ]
    assert [run.outcome for run in (first, second, other)] == [
        RunOutcome.COMMITTED
    ] * 3
    assert len(warnings) == 1
    assert warnings[0]["level"] == "warn"
    assert warnings[0]["pipeline"] == "shadow"
    assert warnings[0]["stage"] == "transform"
    assert warnings[0]["fields"]["batch_id"] == "drop:1-3"
    assert warnings[0]["fields"]["naive_timestamps"] == 2


@pytest.mark.asyncio
async def test_new_files_resume_after_the_checkpoint(tmp_path, drop_folder, clock):
    config_path = _drop_config(tmp_path)
    async with _engine(config_path, clock) as engine:
        await engine.run_cycle("shadow")

    # an update without labs nor encounter relies on the values carried forward
    _drop(drop_folder, "004.json", _document("P001", 130, labs=False))

    async with _engine(config_path, clock) as engine:
        run = await engine.run_cycle("shadow")
        documents = [
            doc
            for doc in engine.services.store.score_documents("shadow")
            if doc["batch_id"] == "drop:4-4"
        ]

    assert run.batch_ids == ["drop:4-4"]
    assert len(documents) == 1
    features = documents[0]["features"]
    assert features["heart_rate"] == 130
    assert features["lactate"] == 1.2
    assert features["unit=ICU"] == 1


@pytest.mark.asyncio
async def test_stage_failure_leaves_the_checkpoint(tmp_path, drop_folder, clock):
    failures = []

    def hook(pipeline_id, stage):
        if stage is Stage.PERSIST and not failures:
            failures.append(stage)
            raise RuntimeError("disk full")

    async with _engine(_drop_config(tmp_path), clock, stage_hook=hook) as engine:
        failed = await engine.run_cycle("shadow")
        store = engine.services.store
        checkpoint_after_failure = store.read_checkpoint("shadow")
        alerts = engine.services.alerts.pending()

        recovered = await engine.run_cycle("shadow")
        count = len(store.score_documents("shadow"))
        metrics = store.metrics()["shadow"]

    assert failed.outcome is RunOutcome.FAILED
    assert failed.error == "RuntimeError: disk full"
    assert checkpoint_after_failure is None
    assert [alert.kind for alert in alerts] == [AlertKind.PIPELINE_FAILURE]
    assert alerts[0].pipeline == "shadow"

    assert recovered.outcome is RunOutcome.COMMITTED
    assert recovered.batch_ids == ["drop:1-3"]
    # rows persisted before the failure are not stored twice
    assert recovered.counts["duplicates"] == 3
    assert count == 3
    assert metrics[FAILED_RUNS] == 1


@pytest.mark.asyncio
async def test_crash_before_the_checkpoint_is_recovered(tmp_path, drop_folder, clock):
    config_path = _drop_config(tmp_path)

    def crash(pipeline_id, stage):
        if stage is Stage.PERSIST:
            raise SimulatedCrash()

    engine = _engine(config_path, clock, stage_hook=crash)
    with pytest.raises(SimulatedCrash):
        await engine.run_cycle("shadow")
    assert engine.services.store.read_checkpoint("shadow") is None
    await engine.close()

    async with _engine(config_path, clock) as engine:
        run = await engine.run_cycle("shadow")
        documents = engine.services.store.score_documents("shadow")

    assert run.outcome is RunOutcome.COMMITTED
    assert run.batch_ids == ["drop:1-3"]
    assert run.counts["scores"] == 0
    assert len(documents) == 3


@pytest.mark.asyncio
async def test_cycles_are_serialized_with_one_slot(tmp_path, drop_folder, clock):
    config_path = _drop_config(
        tmp_path,
        [
            pipeline("shadow", "drop", "sepsis_v1"),
            pipeline("deterioration", "drop", "deterioration_v1"),
        ],
        run={"max_parallel_pipelines": 1, "batch_size": 1},
    )
    log = []

    async with _engine(
        config_path, clock, stage_hook=lambda name, stage: log.append(name)
    ) as engine:
        runs = await engine.run_all_once()

    assert [run.outcome for run in runs] == [RunOutcome.COMMITTED] * 2
    assert [run.batch_ids for run in runs] == [["drop:1-1", "drop:2-2", "drop:3-3"]] * 2
    assert sorted(key for key, _ in groupby(log)) == ["deterioration", "shadow"]


@pytest.mark.asyncio
async def test_unknown_pipeline(tmp_path, drop_folder, clock):
    async with _engine(_drop_config(tmp_path), clock) as engine:
        with pytest.raises(UnknownPipelineError):
            await engine.run_cycle("missing")
        with pytest.raises(UnknownPipelineError):
            engine.replay("missing")


@pytest.mark.asyncio
async def test_live_pipeline_delivers_every_score_once(tmp_path, harness, clock):
    handle = harness("ward_small", faults=FaultSchedule(sink_fail_at=[4]))
    config_path = write_config(
        tmp_path,
        config_document(
            [http_source("ehr", handle.endpoint("/api/patients"))],
            [
                pipeline(
                    "sepsis-live",
                    "ehr",
                    "sepsis_v1",
                    sink=handle.endpoint("/emr/score"),
                )
            ],
        ),
    )

    async with _engine(config_path, clock) as engine:
        first = await engine.run_cycle("sepsis-live")
        delivered_first = len(handle.sink_requests())
        pending = engine.status()["pipelines"]["sepsis-live"]["pending_deliveries"]

        second = await engine.run_cycle("sepsis-live")
        status = engine.status()

    bodies = handle.sink_requests()
    assert first.outcome is RunOutcome.COMMITTED
    assert first.counts["delivered"] == 3
    assert delivered_first == 3
    assert pending == 7
    assert second.outcome is RunOutcome.EMPTY
    assert second.counts["delivered"] == 7
    assert len(bodies) == 10
    assert len({body["dedup_key"] for body in bodies}) == 10
    assert {body["pipeline"] for body in bodies} == {"sepsis-live"}
    assert status["pipelines"]["sepsis-live"]["pending_deliveries"] == 0
    assert status["pipelines"]["sepsis-live"]["source"]["cursor"] == "10"


@pytest.mark.asyncio
async def test_status(tmp_path, drop_folder, clock):
    async with _engine(_drop_config(tmp_path), clock) as engine:
        await engine.run_cycle("shadow")
        status = engine.status()

    shadow = status["pipelines"]["shadow"]
    assert shadow["mode"] == "silent"
    assert shadow["source_id"] == "drop"
    assert (shadow["model_id"], shadow["version"]) == ("sepsis", 1)
    assert shadow["checkpoint"]["batch_id"] == "drop:1-3"
    assert shadow["pending_deliveries"] == 0
    assert status["alerts"] == []


@pytest.mark.asyncio
async def test_apply_config_adds_and_removes_pipelines(tmp_path, drop_folder, clock):
    config_path = _drop_config(tmp_path)
    other_path = write_json(
        tmp_path / "other.json",
        config_document(
            [file_source("drop", "drop", cadence=60)],
            [pipeline("deterioration", "drop", "deterioration_v1")],
        ),
    )

    async with _engine(config_path, clock) as engine:
        delta = engine.apply_config(load_config(other_path))
        run = await engine.run_cycle("deterioration")
        events = [entry["event"] for entry in engine.services.audit.entries()]

        assert engine.pipelines == ["deterioration"]
        with pytest.raises(UnknownPipelineError):
            await engine.run_cycle("shadow")

    assert delta.added == ["deterioration"]
    assert delta.removed == ["shadow"]
    assert run.outcome is RunOutcome.COMMITTED
    assert "config_reloaded" in events


@pytest.mark.asyncio
async def test_reload_config_from_disk(tmp_path, drop_folder, clock):
    config_path = _drop_config(tmp_path)

    async with _engine(config_path, clock) as engine:
        assert engine.reload_config() is None

        config_path.write_text("{", encoding="utf8")
        assert engine.reload_config(force=True) is None
        assert engine.pipelines == ["shadow"]

        write_json(
            config_path,
            config_document(
                [file_source("drop", "drop", cadence=60)],
                [
                    pipeline("shadow", "drop", "sepsis_v1"),
                    pipeline("deterioration", "drop", "deterioration_v1"),
                ],
            ),
        )
        delta = engine.reload_config(force=True)

        assert delta is not None
        assert delta.added == ["deterioration"]
        assert sorted(engine.pipelines) == ["deterioration", "shadow"]


@pytest.mark.asyncio
async def test_promotion_requires_silent_history(tmp_path, drop_folder, clock):
    for index in range(4, 13):
        _drop(drop_folder, f"{index:03d}.json", _document(f"P{index:03d}", 80 + index))
    config_path = _drop_config(tmp_path, [pipeline("shadow", "drop", "sepsis_v2")])

    async with _engine(config_path, clock) as engine:
        with pytest.raises(InsufficientSilentHistoryError) as error:
            engine.promote("sepsis", 2)

        await engine.run_cycle("shadow")
        silent = engine.services.store.count_scores("sepsis", 2, DeploymentMode.SILENT)
        promoted = engine.promote("sepsis", 2)
        again = engine.promote("sepsis", 2)
        current = engine.services.registry.current_version("sepsis")
        events = [entry["event"] for entry in engine.services.audit.entries()]

    assert (error.value.found, error.value.required) == (0, 10)
    assert silent == 12
    assert promoted is True
    assert again is False
    assert current == 2
    assert "model_promoted" in events


@pytest.mark.asyncio
async def test_replay_matches_the_original_scores(tmp_path, drop_folder, clock):
    async with _engine(_drop_config(tmp_path), clock) as engine:
        await engine.run_cycle("shadow")
        _drop(drop_folder, "004.json", _document("P001", 125, labs=False))
        _drop(drop_folder, "005.json", _document("P004", 95, unit="ICU"))
        clock.advance(60)
        await engine.run_cycle("shadow")

        runs = engine.replay("shadow")
        store = engine.services.store
        original = store.score_documents("shadow")
        replayed = store.score_documents("shadow", replay=True)

        ranged = engine.replay("shadow", "drop:4-5", "drop:4-5")
        with pytest.raises(MissingArchiveRangeError):
            engine.replay("shadow", "drop:9-9")
        events = [entry["event"] for entry in engine.services.audit.entries()]

    assert [run.batch_ids for run in runs] == [["drop:1-3"], ["drop:4-5"]]
    assert all(run.replay for run in runs)
    assert len(original) == 5
    assert replayed == original
    assert [run.batch_ids for run in ranged] == [["drop:4-5"]]
    assert events.count("replay") == 2


@pytest.mark.asyncio
async def test_retrain_registers_a_silent_version(tmp_path, drop_folder, clock):
    for index in range(4, 11):
        unit = "ICU" if index % 2 else "WARD"
        _drop(
            drop_folder,
            f"{index:03d}.json",
            _document(f"P{index:03d}", 70 + 5 * index, unit=unit),
        )
    outcomes = {f"P{index:03d}": index % 2 for index in range(1, 11)}

    async with _engine(_drop_config(tmp_path), clock) as engine:
        await engine.run_cycle("shadow")
        signature = engine.retrain(
            "sepsis", outcomes, Hyperparameters(learning_rate=1e-5, epochs=20)
        )
        latest = engine.services.registry.latest("sepsis")
        current = engine.services.registry.current_version("sepsis")
        baselines = engine.services.registry.baselines("sepsis", 2)
        baselines_file = engine.layout.registry / "sepsis" / "v2.baselines.json"
        retrained = [
            entry
            for entry in engine.services.audit.entries()
            if entry["event"] == "model_retrained"
        ]

    assert signature.version == 2
    assert signature.mode is DeploymentMode.SILENT
    assert latest.version == 2
    assert current == 1
    assert retrained[0]["data"]["samples"] == 10
    assert retrained[0]["data"]["base_version"] == 1
    assert retrained[0]["data"]["baselines"] == "v2.baselines.json"
    assert baselines_file.exists()
    assert sorted(baselines) == sorted(signature.features)
    for name, mean in zip(signature.features, signature.baseline_means):
        assert baselines[name]["mean"] == pytest.approx(mean)
        assert sum(baselines[name]["proportions"]) == pytest.approx(1.0)


@pytest.mark.asyncio
async def test_verify_archive_reports_tampering(tmp_path, drop_folder, clock):
    async with _engine(_drop_config(tmp_path), clock) as engine:
        await engine.run_cycle("shadow")
        assert engine.verify_archive() == []

        archive_file = sorted(engine.layout.archive.rglob("*.jsonl"))[0]
        lines = archive_file.read_text(encoding="utf8").splitlines(keepends=True)
        lines[0] = lines[0].replace("P001", "P009")
        archive_file.write_text("".join(lines), encoding="utf8")

        violations = engine.verify_archive()
        alerts = engine.services.alerts.pending()

    assert [(violation.line, violation.reason) for violation in violations] == [
        (1, "hash mismatch")
    ]
    assert [alert.kind for alert in alerts] == [AlertKind.INTEGRITY_VIOLATION]


@pytest.mark.asyncio
async def test_check_sources_raises_missing_data(tmp_path, drop_folder, clock):
    async with _engine(_drop_config(tmp_path), clock) as engine:
        await engine.run_cycle("shadow")

        on_time = engine.check_sources(clock.now() + timedelta(seconds=60))
        late = engine.check_sources(clock.now() + timedelta(seconds=121))

    assert on_time == []
    assert [alert.kind for alert in late] == [AlertKind.MISSING_DATA]
    assert late[0].pipeline == "drop"


@pytest.mark.asyncio
async def test_daemon_runs_until_stopped(tmp_path, drop_folder, clock):
    stop = asyncio.Event()

    async with _engine(_drop_config(tmp_path), clock) as engine:
        asyncio.get_event_loop().call_later(0.5, stop.set)
        cycles = await engine.run_daemon(stop)
        count = len(engine.services.store.score_documents("shadow"))

    assert cycles == {"shadow": 1}
    assert count == 3
