import csv

import pytest
from click.testing import CliRunner

from isthmus.cli import EXIT_CONFIG, EXIT_RUNTIME, main
from isthmus.settings.json import json_settings
from isthmus.store.models import EXPORT_COLUMNS
from tests.utils.artifacts import (
    config_document,
    file_source,
    pipeline,
    write_config,
    write_json,
)


@pytest.fixture
def workspace(tmp_path):
    drop = tmp_path / "drop"
    for index, unit in enumerate(["ICU", "WARD", "ED"], start=1):
        write_json(
            drop / f"{index:03d}.json",
            {
                "patient": {"id": f"P{index:03d}"},
                "encounter": {"unit": unit},
                "vitals": [{"heart_rate": 80 + 10 * index, "temperature": 37.5}],
                "labs": [{"lactate": 1.0 + index}],
            },
        )
    write_config(
        tmp_path,
        config_document(
            [file_source("drop", "drop")], [pipeline("shadow", "drop", "sepsis_v1")]
        ),
    )
    return tmp_path


def invoke(workspace, *args):
    return CliRunner().invoke(
        main,
        [
            "--config",
            str(workspace / "isthmus.json"),
            "--data-dir",
            str(workspace / "data"),
            *args,
        ],
    )


def test_validate(workspace):
    result = invoke(workspace, "validate")

    assert result.exit_code == 0
    assert result.output.strip() == "OK 1 sources, 1 pipelines"


def test_validate_reports_every_issue(tmp_path):
    path = write_json(
        tmp_path / "broken.json",
        {"sources": [{"id": "drop", "kind": "file_drop"}], "pipelines": "none"},
    )

    result = CliRunner().invoke(main, ["validate", str(path)])

    assert result.exit_code == EXIT_CONFIG
    assert "ERROR $.pipelines" in result.output


def test_missing_configuration_is_a_config_error(tmp_path):
    result = CliRunner().invoke(
        main, ["--config", str(tmp_path / "missing.json"), "status"]
    )

    assert result.exit_code == EXIT_CONFIG


def test_run_once_then_export(workspace):
    run = invoke(workspace, "run-once", "shadow")
    jsonl = invoke(workspace, "export", "--pipeline", "shadow", "--format", "jsonl")
    output = workspace / "scores.csv"
    as_csv = invoke(
        workspace, "export", "--pipeline", "shadow", "--output", str(output)
    )

    assert run.exit_code == 0
    runs = json_settings.loads(run.output)
    assert [item["outcome"] for item in runs] == ["committed"]
    assert runs[0]["batch_ids"] == ["drop:1-3"]

    assert jsonl.exit_code == 0
    rows = [json_settings.loads(line) for line in jsonl.output.splitlines()]
    assert sorted(row["patient_id"] for row in rows) == ["P001", "P002", "P003"]
    assert {row["mode"] for row in rows} == {"silent"}

    assert as_csv.exit_code == 0
    with open(output, encoding="utf8", newline="") as csv_file:
        reader = csv.DictReader(csv_file)
        assert tuple(reader.fieldnames) == EXPORT_COLUMNS
        assert len(list(reader)) == 3


def test_status_and_verify(workspace):
    invoke(workspace, "run-once")
    status = invoke(workspace, "status")
    verify = invoke(workspace, "verify-archive")

    assert status.exit_code == 0
    document = json_settings.loads(status.output)
    assert document["pipelines"]["shadow"]["checkpoint"]["batch_id"] == "drop:1-3"
    assert verify.exit_code == 0
    assert verify.output.strip() == "OK"


def test_runtime_errors_exit_with_one(workspace):
    unknown_pipeline = invoke(workspace, "run-once", "missing")
    unknown_model = invoke(workspace, "promote", "sepsis", "9")

    assert unknown_pipeline.exit_code == EXIT_RUNTIME
    assert "ERROR" in unknown_pipeline.output
    assert unknown_model.exit_code == EXIT_RUNTIME


def test_promote_current_version(workspace):
    result = invoke(workspace, "promote", "sepsis", "1")

    assert result.exit_code == 0
    assert result.output.strip() == "sepsis v1 is already current"


def test_retrain(workspace):
    outcomes = write_json(
        workspace / "outcomes.json", {"P001": 1, "P002": 0, "P003": 1}
    )
    invoke(workspace, "run-once")

    result = invoke(
        workspace,
        "retrain",
        "sepsis",
        "--outcomes",
        str(outcomes),
        "--epochs",
        "10",
        "--lr",
        "0.00001",
    )

    assert result.exit_code == 0
    assert result.output.strip() == "Registered sepsis v2"
    baselines = workspace / "data" / "models" / "sepsis" / "v2.baselines.json"
    assert baselines.exists()
