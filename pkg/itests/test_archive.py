import pytest

from isthmus.monitor.alerts import AlertKind

from .fixtures import *  # NoQA
from .fixtures import ehr_config, open_engine, shadow


@pytest.mark.asyncio
async def test_tampered_archive_is_detected(tmp_path, mock_ehr, clock):
    handle = mock_ehr("ward_small")
    config_path = ehr_config(tmp_path, handle, [shadow("sepsis-shadow", "sepsis_v1")])

    async with open_engine(config_path, clock) as engine:
        for cycle in (1, 2):
            if cycle > 1:
                handle.advance_cycle()
            await engine.run_cycle("sepsis-shadow")
        clean = engine.verify_archive()

        archive_file = next((engine.layout.archive / "ehr").glob("*.jsonl"))
        lines = archive_file.read_text(encoding="utf8").splitlines(keepends=True)
        assert len(lines) == 20
        lines[14] = lines[14].replace("P005", "P050")
        archive_file.write_text("".join(lines), encoding="utf8")

        violations = engine.verify_archive()
        alerts = engine.services.alerts.pending()

    assert clean == []
    assert [(violation.line, violation.reason) for violation in violations] == [
        (15, "hash mismatch")
    ]
    integrity = [
        alert for alert in alerts if alert.kind is AlertKind.INTEGRITY_VIOLATION
    ]
    assert len(integrity) == 1
