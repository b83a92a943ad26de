import socket

import pytest
import pytest_asyncio

from isthmus.config.errors import ConfigParseError, ConfigValidationError
from isthmus.simharness import (
    FaultSchedule,
    PortInUseError,
    ScenarioGenerator,
    load_scenario,
    parse_scenario,
    sensor_stream,
    serve,
)
from isthmus.simharness.generator import UNITS, VITALS
from isthmus.simharness.server import MALFORMED_ITEM
from isthmus.utils.aio import HTTPHandler
from tests.conftest import scenario
from tests.utils.artifacts import get_free_port


def test_generator_is_deterministic():
    first = ScenarioGenerator(scenario("ward_small"))
    second = ScenarioGenerator(scenario("ward_small"))

    for cycle in (1, 2, 3):
        assert first.documents(cycle) == second.documents(cycle)
    # call order does not matter
    assert ScenarioGenerator(scenario("ward_small")).documents(3) == first.documents(3)
    assert first.outcomes() == second.outcomes()


def test_seed_changes_the_documents():
    assert (
        ScenarioGenerator(scenario("ward_small")).documents(1)
        != ScenarioGenerator(scenario("ward_small", seed=4)).documents(1)
    )


def test_admission_then_updates():
    generator = ScenarioGenerator(scenario("ward_small"))

    admissions = generator.documents(1)
    updates = generator.documents(2)

    assert [document["patient"]["id"] for document in admissions] == [
        f"P{index:03d}" for index in range(1, 11)
    ]
    assert all(document["encounter"]["unit"] in UNITS for document in admissions)
    assert all("age" in document["patient"] for document in admissions)
    assert all("encounter" not in document for document in updates)
    assert all(set(document["patient"]) == {"id"} for document in updates)
    assert generator.documents(4) == []
    assert generator.documents(0) == []


def test_values_stay_within_their_ranges():
    generator = ScenarioGenerator(scenario("trauma_e2e"))

    for cycle in range(1, 6):
        for document in generator.documents(cycle):
            for name, (_, _, low, high) in VITALS.items():
                assert low <= document["vitals"][0][name] <= high


def test_shifted_field():
    generator = ScenarioGenerator(scenario("heart_rate_shift"))

    def mean_heart_rate(cycle):
        values = [doc["vitals"][0]["heart_rate"] for doc in generator.documents(cycle)]
        return sum(values) / len(values)

    assert mean_heart_rate(1) < 100
    assert mean_heart_rate(2) > 115


def test_silent_cycles_and_partial_updates():
    script = scenario(
        "ward_small",
        update_fraction=0.5,
        faults=FaultSchedule(silent_cycles=[2]),
    )
    generator = ScenarioGenerator(script)

    assert generator.documents(2) == []
    assert 0 < len(generator.documents(3)) < 10


def test_value_overrides():
    script = parse_scenario(
        {
            "seed": 1,
            "patients": 2,
            "overrides": [
                {"cycle": 1, "patient_id": "P002", "field": "lactate", "value": 9.5},
                {
                    "cycle": 1,
                    "patient_id": "P001",
                    "field": "heart_rate",
                    "value": "??",
                },
            ],
        }
    )

    documents = ScenarioGenerator(script).documents(1)

    assert documents[1]["labs"][0]["lactate"] == 9.5
    assert documents[0]["vitals"][0]["heart_rate"] == "??"


def test_outcomes_keep_explicit_labels():
    outcomes = ScenarioGenerator(scenario("retrain")).outcomes()

    assert len(outcomes) == 20
    assert outcomes["P001"] == 1
    assert outcomes["P002"] == 0
    assert set(outcomes.values()) == {0, 1}


def test_sensor_readings():
    generator = ScenarioGenerator(scenario("sensors"))

    readings = generator.readings(1)

    assert len(readings) == 12
    assert {reading["device_id"] for reading in readings} == {"S01", "S02", "S03"}
    assert generator.readings(2) == []
    assert generator.readings(3) != readings


def test_invalid_scenarios(tmp_path):
    with pytest.raises(ConfigValidationError) as error:
        parse_scenario({"patients": -1, "colour": "red"})
    paths = sorted(issue.path for issue in error.value.issues)
    assert paths == ["$.colour", "$.patients"]

    with pytest.raises(ConfigParseError):
        load_scenario(tmp_path / "missing.json")

    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf8")
    with pytest.raises(ConfigParseError):
        load_scenario(path)


@pytest_asyncio.fixture
async def client():
    http = HTTPHandler(request_timeout=5)
    yield http
    await http.close()


@pytest.mark.asyncio
async def test_patients_endpoint_pages_with_the_cursor(harness, client):
    handle = harness("ward_small")
    url = handle.endpoint("/api/patients")

    first = (await client.get(url)).json()
    empty = (await client.get(url, params={"since": first["cursor"]})).json()
    handle.advance_cycle()
    second = (await client.get(url, params={"since": first["cursor"]})).json()

    assert first["cursor"] == "10"
    assert first["items"] == handle.state.generator.documents(1)
    assert empty == {"cursor": "10", "items": []}
    assert second["cursor"] == "20"
    assert second["items"] == handle.state.generator.documents(2)
    assert handle.patient_requests == 3


@pytest.mark.asyncio
async def test_invalid_cursor(harness, client):
    handle = harness("ward_small")

    result = await client.get(handle.endpoint("/api/patients"), params={"since": "x"})

    assert result.status == 400


@pytest.mark.asyncio
async def test_scripted_faults(harness, client):
    handle = harness("faults")
    url = handle.endpoint("/api/patients")

    failed = await client.get(url)
    malformed = (await client.get(url)).json()
    healthy = (await client.get(url)).json()

    assert failed.status == 500
    assert malformed["items"][0] == MALFORMED_ITEM
    assert malformed["items"][1:] == healthy["items"][1:]
    assert isinstance(healthy["items"][0], dict)


@pytest.mark.asyncio
async def test_token_is_required_when_scripted(harness, client):
    handle = harness("ward_small", token="s3cret")
    url = handle.endpoint("/api/patients")

    refused = await client.get(url)
    accepted = await client.get(url, headers={"Authorization": "Bearer s3cret"})

    assert refused.status == 401
    assert accepted.status == 200


@pytest.mark.asyncio
async def test_sink_and_webhook_record_bodies(harness, client):
    handle = harness("ward_small")

    sink = await client.post_json(handle.endpoint("/emr/score"), b'{"score":0.5}')
    handle.set_webhook_down(True)
    down = await client.post_json(handle.endpoint("/hooks/alerts"), b'{"n":1}')
    handle.set_webhook_down(False)
    up = await client.post_json(handle.endpoint("/hooks/alerts"), b'{"n":2}')

    assert (sink.status, down.status, up.status) == (200, 503, 200)
    assert handle.sink_requests() == [{"score": 0.5}]
    assert handle.sink_bodies() == [b'{"score":0.5}']
    assert handle.alert_requests() == [{"n": 2}]


@pytest.mark.asyncio
async def test_faulty_and_outcomes_endpoints(harness, client):
    handle = harness("retrain")

    faulty = await client.get(handle.endpoint("/api/faulty"))
    outcomes = await client.get(handle.endpoint("/api/outcomes"))

    assert faulty.status == 500
    assert outcomes.json() == handle.state.generator.outcomes()


@pytest.mark.asyncio
async def test_sensor_long_poll(client):
    with sensor_stream(scenario("sensors"), get_free_port()) as handle:
        url = handle.endpoint("/api/sensors")

        page = (await client.get(url, params={"max": "5", "wait": "0"})).json()
        rest = (await client.get(url, params={"since": "5", "max": "50"})).json()
        empty = (await client.get(url, params={"since": "12", "wait": "0.1"})).json()
        missing = await client.get(handle.endpoint("/api/patients"))

    assert len(page["items"]) == 5
    assert page["cursor"] == "5"
    assert len(rest["items"]) == 7
    assert empty == {"cursor": "12", "items": []}
    assert missing.status == 404


def test_port_in_use():
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as taken:
        taken.bind(("127.0.0.1", 0))
        taken.listen(1)
        port = taken.getsockname()[1]

        with pytest.raises(PortInUseError):
            serve(scenario("ward_small"), port)
