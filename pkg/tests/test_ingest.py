import pytest

from isthmus.config.models import SourceSpec
from isthmus.ingest.connectors import (
    FileDropConnector,
    HttpPollConnector,
    StreamConnector,
    create_connector,
)
from isthmus.ingest.exceptions import (
    AuthError,
    RetriesExhaustedError,
    SourceUnavailableError,
    UnexpectedStatusError,
)
from isthmus.ingest.files import scan_file_drop
from isthmus.ingest.http import decode_envelope, drain_stream, poll_http
from isthmus.ingest.payloads import FetchResult, RawPayload, assemble_batches
from isthmus.utils.aio import HTTPResult, TransportError
from tests.utils.artifacts import FAST_RETRY, write_json
from tests.utils.http import FakeHTTPHandler, envelope

ENDPOINT = "http://127.0.0.1:9/api/patients"


def _source(**options):
    options.setdefault("kind", "http_poll")
    options.setdefault("endpoint", ENDPOINT)
    return SourceSpec(id="ehr", retry=FAST_RETRY, timeout=5, **options)


def _patient(index):
    return {"patient": {"id": f"P{index:03d}"}}


def _items(count):
    return [_patient(index) for index in range(1, count + 1)]


async def _collect(connector, cursor=None, sequence_start=0):
    return [fetch async for fetch in connector.fetches(cursor, sequence_start)]


@pytest.mark.asyncio
async def test_poll_numbers_documents_in_order(clock):
    http = FakeHTTPHandler([envelope(_items(2), cursor="2")])

    fetch = await poll_http(_source(), None, http=http, clock=clock)

    assert [payload.sequence for payload in fetch.payloads] == [1, 2]
    assert fetch.payloads[0].body == _patient(1)
    assert fetch.payloads[0].fetched_at == clock.now()
    assert fetch.cursor == "2"
    assert fetch.retries == 0
    assert http.requests[0]["params"] == {}
    assert http.requests[0]["url"] == ENDPOINT


@pytest.mark.asyncio
async def test_poll_sends_the_cursor(clock):
    http = FakeHTTPHandler([envelope(_items(1), cursor="6")])

    fetch = await poll_http(_source(), "5", http=http, clock=clock, sequence_start=5)

    assert http.requests[0]["params"] == {"since": "5"}
    assert fetch.sequences == [6]


@pytest.mark.asyncio
async def test_poll_keeps_the_cursor_when_none_is_returned(clock):
    http = FakeHTTPHandler([envelope([], cursor=None)])

    fetch = await poll_http(_source(), "5", http=http, clock=clock)

    assert fetch.cursor == "5"
    assert fetch.payloads == []


@pytest.mark.asyncio
@pytest.mark.parametrize(
    "failure",
    [
        HTTPResult(500, b""),
        HTTPResult(503, b""),
        HTTPResult(408, b""),
        HTTPResult(429, b""),
        TransportError(ENDPOINT, "connection refused"),
    ],
)
async def test_transient_failures_are_retried(clock, failure):
    http = FakeHTTPHandler([failure, envelope(_items(1))])

    fetch = await poll_http(_source(), None, http=http, clock=clock)

    assert fetch.retries == 1
    assert len(fetch.payloads) == 1
    assert len(http.requests) == 2


@pytest.mark.asyncio
async def test_retries_are_bounded(clock):
    http = FakeHTTPHandler([HTTPResult(500, b""), HTTPResult(500, b"")])

    with pytest.raises(RetriesExhaustedError) as error:
        await poll_http(_source(), None, http=http, clock=clock)

    assert error.value.attempts == 2
    assert str(error.value).startswith("Fetching from ehr failed after 2 attempts: ")
    assert len(http.requests) == 2


@pytest.mark.asyncio
@pytest.mark.parametrize("status", [401, 403])
async def test_auth_failures_are_not_retried(clock, status):
    http = FakeHTTPHandler([HTTPResult(status, b"")])

    with pytest.raises(AuthError) as error:
        await poll_http(_source(), None, http=http, clock=clock)

    assert error.value.status == status
    assert len(http.requests) == 1


@pytest.mark.asyncio
async def test_unexpected_status(clock):
    http = FakeHTTPHandler([HTTPResult(404, b"")])

    with pytest.raises(UnexpectedStatusError):
        await poll_http(_source(), None, http=http, clock=clock)
    assert len(http.requests) == 1


@pytest.mark.asyncio
async def test_bearer_token_from_the_environment(clock, monkeypatch):
    monkeypatch.setenv("ISTHMUS_TOKEN_EHR", "secret")
    monkeypatch.setenv("EHR_KEY", "other")
    http = FakeHTTPHandler([envelope([]), envelope([])])

    await poll_http(_source(), None, http=http, clock=clock)
    await poll_http(_source(token_env="EHR_KEY"), None, http=http, clock=clock)

    assert http.requests[0]["headers"] == {"Authorization": "Bearer secret"}
    assert http.requests[1]["headers"] == {"Authorization": "Bearer other"}


@pytest.mark.asyncio
async def test_no_token_no_header(clock):
    http = FakeHTTPHandler([envelope([])])

    await poll_http(_source(), None, http=http, clock=clock)

    assert http.requests[0]["headers"] == {}


def test_malformed_items_are_quarantined_with_their_sequence(clock):
    result = envelope(
        [_patient(1), '{"patient": {"id": ', '{"patient": {"id": "P003"}}', 5]
    )

    fetch = decode_envelope(
        "ehr", result, since=None, fetched_at=clock.now(), sequence_start=10
    )

    assert [payload.sequence for payload in fetch.payloads] == [11, 13]
    assert fetch.payloads[1].body == _patient(3)
    assert [(item.sequence, item.reason[:13]) for item in fetch.quarantined] == [
        (12, "malformed JSO"),
        (14, "item is not a"),
    ]
    assert fetch.sequences == [11, 12, 13, 14]


def test_malformed_envelope_is_quarantined_without_sequence(clock):
    fetch = decode_envelope(
        "ehr",
        HTTPResult(200, b"<html>oops</html>"),
        since="7",
        fetched_at=clock.now(),
        sequence_start=7,
    )

    assert fetch.payloads == []
    assert fetch.quarantined[0].sequence is None
    assert fetch.quarantined[0].raw == "<html>oops</html>"
    assert fetch.cursor == "7"
    assert fetch.sequences == []


def _payloads(clock, sequences):
    return [
        RawPayload.create("ehr", sequence, _patient(sequence), clock.now())
        for sequence in sequences
    ]


def test_assemble_batches(clock):
    batches = assemble_batches(
        "ehr",
        _payloads(clock, [1, 2, 4, 5]),
        {3},
        batch_size=2,
        assembled_at=clock.now(),
    )

    assert [batch.batch_id for batch in batches] == ["ehr:1-2", "ehr:3-4", "ehr:5-5"]
    assert batches[0].quarantined == ()
    assert batches[1].quarantined == (3,)
    assert [payload.sequence for payload in batches[1].payloads] == [4]


def test_assemble_batches_of_nothing(clock):
    batches = assemble_batches("ehr", [], set(), batch_size=2, assembled_at=clock.now())

    assert batches == []


def test_fetch_last_sequence(clock):
    assert FetchResult(_payloads(clock, [6, 7]), [], "7").last_sequence(5) == 7
    assert FetchResult([], [], "5").last_sequence(5) == 5
    assert FetchResult([], [], None, 0, {3: "abc"}).last_sequence(2) == 3


@pytest.mark.asyncio
async def test_connector_fetches_from_a_cursor(clock):
    http = FakeHTTPHandler([envelope(_items(2), cursor="7")])
    connector = HttpPollConnector(_source(), http=http, batch_size=10, clock=clock)

    fetches = await _collect(connector, "5", 5)

    assert http.requests[0]["params"] == {"since": "5"}
    assert [fetch.sequences for fetch in fetches] == [[6, 7]]
    assert fetches[0].cursor == "7"


@pytest.mark.asyncio
async def test_connector_yields_unsequenced_documents(clock):
    http = FakeHTTPHandler([HTTPResult(200, b"not json")])
    connector = HttpPollConnector(_source(), http=http, batch_size=2, clock=clock)

    fetches = await _collect(connector)

    assert len(fetches) == 1
    assert fetches[0].sequences == []
    assert [item.sequence for item in fetches[0].quarantined] == [None]


@pytest.mark.asyncio
async def test_connector_fetch_errors_propagate(clock):
    http = FakeHTTPHandler([HTTPResult(401, b"")])
    connector = HttpPollConnector(_source(), http=http, batch_size=2, clock=clock)

    with pytest.raises(AuthError):
        await _collect(connector)


@pytest.mark.asyncio
async def test_drain_stream_long_polls(clock):
    http = FakeHTTPHandler([envelope([{"pm25": 10}], cursor="8")])
    source = _source(kind="stream", wait=1.5)

    fetch = await drain_stream(
        source, 20, "7", http=http, clock=clock, sequence_start=7
    )

    assert http.requests[0]["params"] == {"max": "20", "wait": "1.5", "since": "7"}
    assert fetch.sequences == [8]
    assert fetch.cursor == "8"


@pytest.mark.asyncio
async def test_stream_connector_drains_until_empty(clock):
    readings = [{"device_id": "S01", "pm25": value} for value in (10, 11, 12)]
    http = FakeHTTPHandler(
        [
            envelope(readings[:2], cursor="2"),
            envelope(readings[2:], cursor="3"),
            envelope([], cursor="3"),
        ]
    )
    source = _source(kind="stream", wait=0, max_drains=5)
    connector = StreamConnector(source, http=http, batch_size=2, clock=clock)

    fetches = await _collect(connector)

    assert [fetch.sequences for fetch in fetches] == [[1, 2], [3], []]
    assert [request["params"] for request in http.requests] == [
        {"max": "2", "wait": "0"},
        {"max": "2", "wait": "0", "since": "2"},
        {"max": "2", "wait": "0", "since": "3"},
    ]


@pytest.mark.asyncio
async def test_stream_connector_stops_after_max_drains(clock):
    http = FakeHTTPHandler(
        [envelope([{"n": index}], cursor=str(index)) for index in range(1, 5)]
    )
    source = _source(kind="stream", wait=0, max_drains=2)
    connector = StreamConnector(source, http=http, batch_size=5, clock=clock)

    fetches = await _collect(connector)

    assert [fetch.sequences for fetch in fetches] == [[1], [2]]
    assert len(http.requests) == 2


@pytest.fixture
def drop(tmp_path):
    folder = tmp_path / "drop"
    folder.mkdir()
    write_json(folder / "a.json", _patient(1))
    write_json(folder / "b.json", _patient(2))
    (folder / "c.json").write_text('{"patient": ', encoding="utf8")
    (folder / "notes.txt").write_text("ignored", encoding="utf8")
    return folder


def _drop_source(folder):
    return SourceSpec(id="drop", kind="file_drop", directory=str(folder))


def test_scan_file_drop(drop, clock):
    fetch = scan_file_drop(_drop_source(drop), set(), clock=clock)

    assert [payload.body for payload in fetch.payloads] == [_patient(1), _patient(2)]
    assert [item.sequence for item in fetch.quarantined] == [3]
    assert "c.json" in fetch.quarantined[0].reason
    assert sorted(fetch.seen_hashes) == [1, 2, 3]

    again = scan_file_drop(
        _drop_source(drop), set(fetch.seen_hashes.values()), clock=clock
    )
    assert again.payloads == [] and again.quarantined == []


def test_identical_files_are_read_once(drop, clock):
    write_json(drop / "a2.json", _patient(1))

    fetch = scan_file_drop(_drop_source(drop), set(), clock=clock)

    assert len(fetch.payloads) == 2


def test_missing_drop_directory(tmp_path, clock):
    with pytest.raises(SourceUnavailableError):
        scan_file_drop(_drop_source(tmp_path / "nowhere"), set(), clock=clock)


@pytest.mark.asyncio
async def test_file_drop_connector_numbers_new_files_only(drop, clock):
    seen = set()
    connector = FileDropConnector(
        _drop_source(drop), seen=lambda: seen, batch_size=2, clock=clock
    )

    first = await _collect(connector)
    seen.update(first[0].seen_hashes.values())
    write_json(drop / "d.json", _patient(4))
    second = await _collect(connector, None, first[0].last_sequence(0))

    assert [fetch.sequences for fetch in first] == [[1, 2, 3]]
    assert [fetch.sequences for fetch in second] == [[4]]
    assert [payload.body for payload in second[0].payloads] == [_patient(4)]


def test_create_connector(tmp_path, clock):
    http = FakeHTTPHandler()

    assert isinstance(
        create_connector(_source(), http=http, batch_size=1, clock=clock),
        HttpPollConnector,
    )
    assert isinstance(
        create_connector(_source(kind="stream"), http=http, batch_size=1, clock=clock),
        StreamConnector,
    )
    assert isinstance(
        create_connector(_drop_source(tmp_path), http=http, batch_size=1, clock=clock),
        FileDropConnector,
    )
