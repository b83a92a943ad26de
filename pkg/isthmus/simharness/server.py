"""
Mock EHR and sensor endpoints served by a BlackSheep application, run by
uvicorn in a background thread:

    GET  /api/patients?since=<cursor>            patient documents
    GET  /api/sensors?since=<cursor>&max=&wait=  air quality readings (long poll)
    GET  /api/outcomes                           outcome labels
    GET  /api/faulty                             always 500
    POST /emr/score                              recording score sink
    POST /hooks/alerts                           recording alert webhook
"""

import asyncio
import socket
import threading
import time
from contextlib import suppress
from typing import Any, List, Optional, Tuple

import uvicorn
from blacksheep import Application, Content, Request, Response, Router

from isthmus.common.canonical import canonical_bytes
from isthmus.errors import IsthmusError
from isthmus.settings.json import json_settings

from .generator import ScenarioGenerator
from .scenario import ScenarioScript

MALFORMED_ITEM = '{"patient": {"id": '
LONG_POLL_STEP = 0.02


class HarnessError(IsthmusError):
    """Raised when a harness server cannot run."""


class PortInUseError(HarnessError):
    def __init__(self, port: int) -> None:
        super().__init__(f"The port {port} is already in use.")
        self.port = port


def _json_response(status: int, data: Any) -> Response:
    return Response(status, None, Content(b"application/json", canonical_bytes(data)))


def _cursor(value: Optional[str]) -> Optional[int]:
    if not value:
        return 0
    try:
        cursor = int(value)
    except ValueError:
        return None
    return cursor if cursor >= 0 else None


class HarnessState:
    """
    Cursor state, fault counters and recorders of a scenario. The server thread
    and the test thread share it; every access holds the lock.
    """

    def __init__(self, script: ScenarioScript) -> None:
        self.script = script
        self.generator = ScenarioGenerator(script)
        self._lock = threading.Lock()
        self.cycle = 1
        self._documents: List[Any] = self.generator.documents(1)
        self._readings: List[Any] = self.generator.readings(1)
        self.patient_requests = 0
        self.sensor_requests = 0
        self._sink_calls = 0
        self._sink: List[bytes] = []
        self._alerts: List[bytes] = []
        self.webhook_down = script.faults.webhook_down

    def advance_cycle(self) -> int:
        with self._lock:
            self.cycle += 1
            self._documents.extend(self.generator.documents(self.cycle))
            self._readings.extend(self.generator.readings(self.cycle))
            return self.cycle

    @property
    def documents(self) -> List[Any]:
        with self._lock:
            return list(self._documents)

    @property
    def readings(self) -> List[Any]:
        with self._lock:
            return list(self._readings)

    def patients_page(
        self, since: int, authorization: Optional[str]
    ) -> Tuple[int, Any]:
        faults = self.script.faults
        with self._lock:
            self.patient_requests += 1
            request_number = self.patient_requests
            if request_number in faults.auth_fail_at or (
                self.script.token is not None
                and authorization != f"Bearer {self.script.token}"
            ):
                return 401, {"error": "unauthorized"}
            if request_number in faults.fail_500_at:
                return 500, {"error": "scripted failure"}

            items: List[Any] = self._documents[since:]
            cursor = str(since + len(items))
            if request_number in faults.malformed_at and items:
                items = [MALFORMED_ITEM] + items[1:]
            return 200, {"cursor": cursor, "items": items}

    def sensors_page(self, since: int, limit: int) -> Optional[Any]:
        with self._lock:
            self.sensor_requests += 1
            items = self._readings[since : since + limit]
            if not items:
                return None
            return {"cursor": str(since + len(items)), "items": items}

    def record_score(self, body: bytes) -> int:
        with self._lock:
            self._sink_calls += 1
            if self._sink_calls in self.script.faults.sink_fail_at:
                return 503
            self._sink.append(body)
            return 200

    def record_alert(self, body: bytes) -> int:
        with self._lock:
            if self.webhook_down:
                return 503
            self._alerts.append(body)
            return 200

    def sink_bodies(self) -> List[bytes]:
        with self._lock:
            return list(self._sink)

    def alert_bodies(self) -> List[bytes]:
        with self._lock:
            return list(self._alerts)


def create_app(
    state: HarnessState, *, patients: bool = True, sensors: bool = True
) -> Application:
    app = Application(router=Router())
    get = app.router.get
    post = app.router.post

    if patients:

        @get("/api/patients")
        async def get_patients(request: Request) -> Response:
            since = _cursor((request.query.get("since") or [""])[0])
            if since is None:
                return _json_response(400, {"error": "invalid cursor"})
            header = request.get_first_header(b"Authorization")
            status, data = state.patients_page(
                since, header.decode("latin-1") if header else None
            )
            return _json_response(status, data)

        @get("/api/outcomes")
        async def get_outcomes() -> Response:
            return _json_response(200, state.generator.outcomes())

        @get("/api/faulty")
        async def get_faulty() -> Response:
            return _json_response(500, {"error": "this endpoint always fails"})

        @post("/emr/score")
        async def post_score(request: Request) -> Response:
            body = await request.read() or b""
            return _json_response(state.record_score(body), {})

        @post("/hooks/alerts")
        async def post_alert(request: Request) -> Response:
            body = await request.read() or b""
            return _json_response(state.record_alert(body), {})

    if sensors:

        @get("/api/sensors")
        async def get_sensors(request: Request) -> Response:
            since = _cursor((request.query.get("since") or [""])[0])
            try:
                limit = int((request.query.get("max") or ["100"])[0])
                wait = float((request.query.get("wait") or ["0"])[0])
            except ValueError:
                return _json_response(400, {"error": "invalid max or wait"})
            if since is None or limit < 1:
                return _json_response(400, {"error": "invalid cursor or max"})

            deadline = time.monotonic() + wait
            while True:
                page = state.sensors_page(since, limit)
                if page is not None:
                    return _json_response(200, page)
                if time.monotonic() >= deadline:
                    return _json_response(200, {"cursor": str(since), "items": []})
                await asyncio.sleep(LONG_POLL_STEP)

    period = state.script.auto_advance_seconds
    if period:
        tasks: List["asyncio.Task[None]"] = []

        async def advance_periodically() -> None:
            while True:
                await asyncio.sleep(period)
                state.advance_cycle()

        async def start_ticker(application: Application) -> None:
            tasks.append(asyncio.ensure_future(advance_periodically()))

        async def stop_ticker(application: Application) -> None:
            for task in tasks:
                task.cancel()
                with suppress(asyncio.CancelledError):
                    await task

        app.on_start += start_ticker
        app.on_stop += stop_ticker

    return app


class ServerHandle:
    def __init__(
        self,
        state: HarnessState,
        server: uvicorn.Server,
        thread: threading.Thread,
        host: str,
        port: int,
    ) -> None:
        self.state = state
        self._server = server
        self._thread = thread
        self.host = host
        self.port = port

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def endpoint(self, path: str) -> str:
        return self.url + "/" + path.lstrip("/")

    @property
    def cycle(self) -> int:
        return self.state.cycle

    def advance_cycle(self) -> int:
        """Releases the documents and readings of the next cycle."""
        return self.state.advance_cycle()

    def sink_bodies(self) -> List[bytes]:
        """Raw bodies received by the score sink, in arrival order."""
        return self.state.sink_bodies()

    def sink_requests(self) -> List[Any]:
        return [json_settings.loads(body.decode("utf8")) for body in self.sink_bodies()]

    def alert_requests(self) -> List[Any]:
        return [
            json_settings.loads(body.decode("utf8"))
            for body in self.state.alert_bodies()
        ]

    @property
    def patient_requests(self) -> int:
        return self.state.patient_requests

    def set_webhook_down(self, down: bool) -> None:
        self.state.webhook_down = down

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(10)

    def __enter__(self) -> "ServerHandle":
        return self

    def __exit__(self, *args: Any) -> None:
        self.stop()


def ensure_port_free(host: str, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            probe.bind((host, port))
        except OSError as bind_error:
            raise PortInUseError(port) from bind_error


def _run(app: Application, state: HarnessState, host: str, port: int) -> ServerHandle:
    ensure_port_free(host, port)
    config = uvicorn.Config(
        app, host=host, port=port, log_level="warning", access_log=False, lifespan="on"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, name=f"harness-{port}", daemon=True)
    thread.start()

    deadline = time.monotonic() + 10
    while not server.started:
        if not thread.is_alive():
            raise HarnessError(f"The harness server on port {port} did not start.")
        if time.monotonic() > deadline:
            server.should_exit = True
            raise HarnessError(
                f"The harness server on port {port} did not start in time."
            )
        time.sleep(0.01)
    return ServerHandle(state, server, thread, host, port)


def serve(
    script: ScenarioScript, port: int, *, host: str = "127.0.0.1"
) -> ServerHandle:
    """Starts the mock EHR, with its sink, webhook and sensor endpoints."""
    state = HarnessState(script)
    return _run(create_app(state), state, host, port)


def sensor_stream(
    script: ScenarioScript, port: int, *, host: str = "127.0.0.1"
) -> ServerHandle:
    """Starts a server exposing only the sensor long-poll endpoint."""
    state = HarnessState(script)
    return _run(create_app(state, patients=False), state, host, port)
