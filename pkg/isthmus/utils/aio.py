import asyncio
from dataclasses import dataclass
from typing import Any, Dict, Optional

from blacksheep import Content
from blacksheep.client import ClientSession
from blacksheep.client.connection import ConnectionClosedError

from isthmus.errors import IsthmusError
from isthmus.settings.json import json_settings


class TransportError(IsthmusError):
    """
    Raised when a request could not be completed at all: connection refused,
    connection reset, or timeout.
    """

    def __init__(self, url: str, reason: str) -> None:
        super().__init__(f"The request to {url} failed: {reason}.")
        self.url = url
        self.reason = reason


class FailedRequestError(IsthmusError):
    def __init__(self, url: str, status: int, data: Any = None) -> None:
        super().__init__(
            f"The response status code does not indicate success: {status} ({url})."
        )
        self.url = url
        self.status = status
        self.data = data


@dataclass(frozen=True)
class HTTPResult:
    status: int
    body: bytes

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300

    def json(self) -> Any:
        return json_settings.loads(self.body.decode("utf8"))


class HTTPHandler:
    """
    Thin wrapper over the BlackSheep client session shared by source connectors,
    the score sink and the alert webhook. Transport failures are normalized to
    TransportError so callers can classify them as transient.
    """

    def __init__(
        self,
        session: Optional[ClientSession] = None,
        *,
        request_timeout: float = 60.0,
    ) -> None:
        self._session = session
        self._owns_session = session is None
        self.request_timeout = request_timeout

    @property
    def session(self) -> ClientSession:
        if self._session is None:
            self._session = ClientSession(
                follow_redirects=False,
                cookie_jar=False,
                request_timeout=self.request_timeout,
            )
        return self._session

    async def _send(self, url: str, coro, timeout: Optional[float]) -> HTTPResult:
        try:
            response = await asyncio.wait_for(coro, timeout or self.request_timeout)
            body = await response.read()
        except (asyncio.TimeoutError, TimeoutError) as timeout_error:
            raise TransportError(url, f"timeout {timeout_error}".strip())
        except OSError as os_error:
            # e.g. connection refused
            raise TransportError(url, str(os_error) or type(os_error).__name__)
        except ConnectionClosedError:
            raise TransportError(url, "connection closed")
        return HTTPResult(response.status, body or b"")

    async def get(
        self,
        url: str,
        *,
        params: Optional[Dict[str, str]] = None,
        headers: Optional[Dict[str, str]] = None,
        timeout: Optional[float] = None,
    ) -> HTTPResult:
        return await self._send(
            url, self.session.get(url, headers=headers, params=params), timeout
        )

    async def post_json(
        self,
        url: str,
        data: bytes,
        *,
        headers: Optional[Dict[str, str]] = None,
        timeout: Optional[float] = None,
    ) -> HTTPResult:
        return await self._send(
            url,
            self.session.post(
                url, Content(b"application/json", data), headers=headers
            ),
            timeout,
        )

    async def close(self) -> None:
        if self._owns_session and self._session is not None:
            await self._session.close()
            self._session = None
