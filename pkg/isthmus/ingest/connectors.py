"""
Connectors fetch the documents of one source and number them in fetch order.
There is one connector per source; the pipelines reading a source share its
sequence space through the archive.
"""

from abc import ABC, abstractmethod
from typing import AsyncIterator, Callable, Optional, Set

from isthmus.config.models import SourceKind, SourceSpec
from isthmus.monitor.logs import get_logger, log_extra
from isthmus.utils.aio import HTTPHandler
from isthmus.utils.time import Clock

from .files import scan_file_drop
from .http import drain_stream, poll_http
from .payloads import FetchResult

logger = get_logger("ingest")

SeenProvider = Callable[[], Set[str]]


class Connector(ABC):
    """Fetches the documents of a source newer than a cursor."""

    def __init__(self, source: SourceSpec, *, batch_size: int, clock: Clock) -> None:
        self.source = source
        self.batch_size = batch_size
        self.clock = clock

    @property
    def source_id(self) -> str:
        return self.source.id

    @abstractmethod
    async def fetch(self, cursor: Optional[str], sequence_start: int) -> FetchResult:
        ...

    def max_fetches(self) -> int:
        return 1

    async def fetches(
        self, cursor: Optional[str], sequence_start: int
    ) -> AsyncIterator[FetchResult]:
        """
        Yields up to `max_fetches` fetches, each starting where the previous
        one ended. Stops after a fetch that numbered nothing. The consumer
        commits each fetch before asking for the next one.
        """
        for _ in range(self.max_fetches()):
            fetch = await self.fetch(cursor, sequence_start)
            logger.debug(
                "Fetched %s documents from %s",
                len(fetch.payloads) + len(fetch.quarantined),
                self.source_id,
                extra=log_extra(
                    stage="fetch",
                    source_id=self.source_id,
                    cursor=cursor,
                    sequence_start=sequence_start,
                    retries=fetch.retries,
                ),
            )
            yield fetch
            if not fetch.sequences and not fetch.seen_hashes:
                break
            sequence_start = fetch.last_sequence(sequence_start)
            cursor = fetch.cursor


class HttpPollConnector(Connector):
    def __init__(
        self,
        source: SourceSpec,
        *,
        http: HTTPHandler,
        batch_size: int,
        clock: Clock,
    ) -> None:
        super().__init__(source, batch_size=batch_size, clock=clock)
        self.http = http

    async def fetch(self, cursor: Optional[str], sequence_start: int) -> FetchResult:
        return await poll_http(
            self.source,
            cursor,
            http=self.http,
            clock=self.clock,
            sequence_start=sequence_start,
        )


class StreamConnector(HttpPollConnector):
    """Drains a long-poll endpoint up to `max_drains` times per cycle."""

    def max_fetches(self) -> int:
        return self.source.max_drains

    async def fetch(self, cursor: Optional[str], sequence_start: int) -> FetchResult:
        return await drain_stream(
            self.source,
            self.batch_size,
            cursor,
            http=self.http,
            clock=self.clock,
            sequence_start=sequence_start,
        )


class FileDropConnector(Connector):
    """
    Scans a drop directory. Files already numbered are recognized by content
    hash, so numbering resumes after the last committed sequence.
    """

    def __init__(
        self,
        source: SourceSpec,
        *,
        seen: SeenProvider,
        batch_size: int,
        clock: Clock,
    ) -> None:
        super().__init__(source, batch_size=batch_size, clock=clock)
        self.seen = seen

    async def fetch(self, cursor: Optional[str], sequence_start: int) -> FetchResult:
        return scan_file_drop(
            self.source, self.seen(), clock=self.clock, sequence_start=sequence_start
        )


def create_connector(
    source: SourceSpec,
    *,
    http: HTTPHandler,
    batch_size: int,
    clock: Clock,
    seen: Optional[SeenProvider] = None,
) -> Connector:
    if source.kind is SourceKind.FILE_DROP:
        return FileDropConnector(
            source, seen=seen or set, batch_size=batch_size, clock=clock
        )
    if source.kind is SourceKind.STREAM:
        return StreamConnector(source, http=http, batch_size=batch_size, clock=clock)
    return HttpPollConnector(source, http=http, batch_size=batch_size, clock=clock)
