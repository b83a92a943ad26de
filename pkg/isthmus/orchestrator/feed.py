"""
The feed of a source: its single connector fetches, archives and commits the
source state; every pipeline reading the source takes its batches back from
the archive, after its own checkpoint.
"""

import asyncio
import time
from dataclasses import dataclass
from typing import List, Optional

from isthmus.config.models import SourceSpec
from isthmus.ingest.connectors import Connector, create_connector
from isthmus.ingest.payloads import Batch, FetchResult, assemble_batches
from isthmus.monitor.logs import get_logger, log_extra
from isthmus.store.exceptions import ArchiveConflictError, ArchiveGapError

from .runs import Stage
from .services import EngineServices

logger = get_logger("orchestrator")


@dataclass
class PullReport:
    source_id: str
    fetched: int = 0
    archived: int = 0
    unsequenced: int = 0
    retries: int = 0
    fetch_ms: float = 0.0
    archive_ms: float = 0.0


def _elapsed(started: float) -> float:
    return (time.perf_counter() - started) * 1000


class SourceFeed:
    """
    Owns the connector of one source. Pulls are serialized per source, and a
    fetch is archived before the source state moves past it: a fetch lost to
    a crash is numbered again identically, and the archive keeps only the
    first copy of each sequence.
    """

    def __init__(
        self,
        source: SourceSpec,
        services: EngineServices,
        *,
        batch_size: int,
    ) -> None:
        self.source = source
        self.services = services
        self.batch_size = batch_size
        self._lock: Optional[asyncio.Lock] = None
        self.connector: Connector = create_connector(
            source,
            http=services.http,
            batch_size=batch_size,
            clock=services.clock,
            seen=lambda: services.store.seen_hashes(source.id),
        )

    @property
    def source_id(self) -> str:
        return self.source.id

    def lock(self) -> asyncio.Lock:
        if self._lock is None:
            self._lock = asyncio.Lock()
        return self._lock

    def last_sequence(self) -> int:
        state = self.services.store.read_source_state(self.source_id)
        return state.last_sequence if state else 0

    def _quarantine(self, fetch: FetchResult) -> None:
        for document in fetch.quarantined:
            self.services.quarantine.put(
                document.source_id,
                stage=Stage.FETCH.value,
                reason=document.reason,
                raw=document.raw,
                at=document.fetched_at,
                sequence=document.sequence,
            )

    def _check_numbering(self, fetch: FetchResult) -> None:
        """A sequence fetched again must carry the content it was archived with."""
        archived = self.services.archive.last_sequence(self.source_id)
        again = [payload for payload in fetch.payloads if payload.sequence <= archived]
        if not again:
            return
        first = min(payload.sequence for payload in again)
        last = max(payload.sequence for payload in again)
        known = {
            payload.sequence: payload.content_hash
            for payload in self.services.archive.read_archive(
                self.source_id, first, last
            )
        }
        for payload in again:
            if known.get(payload.sequence) != payload.content_hash:
                raise ArchiveConflictError(self.source_id, payload.sequence)

    async def pull(self) -> PullReport:
        """Fetches what the source holds past its committed state."""
        services = self.services
        report = PullReport(self.source_id)
        async with self.lock():
            state = services.store.read_source_state(self.source_id)
            cursor = state.cursor if state else None
            last = state.last_sequence if state else 0

            started = time.perf_counter()
            async for fetch in self.connector.fetches(cursor, last):
                report.fetch_ms += _elapsed(started)
                report.retries += fetch.retries
                self._quarantine(fetch)
                report.unsequenced += sum(
                    1 for document in fetch.quarantined if document.sequence is None
                )

                started = time.perf_counter()
                self._check_numbering(fetch)
                report.archived += services.archive.append_archive(fetch.payloads)
                ended = fetch.last_sequence(last)
                if ended != last or fetch.cursor != cursor:
                    services.store.commit_source_state(
                        self.source_id,
                        fetch.cursor,
                        last_sequence=ended,
                        committed_at=services.clock.now(),
                        seen_hashes=fetch.seen_hashes.values(),
                        quarantined=fetch.quarantined_sequences,
                    )
                report.archive_ms += _elapsed(started)

                if fetch.sequences:
                    report.fetched += len(fetch.sequences)
                    services.missing.observe(self.source_id)
                cursor, last = fetch.cursor, ended
                started = time.perf_counter()

        if report.fetched:
            logger.debug(
                "Archived %s of %s documents fetched from %s",
                report.archived,
                report.fetched,
                self.source_id,
                extra=log_extra(
                    stage="archive",
                    source_id=self.source_id,
                    cursor=cursor,
                    last_sequence=last,
                    retries=report.retries,
                ),
            )
        return report

    def batches(self, after: int) -> List[Batch]:
        """
        Batches of the sequences committed for the source past `after`. Every
        sequence is either archived or was quarantined when fetched.
        """
        through = self.last_sequence()
        if through <= after:
            return []
        first = after + 1
        payloads = self.services.archive.read_archive(self.source_id, first, through)
        quarantined = self.services.store.quarantined_sequences(
            self.source_id, first, through
        )
        found = len(payloads) + len(quarantined)
        if found != through - after:
            raise ArchiveGapError(self.source_id, first, through, found)
        return assemble_batches(
            self.source_id,
            payloads,
            quarantined,
            batch_size=self.batch_size,
            assembled_at=self.services.clock.now(),
        )

    async def produce(
        self, after: int, queue: "asyncio.Queue[Optional[Batch]]"
    ) -> None:
        """Puts the batches past `after` on a bounded queue, then None."""
        try:
            for batch in self.batches(after):
                await queue.put(batch)
        finally:
            await queue.put(None)
