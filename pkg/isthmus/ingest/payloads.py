from dataclasses import dataclass, field
from datetime import datetime
from typing import AbstractSet, Any, Dict, List, Optional, Sequence, Tuple

from isthmus.common.canonical import content_hash, stable_hash
from isthmus.common.types import SourceRef
from isthmus.utils.time import format_timestamp, parse_timestamp


@dataclass(frozen=True)
class RawPayload:
    """One fetched JSON document with its provenance; the unit of audit."""

    source_id: str
    sequence: int
    fetched_at: datetime
    body: Any
    content_hash: str

    @classmethod
    def create(
        cls, source_id: str, sequence: int, body: Any, fetched_at: datetime
    ) -> "RawPayload":
        # archive lines carry millisecond precision
        fetched_at = parse_timestamp(format_timestamp(fetched_at))
        return cls(source_id, sequence, fetched_at, body, content_hash(body))

    @property
    def ref(self) -> SourceRef:
        return SourceRef(self.source_id, self.sequence)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source_id": self.source_id,
            "sequence": self.sequence,
            "fetched_at": format_timestamp(self.fetched_at),
            "content_hash": self.content_hash,
            "body": self.body,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RawPayload":
        return cls(
            data["source_id"],
            data["sequence"],
            parse_timestamp(data["fetched_at"]),
            data["body"],
            data["content_hash"],
        )


@dataclass(frozen=True)
class QuarantinedDocument:
    """A fetched document that could not be parsed into a JSON body."""

    source_id: str
    sequence: Optional[int]
    raw: str
    reason: str
    fetched_at: datetime

    @property
    def content_hash(self) -> str:
        return stable_hash(self.raw.encode("utf8", "surrogateescape"))


@dataclass(frozen=True)
class FetchResult:
    payloads: List[RawPayload]
    quarantined: List[QuarantinedDocument]
    cursor: Optional[str]
    retries: int = 0
    # file drop: content hashes of every document numbered by this fetch
    seen_hashes: Dict[int, str] = field(default_factory=dict)

    @property
    def sequences(self) -> List[int]:
        values = [payload.sequence for payload in self.payloads]
        values.extend(
            item.sequence for item in self.quarantined if item.sequence is not None
        )
        return sorted(values)

    @property
    def quarantined_sequences(self) -> List[int]:
        return sorted(
            item.sequence for item in self.quarantined if item.sequence is not None
        )

    def last_sequence(self, sequence_start: int) -> int:
        return max(self.sequences + list(self.seen_hashes), default=sequence_start)


@dataclass
class Batch:
    """
    A contiguous run of sequences of one source. Sequences quarantined at fetch
    time are listed by number; their documents never reach the archive.
    """

    source_id: str
    first_sequence: int
    last_sequence: int
    payloads: List[RawPayload]
    quarantined: Tuple[int, ...]
    assembled_at: datetime

    @property
    def batch_id(self) -> str:
        return format_batch_id(self.source_id, self.first_sequence, self.last_sequence)


def format_batch_id(source_id: str, first: int, last: int) -> str:
    return f"{source_id}:{first}-{last}"


def assemble_batches(
    source_id: str,
    payloads: Sequence[RawPayload],
    quarantined: AbstractSet[int],
    *,
    batch_size: int,
    assembled_at: datetime,
) -> List[Batch]:
    """
    Splits archived payloads and fetch-quarantined sequence numbers into batches
    of at most `batch_size` sequences, in sequence order.
    """
    items: List[Tuple[int, Optional[RawPayload]]] = [
        (payload.sequence, payload) for payload in payloads
    ]
    items.extend((sequence, None) for sequence in quarantined)
    items.sort(key=lambda item: item[0])

    batches: List[Batch] = []
    for offset in range(0, len(items), batch_size):
        chunk = items[offset : offset + batch_size]
        batches.append(
            Batch(
                source_id=source_id,
                first_sequence=chunk[0][0],
                last_sequence=chunk[-1][0],
                payloads=[payload for _, payload in chunk if payload is not None],
                quarantined=tuple(
                    sequence for sequence, payload in chunk if payload is None
                ),
                assembled_at=assembled_at,
            )
        )
    return batches
