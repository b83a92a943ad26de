"""
Source connectors: HTTP polling, file drop and long-polled streams.

Connectors live in `isthmus.ingest.connectors`; this package exports the data
types shared with the rest of the engine.
"""

from .exceptions import (
    AuthError,
    IngestError,
    RetriesExhaustedError,
    SourceUnavailableError,
    TransientStatusError,
    UnexpectedStatusError,
)
from .payloads import (
    Batch,
    FetchResult,
    QuarantinedDocument,
    RawPayload,
    assemble_batches,
    format_batch_id,
)

__all__ = [
    "AuthError",
    "Batch",
    "FetchResult",
    "IngestError",
    "QuarantinedDocument",
    "RawPayload",
    "RetriesExhaustedError",
    "SourceUnavailableError",
    "TransientStatusError",
    "UnexpectedStatusError",
    "assemble_batches",
    "format_batch_id",
]
