"""
Durable persistence: score tables, the raw payload archive, checkpoints,
pipeline state, the quarantine area and the governance audit log.
"""

from .abc import ScoreStore
from .archive import ArchiveStore, archive_line
from .audit import AuditLog
from .exceptions import (
    ArchiveConflictError,
    ArchiveGapError,
    CheckpointRegressionError,
    MissingArchiveRangeError,
    StoreError,
)
from .models import (
    EXPORT_COLUMNS,
    ArchiveViolation,
    BatchRecord,
    Checkpoint,
    OutboxEntry,
    ScoreRow,
    SourceState,
    dedup_key,
)
from .quarantine import QuarantineStore
from .sql import SQLScoreStore, sqlite_url

__all__ = [
    "EXPORT_COLUMNS",
    "ArchiveConflictError",
    "ArchiveGapError",
    "ArchiveStore",
    "ArchiveViolation",
    "AuditLog",
    "BatchRecord",
    "Checkpoint",
    "CheckpointRegressionError",
    "MissingArchiveRangeError",
    "OutboxEntry",
    "QuarantineStore",
    "SQLScoreStore",
    "ScoreRow",
    "ScoreStore",
    "SourceState",
    "StoreError",
    "archive_line",
    "dedup_key",
    "sqlite_url",
]
