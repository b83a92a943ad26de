from dataclasses import dataclass
from datetime import datetime
from typing import Any, Dict, Optional

from isthmus.common.types import DeploymentMode
from isthmus.scoring.scorer import ScoreResponse
from isthmus.settings.json import json_settings
from isthmus.utils.time import format_timestamp

EXPORT_COLUMNS = (
    "dedup_key",
    "pipeline",
    "model_id",
    "version",
    "patient_id",
    "batch_id",
    "mode",
    "score",
    "risk_level",
    "scored_at",
    "top_contributors",
)


def dedup_key(
    pipeline: str, model_id: str, version: int, patient_id: str, batch_id: str
) -> str:
    return f"{pipeline}|{model_id}|{version}|{patient_id}|{batch_id}"


@dataclass(frozen=True)
class ScoreRow:
    pipeline: str
    mode: DeploymentMode
    batch_id: str
    response: ScoreResponse

    @property
    def dedup_key(self) -> str:
        return dedup_key(
            self.pipeline,
            self.response.model_id,
            self.response.version,
            self.response.patient_id,
            self.batch_id,
        )

    def document(self) -> Dict[str, Any]:
        data = self.response.to_dict()
        data.update(
            {
                "dedup_key": self.dedup_key,
                "pipeline": self.pipeline,
                "mode": self.mode.value,
                "batch_id": self.batch_id,
            }
        )
        return data

    def sink_body(self) -> Dict[str, Any]:
        """The JSON body POSTed to a live pipeline's sink."""
        data = self.response.to_dict()
        return {
            "dedup_key": self.dedup_key,
            "pipeline": self.pipeline,
            "patient_id": data["patient_id"],
            "model_id": data["model_id"],
            "version": data["version"],
            "score": data["score"],
            "risk_level": data["risk_level"],
            "top_contributors": data["top_contributors"],
            "scored_at": data["scored_at"],
        }


@dataclass(frozen=True)
class Checkpoint:
    pipeline: str
    batch_id: Optional[str]
    last_sequence: int
    committed_at: datetime

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pipeline": self.pipeline,
            "batch_id": self.batch_id,
            "last_sequence": self.last_sequence,
            "committed_at": format_timestamp(self.committed_at),
        }


@dataclass(frozen=True)
class SourceState:
    """How far the single connector of a source has fetched and archived."""

    source_id: str
    cursor: Optional[str]
    last_sequence: int
    committed_at: datetime

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source_id": self.source_id,
            "cursor": self.cursor,
            "last_sequence": self.last_sequence,
            "committed_at": format_timestamp(self.committed_at),
        }


@dataclass(frozen=True)
class BatchRecord:
    pipeline: str
    batch_id: str
    source_id: str
    first_sequence: int
    last_sequence: int
    scored_at: datetime
    committed_at: datetime
    payloads: int = 0
    quarantined: int = 0
    scores: int = 0


@dataclass(frozen=True)
class OutboxEntry:
    dedup_key: str
    pipeline: str
    sink: str
    body: str
    attempts: int = 0

    def json(self) -> Any:
        return json_settings.loads(self.body)


@dataclass(frozen=True)
class ArchiveViolation:
    path: str
    line: int
    reason: str

    def __str__(self) -> str:
        return f"{self.path}:{self.line}: {self.reason}"

    def to_dict(self) -> Dict[str, Any]:
        return {"path": self.path, "line": self.line, "reason": self.reason}
