from abc import ABC, abstractmethod
from datetime import datetime
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set

from isthmus.common.types import DeploymentMode
from isthmus.featurize.engine import FeatureVector
from isthmus.featurize.locf import LocfKey, LocfState

from .models import BatchRecord, Checkpoint, OutboxEntry, ScoreRow, SourceState


class ScoreStore(ABC):
    """
    Relational persistence of scores, checkpoints and pipeline state. Every
    method is atomic: readers only ever see whole batches.
    """

    @abstractmethod
    def put_scores(
        self, rows: Sequence[ScoreRow], *, sink: Optional[str] = None
    ) -> int:
        """
        Inserts score rows, skipping rows whose dedup key exists, and returns the
        number inserted. When `sink` is given, inserted rows also enter the
        delivery outbox.
        """

    @abstractmethod
    def put_replay_scores(self, rows: Sequence[ScoreRow]) -> int:
        """Writes rows to the replay table, replacing rows with the same key."""

    @abstractmethod
    def read_checkpoint(self, pipeline: str) -> Optional[Checkpoint]:
        ...

    @abstractmethod
    def commit_checkpoint(
        self,
        pipeline: str,
        batch_id: Optional[str],
        *,
        last_sequence: int,
        committed_at: datetime,
        batch: Optional[BatchRecord] = None,
        locf_updates: Optional[Mapping[LocfKey, Any]] = None,
        metrics: Optional[Mapping[str, int]] = None,
    ) -> Checkpoint:
        """
        Moves the checkpoint of a pipeline forward, together with the state the
        batch produced, in one transaction.
        """

    @abstractmethod
    def read_source_state(self, source_id: str) -> Optional[SourceState]:
        ...

    @abstractmethod
    def commit_source_state(
        self,
        source_id: str,
        cursor: Optional[str],
        *,
        last_sequence: int,
        committed_at: datetime,
        seen_hashes: Iterable[str] = (),
        quarantined: Iterable[int] = (),
    ) -> SourceState:
        """
        Records, in one transaction, the cursor and last sequence a fetch ended
        at, the content hashes of the files it numbered and the sequences it
        quarantined.
        """

    @abstractmethod
    def quarantined_sequences(self, source_id: str, first: int, last: int) -> Set[int]:
        """Sequences of a source in first..last quarantined when fetched."""

    @abstractmethod
    def load_locf(self, pipeline: str) -> LocfState:
        ...

    @abstractmethod
    def seen_hashes(self, source_id: str) -> Set[str]:
        ...

    @abstractmethod
    def committed_batches(self, pipeline: str) -> List[BatchRecord]:
        ...

    @abstractmethod
    def pending_deliveries(self, pipeline: str) -> List[OutboxEntry]:
        ...

    @abstractmethod
    def mark_delivered(self, dedup_key: str, delivered_at: datetime) -> None:
        ...

    @abstractmethod
    def record_delivery_attempt(self, dedup_key: str) -> None:
        ...

    @abstractmethod
    def count_scores(
        self, model_id: str, version: int, mode: Optional[DeploymentMode] = None
    ) -> int:
        ...

    @abstractmethod
    def score_documents(
        self, pipeline: str, *, replay: bool = False
    ) -> List[Dict[str, Any]]:
        """Stored score documents of a pipeline, ordered by dedup key."""

    @abstractmethod
    def recent_documents(self, pipeline: str, limit: int) -> List[Dict[str, Any]]:
        """The last `limit` committed score documents of a pipeline."""

    @abstractmethod
    def latest_features(self, model_id: str) -> Dict[str, FeatureVector]:
        """The most recently scored feature vector of each patient, for a model."""

    @abstractmethod
    def increment_metrics(self, pipeline: str, counters: Mapping[str, int]) -> None:
        ...

    @abstractmethod
    def metrics(self) -> Dict[str, Dict[str, int]]:
        ...

    def close(self) -> None:
        """Releases connections."""
