"""
SQLAlchemy implementation of the score store. SQLite by default; any dialect
supporting INSERT .. ON CONFLICT (SQLite, PostgreSQL) can be used through
`StoreSpec.database_url`.
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Union

from sqlalchemy import (
    Column,
    Float,
    Integer,
    MetaData,
    String,
    Table,
    Text,
    UniqueConstraint,
    create_engine,
    event,
    func,
    select,
    update,
)
from sqlalchemy.dialects import postgresql, sqlite
from sqlalchemy.engine import Connection, Engine
from sqlalchemy.exc import SQLAlchemyError

from isthmus.common.types import DeploymentMode
from isthmus.featurize.engine import FeatureVector
from isthmus.featurize.locf import LocfKey, LocfState
from isthmus.monitor.logs import get_logger, log_extra
from isthmus.settings.json import json_settings
from isthmus.utils.time import format_timestamp, parse_timestamp

from .abc import ScoreStore
from .exceptions import CheckpointRegressionError, StoreError
from .models import BatchRecord, Checkpoint, OutboxEntry, ScoreRow, SourceState

logger = get_logger("store")

metadata = MetaData()


def _score_columns() -> List[Column]:
    return [
        Column("id", Integer, primary_key=True, autoincrement=True),
        Column("dedup_key", String, nullable=False, unique=True),
        Column("pipeline", String, nullable=False, index=True),
        Column("model_id", String, nullable=False, index=True),
        Column("version", Integer, nullable=False),
        Column("patient_id", String, nullable=False),
        Column("batch_id", String, nullable=False),
        Column("mode", String, nullable=False),
        Column("score", Float, nullable=False),
        Column("risk_level", String, nullable=False),
        Column("scored_at", String, nullable=False),
        Column("document", Text, nullable=False),
    ]


scores = Table("scores", metadata, *_score_columns())

replay_scores = Table("replay_scores", metadata, *_score_columns())

outbox = Table(
    "outbox",
    metadata,
    Column("id", Integer, primary_key=True, autoincrement=True),
    Column("dedup_key", String, nullable=False, unique=True),
    Column("pipeline", String, nullable=False, index=True),
    Column("sink", String, nullable=False),
    Column("body", Text, nullable=False),
    Column("attempts", Integer, nullable=False, default=0),
    Column("delivered_at", String, nullable=True),
)

checkpoints = Table(
    "checkpoints",
    metadata,
    Column("pipeline", String, primary_key=True),
    Column("batch_id", String, nullable=True),
    Column("last_sequence", Integer, nullable=False),
    Column("committed_at", String, nullable=False),
)

source_states = Table(
    "source_states",
    metadata,
    Column("source_id", String, primary_key=True),
    Column("cursor", String, nullable=True),
    Column("last_sequence", Integer, nullable=False),
    Column("committed_at", String, nullable=False),
)

fetch_quarantine = Table(
    "fetch_quarantine",
    metadata,
    Column("source_id", String, primary_key=True),
    Column("sequence", Integer, primary_key=True),
)

batches = Table(
    "batches",
    metadata,
    Column("id", Integer, primary_key=True, autoincrement=True),
    Column("pipeline", String, nullable=False, index=True),
    Column("batch_id", String, nullable=False),
    Column("source_id", String, nullable=False),
    Column("first_sequence", Integer, nullable=False),
    Column("last_sequence", Integer, nullable=False),
    Column("scored_at", String, nullable=False),
    Column("committed_at", String, nullable=False),
    Column("payloads", Integer, nullable=False, default=0),
    Column("quarantined", Integer, nullable=False, default=0),
    Column("scores", Integer, nullable=False, default=0),
    UniqueConstraint("pipeline", "batch_id"),
)

locf_state = Table(
    "locf_state",
    metadata,
    Column("pipeline", String, primary_key=True),
    Column("patient_id", String, primary_key=True),
    Column("feature", String, primary_key=True),
    Column("value", Text, nullable=False),
)

seen_files = Table(
    "seen_files",
    metadata,
    Column("source_id", String, primary_key=True),
    Column("content_hash", String, primary_key=True),
)

metric_counters = Table(
    "metrics",
    metadata,
    Column("pipeline", String, primary_key=True),
    Column("name", String, primary_key=True),
    Column("value", Integer, nullable=False),
)


def sqlite_url(path: Union[str, Path]) -> str:
    return f"sqlite:///{Path(path)}"


class SQLScoreStore(ScoreStore):
    def __init__(self, url: str, *, engine: Optional[Engine] = None) -> None:
        self.url = url
        self.engine = engine or create_engine(url)
        dialect = self.engine.dialect.name
        if dialect == "sqlite":
            self._dialect = sqlite
            event.listen(self.engine, "connect", _configure_sqlite)
        elif dialect == "postgresql":
            self._dialect = postgresql
        else:
            raise StoreError(f"Unsupported database dialect: {dialect}.")
        metadata.create_all(self.engine)

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "SQLScoreStore":
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        return cls(sqlite_url(path))

    def close(self) -> None:
        self.engine.dispose()

    def _insert(self, table: Table):
        return self._dialect.insert(table)

    def _insert_rows(
        self, connection: Connection, table: Table, rows: Sequence[ScoreRow]
    ) -> List[ScoreRow]:
        inserted = []
        for row in rows:
            values = _score_values(row)
            statement = self._insert(table).values(**values).on_conflict_do_nothing()
            if connection.execute(statement).rowcount:
                inserted.append(row)
        return inserted

    def put_scores(
        self, rows: Sequence[ScoreRow], *, sink: Optional[str] = None
    ) -> int:
        try:
            with self.engine.begin() as connection:
                inserted = self._insert_rows(connection, scores, rows)
                if sink:
                    for row in inserted:
                        connection.execute(
                            self._insert(outbox)
                            .values(
                                dedup_key=row.dedup_key,
                                pipeline=row.pipeline,
                                sink=sink,
                                body=json_settings.canonical_dumps(row.sink_body()),
                                attempts=0,
                                delivered_at=None,
                            )
                            .on_conflict_do_nothing()
                        )
        except SQLAlchemyError as db_error:
            raise StoreError(f"Cannot persist scores: {db_error}") from db_error

        skipped = len(rows) - len(inserted)
        if skipped:
            logger.info(
                "Skipped %s score rows already stored",
                skipped,
                extra=log_extra(stage="persist", skipped=skipped),
            )
        return len(inserted)

    def put_replay_scores(self, rows: Sequence[ScoreRow]) -> int:
        with self.engine.begin() as connection:
            for row in rows:
                values = _score_values(row)
                statement = self._insert(replay_scores).values(**values)
                statement = statement.on_conflict_do_update(
                    index_elements=["dedup_key"],
                    set_={
                        key: statement.excluded[key]
                        for key in values
                        if key != "dedup_key"
                    },
                )
                connection.execute(statement)
        return len(rows)

    def read_checkpoint(self, pipeline: str) -> Optional[Checkpoint]:
        with self.engine.connect() as connection:
            row = connection.execute(
                select(checkpoints).where(checkpoints.c.pipeline == pipeline)
            ).first()
        if row is None:
            return None
        return Checkpoint(
            row.pipeline,
            row.batch_id,
            row.last_sequence,
            parse_timestamp(row.committed_at),
        )

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
        checkpoint = Checkpoint(pipeline, batch_id, last_sequence, committed_at)
        values = checkpoint.to_dict()
        with self.engine.begin() as connection:
            current = connection.execute(
                select(checkpoints.c.last_sequence).where(
                    checkpoints.c.pipeline == pipeline
                )
            ).scalar()
            if current is not None and current > last_sequence:
                raise CheckpointRegressionError(pipeline, current, last_sequence)

            if batch is not None:
                connection.execute(
                    self._insert(batches)
                    .values(
                        pipeline=batch.pipeline,
                        batch_id=batch.batch_id,
                        source_id=batch.source_id,
                        first_sequence=batch.first_sequence,
                        last_sequence=batch.last_sequence,
                        scored_at=format_timestamp(batch.scored_at),
                        committed_at=format_timestamp(batch.committed_at),
                        payloads=batch.payloads,
                        quarantined=batch.quarantined,
                        scores=batch.scores,
                    )
                    .on_conflict_do_nothing()
                )

            for (patient_id, feature), value in (locf_updates or {}).items():
                statement = self._insert(locf_state).values(
                    pipeline=pipeline,
                    patient_id=patient_id,
                    feature=feature,
                    value=json_settings.dumps(value),
                )
                connection.execute(
                    statement.on_conflict_do_update(
                        index_elements=["pipeline", "patient_id", "feature"],
                        set_={"value": statement.excluded.value},
                    )
                )

            if metrics:
                self._increment(connection, pipeline, metrics)

            self._upsert(connection, checkpoints, "pipeline", values)
        return checkpoint

    def _upsert(
        self, connection: Connection, table: Table, key: str, values: Dict[str, Any]
    ) -> None:
        statement = self._insert(table).values(**values)
        connection.execute(
            statement.on_conflict_do_update(
                index_elements=[key],
                set_={name: statement.excluded[name] for name in values if name != key},
            )
        )

    def read_source_state(self, source_id: str) -> Optional[SourceState]:
        with self.engine.connect() as connection:
            row = connection.execute(
                select(source_states).where(source_states.c.source_id == source_id)
            ).first()
        if row is None:
            return None
        return SourceState(
            row.source_id,
            row.cursor,
            row.last_sequence,
            parse_timestamp(row.committed_at),
        )

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
        state = SourceState(source_id, cursor, last_sequence, committed_at)
        values = state.to_dict()
        with self.engine.begin() as connection:
            current = connection.execute(
                select(source_states.c.last_sequence).where(
                    source_states.c.source_id == source_id
                )
            ).scalar()
            if current is not None and current > last_sequence:
                raise CheckpointRegressionError(source_id, current, last_sequence)

            for content_hash in seen_hashes:
                connection.execute(
                    self._insert(seen_files)
                    .values(source_id=source_id, content_hash=content_hash)
                    .on_conflict_do_nothing()
                )
            for sequence in quarantined:
                connection.execute(
                    self._insert(fetch_quarantine)
                    .values(source_id=source_id, sequence=sequence)
                    .on_conflict_do_nothing()
                )

            self._upsert(connection, source_states, "source_id", values)
        return state

    def quarantined_sequences(self, source_id: str, first: int, last: int) -> Set[int]:
        with self.engine.connect() as connection:
            return set(
                connection.execute(
                    select(fetch_quarantine.c.sequence).where(
                        fetch_quarantine.c.source_id == source_id,
                        fetch_quarantine.c.sequence.between(first, last),
                    )
                ).scalars()
            )

    def load_locf(self, pipeline: str) -> LocfState:
        with self.engine.connect() as connection:
            rows = connection.execute(
                select(locf_state).where(locf_state.c.pipeline == pipeline)
            ).all()
        return LocfState(
            {
                (row.patient_id, row.feature): json_settings.loads(row.value)
                for row in rows
            }
        )

    def seen_hashes(self, source_id: str) -> Set[str]:
        with self.engine.connect() as connection:
            return set(
                connection.execute(
                    select(seen_files.c.content_hash).where(
                        seen_files.c.source_id == source_id
                    )
                ).scalars()
            )

    def committed_batches(self, pipeline: str) -> List[BatchRecord]:
        with self.engine.connect() as connection:
            rows = connection.execute(
                select(batches)
                .where(batches.c.pipeline == pipeline)
                .order_by(batches.c.first_sequence, batches.c.id)
            ).all()
        return [
            BatchRecord(
                row.pipeline,
                row.batch_id,
                row.source_id,
                row.first_sequence,
                row.last_sequence,
                parse_timestamp(row.scored_at),
                parse_timestamp(row.committed_at),
                row.payloads,
                row.quarantined,
                row.scores,
            )
            for row in rows
        ]

    def pending_deliveries(self, pipeline: str) -> List[OutboxEntry]:
        with self.engine.connect() as connection:
            rows = connection.execute(
                select(outbox)
                .where(outbox.c.pipeline == pipeline, outbox.c.delivered_at.is_(None))
                .order_by(outbox.c.id)
            ).all()
        return [
            OutboxEntry(row.dedup_key, row.pipeline, row.sink, row.body, row.attempts)
            for row in rows
        ]

    def mark_delivered(self, dedup_key: str, delivered_at: datetime) -> None:
        with self.engine.begin() as connection:
            connection.execute(
                update(outbox)
                .where(outbox.c.dedup_key == dedup_key)
                .values(
                    delivered_at=format_timestamp(delivered_at),
                    attempts=outbox.c.attempts + 1,
                )
            )

    def record_delivery_attempt(self, dedup_key: str) -> None:
        with self.engine.begin() as connection:
            connection.execute(
                update(outbox)
                .where(outbox.c.dedup_key == dedup_key)
                .values(attempts=outbox.c.attempts + 1)
            )

    def count_scores(
        self, model_id: str, version: int, mode: Optional[DeploymentMode] = None
    ) -> int:
        query = select(func.count()).where(
            scores.c.model_id == model_id, scores.c.version == version
        )
        if mode is not None:
            query = query.where(scores.c.mode == DeploymentMode(mode).value)
        with self.engine.connect() as connection:
            return int(connection.execute(query).scalar() or 0)

    def score_documents(
        self, pipeline: str, *, replay: bool = False
    ) -> List[Dict[str, Any]]:
        table = replay_scores if replay else scores
        with self.engine.connect() as connection:
            rows = connection.execute(
                select(table.c.document)
                .where(table.c.pipeline == pipeline)
                .order_by(table.c.dedup_key)
            ).scalars()
            return [json_settings.loads(document) for document in rows]

    def recent_documents(self, pipeline: str, limit: int) -> List[Dict[str, Any]]:
        with self.engine.connect() as connection:
            rows = connection.execute(
                select(scores.c.document)
                .where(scores.c.pipeline == pipeline)
                .order_by(scores.c.id.desc())
                .limit(limit)
            ).scalars()
            return [json_settings.loads(document) for document in rows]

    def latest_features(self, model_id: str) -> Dict[str, FeatureVector]:
        vectors: Dict[str, FeatureVector] = {}
        with self.engine.connect() as connection:
            rows = connection.execute(
                select(scores.c.document)
                .where(scores.c.model_id == model_id)
                .order_by(scores.c.id)
            ).scalars()
            for document in rows:
                data = json_settings.loads(document)
                vectors[data["patient_id"]] = FeatureVector(
                    data["patient_id"],
                    data["features"],
                    frozenset(data["imputed_flags"]),
                    parse_timestamp(data["scored_at"]),
                )
        return vectors

    def _increment(
        self, connection: Connection, pipeline: str, counters: Mapping[str, int]
    ) -> None:
        for name, value in sorted(counters.items()):
            if not value:
                continue
            statement = self._insert(metric_counters).values(
                pipeline=pipeline, name=name, value=int(value)
            )
            connection.execute(
                statement.on_conflict_do_update(
                    index_elements=["pipeline", "name"],
                    set_={"value": metric_counters.c.value + statement.excluded.value},
                )
            )

    def increment_metrics(self, pipeline: str, counters: Mapping[str, int]) -> None:
        with self.engine.begin() as connection:
            self._increment(connection, pipeline, counters)

    def metrics(self) -> Dict[str, Dict[str, int]]:
        result: Dict[str, Dict[str, int]] = {}
        with self.engine.connect() as connection:
            for row in connection.execute(
                select(metric_counters).order_by(
                    metric_counters.c.pipeline, metric_counters.c.name
                )
            ):
                result.setdefault(row.pipeline, {})[row.name] = row.value
        return result

    def export_rows(self, pipeline: str) -> List[Dict[str, Any]]:
        with self.engine.connect() as connection:
            rows = connection.execute(
                select(scores)
                .where(scores.c.pipeline == pipeline)
                .order_by(scores.c.id)
            ).all()
        exported = []
        for row in rows:
            document = json_settings.loads(row.document)
            exported.append(
                {
                    "dedup_key": row.dedup_key,
                    "pipeline": row.pipeline,
                    "model_id": row.model_id,
                    "version": row.version,
                    "patient_id": row.patient_id,
                    "batch_id": row.batch_id,
                    "mode": row.mode,
                    "score": row.score,
                    "risk_level": row.risk_level,
                    "scored_at": row.scored_at,
                    "top_contributors": document["top_contributors"],
                }
            )
        return exported


def _score_values(row: ScoreRow) -> Dict[str, Any]:
    response = row.response
    return {
        "dedup_key": row.dedup_key,
        "pipeline": row.pipeline,
        "model_id": response.model_id,
        "version": response.version,
        "patient_id": response.patient_id,
        "batch_id": row.batch_id,
        "mode": row.mode.value,
        "score": response.score,
        "risk_level": response.risk_level,
        "scored_at": format_timestamp(response.scored_at),
        "document": json_settings.canonical_dumps(row.document()),
    }


def _configure_sqlite(dbapi_connection, _) -> None:
    cursor = dbapi_connection.cursor()
    cursor.execute("PRAGMA journal_mode=WAL")
    cursor.execute("PRAGMA synchronous=FULL")
    cursor.close()
