"""
Append-only archive of raw payloads:

    <data-dir>/archive/<source>/<date>.jsonl

Each line is `<hash> <canonical-json>`, where the hash covers the JSON text of
the line. Files are only ever appended to.
"""

import os
import threading
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from isthmus.common.canonical import canonical_json, content_hash, stable_hash
from isthmus.ingest.payloads import RawPayload
from isthmus.monitor.logs import get_logger, log_extra
from isthmus.settings.json import json_settings

from .models import ArchiveViolation

logger = get_logger("store")


def archive_line(payload: RawPayload) -> str:
    text = canonical_json(payload.to_dict())
    return f"{stable_hash(text.encode('utf8'))} {text}\n"


class ArchiveStore:
    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)
        self._last_sequences: Dict[str, int] = {}
        self._lock = threading.Lock()

    def _source_dir(self, source_id: str) -> Path:
        return self.root / source_id

    def _files(self, source_id: str) -> List[Path]:
        folder = self._source_dir(source_id)
        if not folder.is_dir():
            return []
        return sorted(folder.glob("*.jsonl"))

    def _scan(self, source_id: str) -> Iterator[Tuple[Path, int, str]]:
        for path in self._files(source_id):
            with open(path, "rb") as archive_file:
                for number, raw in enumerate(archive_file, start=1):
                    yield path, number, raw.decode("utf8", "replace")

    def last_sequence(self, source_id: str) -> int:
        """The highest sequence archived for a source, 0 when none."""
        with self._lock:
            return self._last_sequence(source_id)

    def _last_sequence(self, source_id: str) -> int:
        if source_id not in self._last_sequences:
            last = 0
            for _, _, line in self._scan(source_id):
                record = _parse_line(line)
                if record is not None:
                    last = max(last, int(record.get("sequence", 0)))
            self._last_sequences[source_id] = last
        return self._last_sequences[source_id]

    def append_archive(self, payloads: Sequence[RawPayload]) -> int:
        """
        Appends payloads in sequence order. A payload whose sequence is not
        greater than the last archived one of its source is rejected.
        """
        appended = 0
        with self._lock:
            by_file: Dict[Path, List[str]] = {}
            ordered = sorted(payloads, key=lambda item: (item.source_id, item.sequence))
            for payload in ordered:
                last = self._last_sequence(payload.source_id)
                if payload.sequence <= last:
                    logger.debug(
                        "Rejected archive append of %s:%s, sequence regression",
                        payload.source_id,
                        payload.sequence,
                        extra=log_extra(
                            stage="archive",
                            source_id=payload.source_id,
                            sequence=payload.sequence,
                            last_sequence=last,
                        ),
                    )
                    continue
                path = (
                    self._source_dir(payload.source_id)
                    / f"{payload.fetched_at.strftime('%Y-%m-%d')}.jsonl"
                )
                by_file.setdefault(path, []).append(archive_line(payload))
                self._last_sequences[payload.source_id] = payload.sequence
                appended += 1

            for path, lines in by_file.items():
                path.parent.mkdir(parents=True, exist_ok=True)
                with open(path, "ab") as archive_file:
                    archive_file.write("".join(lines).encode("utf8"))
                    archive_file.flush()
                    os.fsync(archive_file.fileno())
        return appended

    def read_archive(
        self, source_id: str, first: int, last: int
    ) -> List[RawPayload]:
        """Payloads of a source with first <= sequence <= last, in order."""
        found = []
        for _, _, line in self._scan(source_id):
            record = _parse_line(line)
            if record is None:
                continue
            if first <= record["sequence"] <= last:
                found.append(RawPayload.from_dict(record))
        return sorted(found, key=lambda payload: payload.sequence)

    def sources(self) -> List[str]:
        if not self.root.is_dir():
            return []
        return sorted(item.name for item in self.root.iterdir() if item.is_dir())

    def line_count(self, source_id: Optional[str] = None) -> int:
        sources = [source_id] if source_id else self.sources()
        return sum(1 for source in sources for _ in self._scan(source))

    def verify_archive(self) -> List[ArchiveViolation]:
        """
        Re-hashes every line and checks that sequences strictly increase per
        source. Returns one violation per offending line.
        """
        violations = []
        for source_id in self.sources():
            previous = 0
            for path, number, line in self._scan(source_id):
                where = str(path.relative_to(self.root))
                reason, record = _verify_line(line)
                if reason is not None:
                    violations.append(ArchiveViolation(where, number, reason))
                    continue
                assert record is not None
                sequence = record.get("sequence")
                if not isinstance(sequence, int) or sequence <= previous:
                    violations.append(
                        ArchiveViolation(
                            where,
                            number,
                            f"sequence {sequence} does not follow {previous}",
                        )
                    )
                    continue
                previous = sequence
        return violations


def _parse_line(line: str) -> Optional[dict]:
    _, _, text = line.rstrip("\n").partition(" ")
    try:
        record = json_settings.loads(text)
    except ValueError:
        return None
    return record if isinstance(record, dict) else None


def _verify_line(line: str) -> Tuple[Optional[str], Optional[dict]]:
    if not line.endswith("\n"):
        return "truncated line", None
    recorded, separator, text = line[:-1].partition(" ")
    if not separator:
        return "missing hash separator", None
    if stable_hash(text.encode("utf8")) != recorded:
        return "hash mismatch", None
    try:
        record = json_settings.loads(text)
    except ValueError:
        return "malformed JSON", None
    if not isinstance(record, dict) or "body" not in record:
        return "not a payload record", None
    if record.get("content_hash") != content_hash(record["body"]):
        return "content hash does not match the body", None
    return None, record
