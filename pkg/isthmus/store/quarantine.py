"""
Side storage for documents and records rejected by parsing or validation:

    <data-dir>/quarantine/<source>/<timestamp>-<hash>.json
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from isthmus.common.canonical import stable_hash
from isthmus.monitor.logs import get_logger, log_extra
from isthmus.settings.json import json_settings
from isthmus.utils.time import ensure_utc, format_timestamp

logger = get_logger("store")


def _compact(value: datetime) -> str:
    value = ensure_utc(value)
    return value.strftime("%Y%m%dT%H%M%S") + f"{value.microsecond // 1000:03d}Z"


class QuarantineStore:
    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)

    def put(
        self,
        source_id: str,
        *,
        stage: str,
        reason: str,
        raw: Any,
        at: datetime,
        sequence: Optional[int] = None,
        pipeline: Optional[str] = None,
    ) -> Path:
        record = {
            "source_id": source_id,
            "pipeline": pipeline,
            "stage": stage,
            "reason": reason,
            "sequence": sequence,
            "received_at": format_timestamp(at),
            "raw": raw,
        }
        text = json_settings.canonical_dumps(record)
        folder = self.root / source_id
        folder.mkdir(parents=True, exist_ok=True)
        path = folder / f"{_compact(at)}-{stable_hash(text.encode('utf8'))}.json"
        if not path.exists():
            path.write_text(text, encoding="utf8")
        logger.error(
            "Quarantined a document of %s: %s",
            source_id,
            reason,
            extra=log_extra(
                pipeline,
                stage,
                source_id=source_id,
                sequence=sequence,
                quarantine_file=path.name,
            ),
        )
        return path

    def list(self, source_id: Optional[str] = None) -> List[Path]:
        if source_id is not None:
            folder = self.root / source_id
            return sorted(folder.glob("*.json")) if folder.is_dir() else []
        return sorted(self.root.glob("*/*.json")) if self.root.is_dir() else []

    def read(self, path: Union[str, Path]) -> Dict[str, Any]:
        return json_settings.loads(Path(path).read_text(encoding="utf8"))

    def count(self, source_id: Optional[str] = None) -> int:
        return len(self.list(source_id))
