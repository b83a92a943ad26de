"""
Hash-chained governance log: model registrations, promotions, retrains,
replays and configuration reloads. Every entry embeds the hash of the entry
before it, so any edit breaks the chain from that point.
"""

import hashlib
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from isthmus.settings.json import json_settings
from isthmus.utils.time import Clock, SystemClock

GENESIS = "0" * 64


def _entry_hash(entry: Dict[str, Any]) -> str:
    body = {key: value for key, value in entry.items() if key != "hash"}
    canonical = json_settings.canonical_dumps(body)
    return hashlib.sha256(canonical.encode("utf8")).hexdigest()


class AuditLog:
    def __init__(self, path: Union[str, Path], clock: Optional[Clock] = None) -> None:
        self.path = Path(path)
        self.clock = clock or SystemClock()
        self._lock = threading.Lock()
        self._last_hash: Optional[str] = None

    def _tail_hash(self) -> str:
        if self._last_hash is None:
            entries = self.entries()
            self._last_hash = entries[-1]["hash"] if entries else GENESIS
        return self._last_hash

    def record(self, event: str, **data: Any) -> Dict[str, Any]:
        with self._lock:
            entry = {
                "at": self.clock.timestamp(),
                "event": event,
                "data": data,
                "prev_hash": self._tail_hash(),
            }
            entry["hash"] = _entry_hash(entry)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf8") as audit_file:
                audit_file.write(json_settings.canonical_dumps(entry) + "\n")
            self._last_hash = entry["hash"]
            return entry

    def entries(self) -> List[Dict[str, Any]]:
        if not self.path.exists():
            return []
        with open(self.path, "r", encoding="utf8") as audit_file:
            return [json_settings.loads(line) for line in audit_file if line.strip()]

    def verify(self) -> List[int]:
        """Returns the 1-based numbers of the entries breaking the chain."""
        broken = []
        previous = GENESIS
        if not self.path.exists():
            return broken
        with open(self.path, "r", encoding="utf8") as audit_file:
            for number, line in enumerate(audit_file, start=1):
                try:
                    entry = json_settings.loads(line)
                except ValueError:
                    broken.append(number)
                    continue
                chained = entry.get("prev_hash") == previous
                if not chained or entry.get("hash") != _entry_hash(entry):
                    broken.append(number)
                previous = entry.get("hash", "")
        return broken
