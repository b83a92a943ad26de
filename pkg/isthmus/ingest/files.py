from pathlib import Path
from typing import AbstractSet, Dict, List, Set

from isthmus.common.canonical import content_hash, stable_hash
from isthmus.config.models import SourceSpec
from isthmus.settings.json import json_settings
from isthmus.utils.time import Clock

from .exceptions import SourceUnavailableError
from .payloads import FetchResult, QuarantinedDocument, RawPayload


def scan_file_drop(
    source: SourceSpec,
    seen: AbstractSet[str],
    *,
    clock: Clock,
    sequence_start: int = 0,
) -> FetchResult:
    """
    Reads the `*.json` files of the drop directory, by name, whose content hash
    was not seen before. Files are never modified or removed.
    """
    assert source.directory is not None
    directory = Path(source.directory)
    if not directory.is_dir():
        raise SourceUnavailableError(source.id, f"directory not found: {directory}")

    fetched_at = clock.now()
    payloads: List[RawPayload] = []
    quarantined: List[QuarantinedDocument] = []
    hashes: Dict[int, str] = {}
    known: Set[str] = set(seen)
    sequence = sequence_start

    for path in sorted(directory.glob("*.json")):
        try:
            data = path.read_bytes()
        except OSError as read_error:
            quarantined.append(
                QuarantinedDocument(
                    source.id,
                    None,
                    path.name,
                    f"unreadable file: {read_error}",
                    fetched_at,
                )
            )
            continue

        try:
            body = json_settings.loads(data.decode("utf8"))
        except (ValueError, UnicodeDecodeError) as decode_error:
            body = None
            problem = f"malformed JSON in {path.name}: {decode_error}"
            digest = stable_hash(data)
        else:
            problem = None
            digest = content_hash(body)

        if digest in known:
            continue
        known.add(digest)
        sequence += 1
        hashes[sequence] = digest

        if problem is None:
            payloads.append(RawPayload.create(source.id, sequence, body, fetched_at))
        else:
            quarantined.append(
                QuarantinedDocument(
                    source.id,
                    sequence,
                    data.decode("utf8", "replace"),
                    problem,
                    fetched_at,
                )
            )
    return FetchResult(payloads, quarantined, None, 0, hashes)
