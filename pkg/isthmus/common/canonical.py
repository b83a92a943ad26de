"""
Canonical JSON and the stable hashes derived from it.
"""

import hashlib
from typing import Any

from isthmus.settings.json import json_settings


def canonical_json(obj: Any) -> str:
    return json_settings.canonical_dumps(obj)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_json(obj).encode("utf8")


def stable_hash(data: bytes) -> str:
    # 64-bit digest, hex encoded
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def content_hash(body: Any) -> str:
    """Returns the 64-bit content hash of a JSON document, over its canonical form."""
    return stable_hash(canonical_bytes(body))
