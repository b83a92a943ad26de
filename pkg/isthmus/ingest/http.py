"""
HTTP polling and long-poll stream draining through the cursor envelope:

    GET <endpoint>?since=<cursor>  ->  {"cursor": "<opaque>", "items": [...]}
"""

from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

from isthmus.common.canonical import canonical_json
from isthmus.common.retry import call_with_retries
from isthmus.config.models import SourceSpec
from isthmus.env import get_source_token
from isthmus.monitor.logs import get_logger, log_extra
from isthmus.settings.json import json_settings
from isthmus.utils.aio import HTTPHandler, HTTPResult, TransportError
from isthmus.utils.time import Clock

from .exceptions import (
    AuthError,
    RetriesExhaustedError,
    TransientStatusError,
    UnexpectedStatusError,
)
from .payloads import FetchResult, QuarantinedDocument, RawPayload

logger = get_logger("ingest")

TRANSIENT_ERRORS = (TransportError, TransientStatusError)


def auth_headers(source: SourceSpec) -> Dict[str, str]:
    token = get_source_token(source.id, source.token_env or "")
    if not token:
        return {}
    return {"Authorization": f"Bearer {token}"}


def _decode_item(item: Any) -> Tuple[Optional[Any], Optional[str]]:
    """Returns (body, None) for a JSON document, (None, reason) otherwise."""
    if isinstance(item, (dict, list)):
        return item, None
    if isinstance(item, str):
        try:
            body = json_settings.loads(item)
        except ValueError as decode_error:
            return None, f"malformed JSON: {decode_error}"
        if isinstance(body, (dict, list)):
            return body, None
    return None, "item is not a JSON object or array"


def decode_envelope(
    source_id: str,
    result: HTTPResult,
    *,
    since: Optional[str],
    fetched_at: datetime,
    sequence_start: int,
    retries: int = 0,
) -> FetchResult:
    """
    Splits a cursor envelope into payloads and quarantined documents. Every
    item consumes one sequence number, in order.
    """
    try:
        envelope = result.json()
    except (ValueError, UnicodeDecodeError) as decode_error:
        envelope = None
        reason = f"malformed envelope: {decode_error}"
    else:
        reason = "envelope must be an object with an items list"

    if not isinstance(envelope, dict) or not isinstance(envelope.get("items"), list):
        raw = result.body.decode("utf8", "replace")
        rejected = QuarantinedDocument(source_id, None, raw, reason, fetched_at)
        return FetchResult([], [rejected], since, retries)

    cursor = envelope.get("cursor")
    if cursor is not None and not isinstance(cursor, str):
        cursor = str(cursor)

    payloads: List[RawPayload] = []
    quarantined: List[QuarantinedDocument] = []
    for index, item in enumerate(envelope["items"]):
        sequence = sequence_start + index + 1
        body, problem = _decode_item(item)
        if problem is None:
            payloads.append(RawPayload.create(source_id, sequence, body, fetched_at))
        else:
            raw = item if isinstance(item, str) else canonical_json(item)
            quarantined.append(
                QuarantinedDocument(source_id, sequence, raw, problem, fetched_at)
            )
    if cursor is None:
        cursor = since
    return FetchResult(payloads, quarantined, cursor, retries)


async def _get_with_retries(
    source: SourceSpec,
    http: HTTPHandler,
    params: Dict[str, str],
    timeout: float,
) -> Tuple[HTTPResult, int]:
    assert source.endpoint is not None
    endpoint = source.endpoint
    headers = auth_headers(source)
    retries = 0
    policy = source.retry.policy()

    def on_retry(details: Dict[str, Any]) -> None:
        nonlocal retries
        retries += 1
        logger.warning(
            "Retrying %s after a transient failure (%s)",
            source.id,
            details.get("exception"),
            extra=log_extra(
                stage="fetch",
                source_id=source.id,
                attempt=details.get("tries"),
                wait=details.get("wait"),
            ),
        )

    async def attempt() -> HTTPResult:
        result = await http.get(
            endpoint, params=params, headers=headers, timeout=timeout
        )
        if result.status in (401, 403):
            raise AuthError(source.id, result.status)
        if result.status >= 500 or result.status in (408, 429):
            raise TransientStatusError(source.id, result.status)
        if not result.ok:
            raise UnexpectedStatusError(source.id, result.status)
        return result

    try:
        result = await call_with_retries(
            attempt, policy, retry_on=TRANSIENT_ERRORS, on_retry=on_retry
        )
    except TRANSIENT_ERRORS as last_error:
        raise RetriesExhaustedError(source.id, policy.max_attempts, last_error)
    return result, retries


async def poll_http(
    source: SourceSpec,
    since: Optional[str],
    *,
    http: HTTPHandler,
    clock: Clock,
    sequence_start: int = 0,
) -> FetchResult:
    """
    Fetches the documents newer than `since`. Transient failures (transport
    errors, timeouts, 5xx) are retried with exponential backoff; 401 and 403
    raise AuthError at once.
    """
    params = {"since": since} if since else {}
    result, retries = await _get_with_retries(source, http, params, source.timeout)
    return decode_envelope(
        source.id,
        result,
        since=since,
        fetched_at=clock.now(),
        sequence_start=sequence_start,
        retries=retries,
    )


async def drain_stream(
    source: SourceSpec,
    max_items: int,
    since: Optional[str] = None,
    *,
    http: HTTPHandler,
    clock: Clock,
    sequence_start: int = 0,
) -> FetchResult:
    """
    Long-polls a stream endpoint for up to `max_items` readings. Returns an
    empty result when nothing arrives within the source `wait` seconds.
    """
    params = {"max": str(max_items), "wait": f"{source.wait:g}"}
    if since:
        params["since"] = since
    result, retries = await _get_with_retries(
        source, http, params, source.timeout + source.wait
    )
    return decode_envelope(
        source.id,
        result,
        since=since,
        fetched_at=clock.now(),
        sequence_start=sequence_start,
        retries=retries,
    )
