"""
Alerting: the first occurrence of an alert is delivered to the configured
webhook right away; identical occurrences within its deduplication window are
counted and delivered once, when the window closes. Delivery failures are logged
and retried later; they never fail a pipeline.
"""

from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

from isthmus.common.canonical import canonical_bytes
from isthmus.common.retry import call_with_retries
from isthmus.config.models import AlertSpec
from isthmus.utils.aio import FailedRequestError, HTTPHandler, TransportError
from isthmus.utils.time import Clock, format_timestamp

from .logs import get_logger, log_extra

logger = get_logger("monitor")


class AlertKind(str, Enum):
    PIPELINE_FAILURE = "pipeline_failure"
    MISSING_DATA = "missing_data"
    DRIFT_DETECTED = "drift_detected"
    INTEGRITY_VIOLATION = "integrity_violation"
    COERCION_SURGE = "coercion_surge"


AlertKey = Tuple[AlertKind, str, str]


@dataclass
class Alert:
    kind: AlertKind
    pipeline: str
    detail: str
    first_seen: datetime
    count: int = 1

    @property
    def key(self) -> AlertKey:
        return (self.kind, self.pipeline, self.detail)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "pipeline": self.pipeline,
            "detail": self.detail,
            "count": self.count,
            "first_seen": format_timestamp(self.first_seen),
        }


@dataclass(frozen=True)
class DeliveryResult:
    alert: Dict[str, Any]
    delivered: bool
    attempts: int = 0
    error: Optional[str] = None


@dataclass
class _Entry:
    alert: Alert
    # occurrences covered by the last delivery
    delivered: int = 0

    @property
    def unsent(self) -> int:
        return self.alert.count - self.delivered


class AlertService:
    def __init__(
        self,
        spec: AlertSpec,
        http: HTTPHandler,
        clock: Clock,
        listener: Optional[Callable[[Alert], None]] = None,
    ) -> None:
        self.spec = spec
        self.http = http
        self.clock = clock
        self._entries: Dict[AlertKey, _Entry] = {}
        self._retired: List[_Entry] = []
        self._listener = listener

    def _window_elapsed(self, alert: Alert, now: datetime) -> bool:
        return (now - alert.first_seen).total_seconds() >= self.spec.dedup_window

    def raise_alert(self, kind: AlertKind, pipeline: str, detail: str) -> Alert:
        """
        Records an occurrence. Within the window of an identical alert, only its
        count increments.
        """
        now = self.clock.now()
        key = (AlertKind(kind), pipeline, detail)
        entry = self._entries.get(key)
        if entry is not None and (
            entry.unsent or not self._window_elapsed(entry.alert, now)
        ):
            entry.alert.count += 1
            alert = entry.alert
        else:
            alert = Alert(AlertKind(kind), pipeline, detail, now)
            self._entries[key] = _Entry(alert)

        logger.warning(
            "Alert %s for %s (count %s): %s",
            alert.kind.value,
            pipeline,
            alert.count,
            detail,
            extra=log_extra(
                pipeline, "alert", kind=alert.kind.value, count=alert.count
            ),
        )
        if self._listener is not None:
            self._listener(alert)
        return alert

    def reset(self, kind: AlertKind, pipeline: str) -> None:
        """
        Closes the windows of the alerts of a kind for a pipeline. Occurrences
        not delivered yet stay queued until the next flush.
        """
        for key in list(self._entries):
            if key[0] == kind and key[1] == pipeline:
                entry = self._entries.pop(key)
                if entry.unsent:
                    self._retired.append(entry)

    def pending(self) -> List[Alert]:
        return [entry.alert for entry in self._queued() if entry.unsent]

    def alerts(self) -> List[Alert]:
        return [entry.alert for entry in self._queued()]

    def _queued(self) -> List[_Entry]:
        return self._retired + list(self._entries.values())

    async def _deliver(self, entry: _Entry) -> DeliveryResult:
        result = await self.send_alert(entry.alert)
        if result.delivered or not self.spec.webhook:
            entry.delivered = entry.alert.count
        return result

    async def flush(self, *, force: bool = False) -> List[DeliveryResult]:
        """
        Delivers the first occurrence of every alert right away, and the count
        of the occurrences that followed it when its window closes (at once
        when `force`). Undelivered alerts stay queued.
        """
        now = self.clock.now()
        results = []
        for entry in list(self._retired):
            results.append(await self._deliver(entry))
            if not entry.unsent:
                self._retired.remove(entry)

        for key, entry in list(self._entries.items()):
            closed = self._window_elapsed(entry.alert, now)
            if entry.unsent and (force or closed or not entry.delivered):
                results.append(await self._deliver(entry))
            if closed and not entry.unsent:
                del self._entries[key]
        return results

    async def send_alert(self, alert: Alert) -> DeliveryResult:
        snapshot = alert.to_dict()
        if not self.spec.webhook:
            return DeliveryResult(snapshot, False, 0, "no webhook configured")

        url = self.spec.webhook
        body = canonical_bytes(snapshot)
        attempts = 0

        async def attempt():
            nonlocal attempts
            attempts += 1
            result = await self.http.post_json(url, body, timeout=self.spec.timeout)
            if not result.ok:
                raise FailedRequestError(url, result.status)
            return result

        try:
            await call_with_retries(
                attempt,
                self.spec.retry.policy(),
                retry_on=(TransportError, FailedRequestError),
            )
        except (TransportError, FailedRequestError) as delivery_error:
            logger.warning(
                "Alert delivery failed, keeping it queued: %s",
                delivery_error,
                extra=log_extra(
                    alert.pipeline,
                    "alert",
                    kind=alert.kind.value,
                    attempts=attempts,
                ),
            )
            return DeliveryResult(snapshot, False, attempts, str(delivery_error))

        logger.info(
            "Delivered alert %s for %s",
            alert.kind.value,
            alert.pipeline,
            extra=log_extra(
                alert.pipeline, "alert", kind=alert.kind.value, count=alert.count
            ),
        )
        return DeliveryResult(snapshot, True, attempts)
