from dataclasses import dataclass
from typing import Optional

from isthmus.monitor.logs import get_logger, log_extra
from isthmus.store.abc import ScoreStore
from isthmus.utils.aio import HTTPHandler, TransportError
from isthmus.utils.time import Clock

logger = get_logger("orchestrator")


@dataclass(frozen=True)
class DeliveryReport:
    delivered: int = 0
    pending: int = 0
    error: Optional[str] = None


class SinkDelivery:
    """
    Drains the delivery outbox of live pipelines. Each pending score is POSTed
    once per cycle, in the order it was stored; a failure leaves it and the rest
    pending for the next cycle.
    """

    def __init__(
        self,
        store: ScoreStore,
        http: HTTPHandler,
        clock: Clock,
        *,
        timeout: float = 10.0,
    ) -> None:
        self.store = store
        self.http = http
        self.clock = clock
        self.timeout = timeout

    async def deliver(self, pipeline: str) -> DeliveryReport:
        entries = self.store.pending_deliveries(pipeline)
        delivered = 0
        for index, entry in enumerate(entries):
            error = None
            try:
                result = await self.http.post_json(
                    entry.sink, entry.body.encode("utf8"), timeout=self.timeout
                )
            except TransportError as transport_error:
                error = str(transport_error)
            else:
                if not result.ok:
                    error = f"the sink replied with status {result.status}"

            if error is not None:
                self.store.record_delivery_attempt(entry.dedup_key)
                logger.warning(
                    "Sink delivery failed, %s scores stay pending: %s",
                    len(entries) - index,
                    error,
                    extra=log_extra(
                        pipeline,
                        "deliver",
                        dedup_key=entry.dedup_key,
                        attempts=entry.attempts + 1,
                    ),
                )
                return DeliveryReport(delivered, len(entries) - index, error)

            self.store.mark_delivered(entry.dedup_key, self.clock.now())
            delivered += 1

        if delivered:
            logger.info(
                "Delivered %s scores",
                delivered,
                extra=log_extra(pipeline, "deliver", delivered=delivered),
            )
        return DeliveryReport(delivered)
