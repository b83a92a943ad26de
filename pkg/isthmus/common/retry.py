"""
Exponential backoff shared by source connectors and the alert webhook.
"""

from dataclasses import dataclass
from typing import Any, Awaitable, Callable, Dict, List, Optional, Tuple, Type

import backoff

RetryHandler = Callable[[Dict[str, Any]], None]


@dataclass(frozen=True)
class RetryPolicy:
    base_delay: float = 1.0
    factor: float = 2.0
    max_attempts: int = 5

    def delays(self) -> List[float]:
        """Returns the waits applied between attempts."""
        return [
            self.base_delay * self.factor**attempt
            for attempt in range(self.max_attempts - 1)
        ]


async def call_with_retries(
    func: Callable[[], Awaitable[Any]],
    policy: RetryPolicy,
    *,
    retry_on: Tuple[Type[BaseException], ...],
    on_retry: Optional[RetryHandler] = None,
) -> Any:
    """
    Awaits `func` until it succeeds or `policy.max_attempts` attempts raised one
    of the `retry_on` exceptions, in which case the last exception propagates.
    Other exceptions propagate immediately.
    """
    # backoff.expo yields factor * base ** n
    decorated = backoff.on_exception(
        backoff.expo,
        retry_on,
        max_tries=policy.max_attempts,
        jitter=None,
        on_backoff=on_retry,
        logger=None,
        base=policy.factor,
        factor=policy.base_delay,
    )(func)
    return await decorated()
