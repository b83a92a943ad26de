from abc import ABC, abstractmethod
from datetime import datetime, timedelta, timezone
from typing import Optional, Union

from dateutil.parser import isoparse

UTC = timezone.utc


def utcnow() -> datetime:
    return datetime.now(UTC)


def ensure_utc(value: datetime) -> datetime:
    if value.tzinfo is None:
        return value.replace(tzinfo=UTC)
    return value.astimezone(UTC)


def format_timestamp(value: datetime) -> str:
    """ISO 8601, UTC, millisecond precision: 2026-01-01T08:00:00.000Z"""
    value = ensure_utc(value)
    return value.strftime("%Y-%m-%dT%H:%M:%S.") + f"{value.microsecond // 1000:03d}Z"


def parse_timestamp(value: str) -> datetime:
    """
    Parses an ISO 8601 timestamp. Naive values are assumed UTC; callers that need
    to know it happened use `is_naive_timestamp`.
    """
    return ensure_utc(isoparse(value))


def is_naive_timestamp(value: str) -> bool:
    return isoparse(value).tzinfo is None


class Clock(ABC):
    @abstractmethod
    def now(self) -> datetime:
        """Returns the current time, timezone aware, in UTC."""

    def timestamp(self) -> str:
        return format_timestamp(self.now())


class SystemClock(Clock):
    def now(self) -> datetime:
        return utcnow()


class FrozenClock(Clock):
    """
    Clock that only moves when told to. Used to make runs reproducible: archive
    lines, score rows and quarantine names embed timestamps.
    """

    def __init__(self, start: Union[None, str, datetime] = None) -> None:
        if start is None:
            start = datetime(2026, 1, 1, tzinfo=UTC)
        if isinstance(start, str):
            start = parse_timestamp(start)
        self._now = ensure_utc(start)

    def now(self) -> datetime:
        return self._now

    def set(self, value: Union[str, datetime]) -> None:
        if isinstance(value, str):
            value = parse_timestamp(value)
        self._now = ensure_utc(value)

    def advance(self, seconds: float, *, minutes: Optional[float] = None) -> datetime:
        delta = timedelta(seconds=seconds)
        if minutes:
            delta += timedelta(minutes=minutes)
        self._now = self._now + delta
        return self._now
