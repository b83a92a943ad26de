from typing import Optional

from isthmus.errors import IsthmusError


class IngestError(IsthmusError):
    """Base class for errors raised while fetching from a source."""

    def __init__(self, source_id: str, message: str) -> None:
        super().__init__(message)
        self.source_id = source_id


class AuthError(IngestError):
    def __init__(self, source_id: str, status: int) -> None:
        super().__init__(
            source_id,
            f"The source {source_id} refused the credentials (status {status}).",
        )
        self.status = status


class TransientStatusError(IngestError):
    def __init__(self, source_id: str, status: int) -> None:
        super().__init__(
            source_id, f"The source {source_id} replied with status {status}."
        )
        self.status = status


class UnexpectedStatusError(IngestError):
    def __init__(self, source_id: str, status: int) -> None:
        super().__init__(
            source_id,
            f"The source {source_id} replied with unexpected status {status}.",
        )
        self.status = status


class RetriesExhaustedError(IngestError):
    def __init__(
        self, source_id: str, attempts: int, last_error: Optional[Exception]
    ) -> None:
        super().__init__(
            source_id,
            f"Fetching from {source_id} failed after {attempts} attempts: "
            f"{last_error}",
        )
        self.attempts = attempts
        self.last_error = last_error


class SourceUnavailableError(IngestError):
    def __init__(self, source_id: str, reason: str) -> None:
        super().__init__(source_id, f"The source {source_id} is unavailable: {reason}")
        self.reason = reason
