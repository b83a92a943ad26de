from isthmus.errors import IsthmusError


class StoreError(IsthmusError):
    """Base class for persistence errors."""


class CheckpointRegressionError(StoreError):
    def __init__(self, pipeline: str, committed: int, attempted: int) -> None:
        super().__init__(
            f"The checkpoint of {pipeline} cannot move backward: committed sequence "
            f"{committed}, attempted {attempted}."
        )
        self.pipeline = pipeline
        self.committed = committed
        self.attempted = attempted


class MissingArchiveRangeError(StoreError):
    def __init__(self, pipeline: str, batch_id: str) -> None:
        super().__init__(
            f"The batch {batch_id} is not a committed batch of {pipeline}; "
            "it cannot be replayed."
        )
        self.pipeline = pipeline
        self.batch_id = batch_id


class ArchiveGapError(StoreError):
    def __init__(self, source_id: str, first: int, last: int, found: int) -> None:
        super().__init__(
            f"The archive of {source_id} holds {found} of the payloads "
            f"{first}-{last} that were committed."
        )
        self.source_id = source_id


class ArchiveConflictError(StoreError):
    def __init__(self, source_id: str, sequence: int) -> None:
        super().__init__(
            f"The sequence {sequence} of {source_id} was fetched again with other "
            "content than the archived one."
        )
        self.source_id = source_id
        self.sequence = sequence
