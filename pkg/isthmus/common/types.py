from enum import Enum
from typing import NamedTuple


class DeploymentMode(str, Enum):
    LIVE = "live"
    SILENT = "silent"


class SourceRef(NamedTuple):
    """Identifies one fetched document: the lineage unit of every derived value."""

    source_id: str
    sequence: int

    def to_list(self):
        return [self.source_id, self.sequence]
