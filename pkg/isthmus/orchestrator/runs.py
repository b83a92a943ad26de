from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

from isthmus.utils.time import format_timestamp


class RunOutcome(str, Enum):
    COMMITTED = "committed"
    FAILED = "failed"
    EMPTY = "empty"


class Stage(str, Enum):
    FETCH = "fetch"
    ARCHIVE = "archive"
    TRANSFORM = "transform"
    FEATURIZE = "featurize"
    SCORE = "score"
    PERSIST = "persist"
    CHECKPOINT = "checkpoint"
    DELIVER = "deliver"


# called after every completed stage; fault injection raises from here
StageHook = Callable[[str, Stage], None]

COUNT_NAMES = (
    "payloads",
    "quarantined",
    "records",
    "vectors",
    "scores",
    "duplicates",
    "delivered",
    "retries",
)


@dataclass
class PipelineRun:
    pipeline: str
    started_at: datetime
    batch_ids: List[str] = field(default_factory=list)
    outcome: RunOutcome = RunOutcome.EMPTY
    timings: Dict[str, float] = field(default_factory=dict)
    counts: Dict[str, int] = field(
        default_factory=lambda: dict.fromkeys(COUNT_NAMES, 0)
    )
    finished_at: Optional[datetime] = None
    wall_time: float = 0.0
    error: Optional[str] = None
    replay: bool = False

    @property
    def batch_id(self) -> Optional[str]:
        """The last batch the run went through."""
        return self.batch_ids[-1] if self.batch_ids else None

    @property
    def retries(self) -> int:
        return self.counts.get("retries", 0)

    def add_timing(self, stage: Stage, milliseconds: float) -> None:
        self.timings[stage.value] = self.timings.get(stage.value, 0.0) + milliseconds

    def count(self, name: str, value: int = 1) -> None:
        self.counts[name] = self.counts.get(name, 0) + value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pipeline": self.pipeline,
            "batch_ids": list(self.batch_ids),
            "outcome": self.outcome.value,
            "timings": {name: round(value, 3) for name, value in self.timings.items()},
            "counts": dict(self.counts),
            "started_at": format_timestamp(self.started_at),
            "finished_at": (
                format_timestamp(self.finished_at) if self.finished_at else None
            ),
            "wall_time": round(self.wall_time, 3),
            "error": self.error,
            "replay": self.replay,
        }
