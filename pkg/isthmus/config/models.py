from enum import Enum
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from isthmus.common.retry import RetryPolicy
from isthmus.common.types import DeploymentMode

IDENTIFIER = r"^[A-Za-z0-9_.\-]+$"
ENV_VARIABLE = r"^[A-Za-z_][A-Za-z0-9_]*$"


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class RetrySpec(_Spec):
    base_delay: float = Field(default=1.0, ge=0)
    factor: float = Field(default=2.0, ge=1)
    max_attempts: int = Field(default=5, ge=1)

    def policy(self) -> RetryPolicy:
        return RetryPolicy(self.base_delay, self.factor, self.max_attempts)


class SourceKind(str, Enum):
    HTTP_POLL = "http_poll"
    FILE_DROP = "file_drop"
    STREAM = "stream"


class SourceSpec(_Spec):
    id: str = Field(pattern=IDENTIFIER)
    kind: SourceKind
    endpoint: Optional[str] = None
    directory: Optional[str] = None
    token_env: Optional[str] = Field(default=None, pattern=ENV_VARIABLE)
    cadence: Optional[float] = Field(default=None, ge=1)
    retry: RetrySpec = RetrySpec()
    timeout: float = Field(default=30.0, gt=0)
    wait: float = Field(default=1.0, ge=0)
    max_drains: int = Field(default=10, ge=1)


class PipelineSpec(_Spec):
    id: str = Field(pattern=IDENTIFIER)
    source_id: str
    template_path: str
    feature_spec_path: str
    model_signature_path: str
    sink: Optional[str] = None
    mode: DeploymentMode = DeploymentMode.SILENT


class StoreSpec(_Spec):
    data_dir: Optional[str] = None
    database_url: Optional[str] = None


class AlertSpec(_Spec):
    webhook: Optional[str] = None
    dedup_window: float = Field(default=60.0, ge=0)
    drift_threshold: float = Field(default=0.2, gt=0)
    drift_window: int = Field(default=500, ge=1)
    coercion_surge_ratio: float = Field(default=0.2, gt=0, le=1)
    timeout: float = Field(default=10.0, gt=0)
    retry: RetrySpec = RetrySpec()


class RunSpec(_Spec):
    poll_interval: float = Field(default=3600.0, ge=1)
    batch_size: int = Field(default=100, ge=1)
    max_parallel_pipelines: int = Field(default=4, ge=1)
    queue_size: int = Field(default=4, ge=1)
    promotion_min_silent_scores: int = Field(default=100, ge=0)
    top_k: int = Field(default=3, ge=0)
    reload_interval: float = Field(default=30.0, ge=1)
    monitor_interval: float = Field(default=1.0, gt=0)


class ModelRef(NamedTuple):
    model_id: str
    version: int
    digest: str


class PlatformConfig(_Spec):
    sources: List[SourceSpec] = Field(default_factory=list)
    pipelines: List[PipelineSpec] = Field(default_factory=list)
    stores: StoreSpec = StoreSpec()
    alerts: AlertSpec = AlertSpec()
    run: RunSpec = RunSpec()

    _model_refs: Dict[str, ModelRef] = PrivateAttr(default_factory=dict)
    _base_dir: Optional[Path] = PrivateAttr(default=None)

    @property
    def model_refs(self) -> Dict[str, ModelRef]:
        """(model id, version) declared by each pipeline, by pipeline id."""
        return dict(self._model_refs)

    @property
    def base_dir(self) -> Optional[Path]:
        return self._base_dir

    def get_source(self, source_id: str) -> Optional[SourceSpec]:
        for source in self.sources:
            if source.id == source_id:
                return source
        return None

    def get_pipeline(self, pipeline_id: str) -> Optional[PipelineSpec]:
        for pipeline in self.pipelines:
            if pipeline.id == pipeline_id:
                return pipeline
        return None

    def pipelines_of(self, source_id: str) -> List[PipelineSpec]:
        return [
            pipeline for pipeline in self.pipelines if pipeline.source_id == source_id
        ]

    def interval_of(self, pipeline_id: str) -> float:
        """Seconds between two cycles of a pipeline: its source cadence."""
        pipeline = self.get_pipeline(pipeline_id)
        source = self.get_source(pipeline.source_id) if pipeline else None
        if source is not None and source.cadence is not None:
            return source.cadence
        return self.run.poll_interval

    def data_dir(self, default: Path) -> Path:
        if self.stores.data_dir:
            return Path(self.stores.data_dir)
        return Path(default)
