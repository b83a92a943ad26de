"""
The platform configuration: one JSON document declaring sources, pipelines,
stores, alert routes and run settings.
"""

from .delta import ConfigDelta, diff_config
from .errors import (
    ConfigError,
    ConfigParseError,
    ConfigValidationError,
    DanglingReferenceError,
)
from .loader import dump_config, load_config, validate_document
from .models import (
    AlertSpec,
    ModelRef,
    PipelineSpec,
    PlatformConfig,
    RetrySpec,
    RunSpec,
    SourceKind,
    SourceSpec,
    StoreSpec,
)

__all__ = [
    "AlertSpec",
    "ConfigDelta",
    "ConfigError",
    "ConfigParseError",
    "ConfigValidationError",
    "DanglingReferenceError",
    "ModelRef",
    "PipelineSpec",
    "PlatformConfig",
    "RetrySpec",
    "RunSpec",
    "SourceKind",
    "SourceSpec",
    "StoreSpec",
    "diff_config",
    "dump_config",
    "load_config",
    "validate_document",
]
