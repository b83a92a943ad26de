"""
Root module of the engine. This module re-exports the most commonly used types
to reduce the verbosity of the imports statements.
"""

__version__ = "1.0.0"

from .config import ConfigDelta as ConfigDelta
from .config import PlatformConfig as PlatformConfig
from .config import diff_config as diff_config
from .config import load_config as load_config
from .errors import IsthmusError as IsthmusError
from .orchestrator.engine import Engine as Engine
from .orchestrator.runs import PipelineRun as PipelineRun
from .orchestrator.runs import RunOutcome as RunOutcome
