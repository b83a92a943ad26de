from isthmus.errors import IsthmusError


class OrchestratorError(IsthmusError):
    """Base class for errors raised by engine operations."""


class UnknownPipelineError(OrchestratorError):
    def __init__(self, pipeline_id: str) -> None:
        super().__init__(f"No pipeline with id {pipeline_id!r} is configured.")
        self.pipeline_id = pipeline_id


class InsufficientSilentHistoryError(OrchestratorError):
    def __init__(self, model_id: str, version: int, found: int, required: int) -> None:
        super().__init__(
            f"Model {model_id} v{version} has {found} committed silent scores; "
            f"promotion requires {required} ({required - found} more)."
        )
        self.model_id = model_id
        self.version = version
        self.found = found
        self.required = required
