from typing import List

from isthmus.common.issues import Issue, format_issues
from isthmus.errors import IsthmusError


class ScoringError(IsthmusError):
    """Base class for model errors."""


class SignatureError(ScoringError):
    def __init__(self, issues: List[Issue]) -> None:
        super().__init__(f"Invalid model signature: {format_issues(issues)}")
        self.issues = issues


class VersionConflictError(ScoringError):
    def __init__(self, model_id: str, version: int) -> None:
        super().__init__(
            f"Version {version} of model {model_id} is already registered with "
            "different content; published versions are immutable."
        )
        self.model_id = model_id
        self.version = version


class UnknownModelError(ScoringError):
    def __init__(self, model_id: str, version=None) -> None:
        if version is None:
            message = f"Unknown model {model_id}."
        else:
            message = f"Unknown version {version} of model {model_id}."
        super().__init__(message)
        self.model_id = model_id
        self.version = version


class MissingFeatureError(ScoringError):
    def __init__(self, model_id: str, patient_id: str, features: List[str]) -> None:
        super().__init__(
            f"Model {model_id} cannot score patient {patient_id}: missing "
            f"features {', '.join(features)}."
        )
        self.model_id = model_id
        self.patient_id = patient_id
        self.features = features


class TrainingError(ScoringError):
    pass


class SingleClassError(TrainingError):
    def __init__(self, label: int) -> None:
        super().__init__(
            f"The training dataset contains only outcome {label}; both classes are "
            "required."
        )
        self.label = label


class DivergenceError(TrainingError):
    def __init__(self, epoch: int) -> None:
        super().__init__(f"Training diverged at epoch {epoch}: the loss is not finite.")
        self.epoch = epoch
