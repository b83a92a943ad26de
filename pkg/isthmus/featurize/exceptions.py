from typing import List

from isthmus.common.issues import Issue, format_issues
from isthmus.errors import IsthmusError


class FeatureError(IsthmusError):
    """Base class for feature computation errors."""


class FeatureSpecError(FeatureError):
    def __init__(self, issues: List[Issue]) -> None:
        super().__init__(f"Invalid feature spec: {format_issues(issues)}")
        self.issues = issues


class FeatureRejected(FeatureError):
    def __init__(self, patient_id: str, feature: str) -> None:
        super().__init__(
            f"Feature {feature!r} of patient {patient_id} is missing and declares "
            "no imputation."
        )
        self.patient_id = patient_id
        self.feature = feature
