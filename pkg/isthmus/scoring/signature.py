from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from isthmus.common.canonical import canonical_json, content_hash
from isthmus.common.issues import Issue, issues_from_validation_error
from isthmus.common.types import DeploymentMode
from isthmus.settings.json import json_settings

from .exceptions import SignatureError


class _Document(BaseModel):
    model_config = ConfigDict(
        extra="forbid", frozen=True, allow_inf_nan=False, protected_namespaces=()
    )


class RiskBands(_Document):
    thresholds: List[float]
    labels: List[str] = Field(min_length=1)

    @model_validator(mode="after")
    def _check(self) -> "RiskBands":
        if any(not 0 < value < 1 for value in self.thresholds):
            raise ValueError("thresholds must lie within (0, 1)")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if len(self.labels) != len(self.thresholds) + 1:
            raise ValueError("labels must count one more than thresholds")
        return self


class ModelSignature(_Document):
    model_id: str = Field(min_length=1, pattern=r"^[A-Za-z0-9_.\-]+$")
    version: int = Field(ge=1)
    family: Literal["logistic"] = "logistic"
    features: List[str] = Field(min_length=1)
    coefficients: List[float]
    intercept: float
    baseline_means: List[float]
    risk_bands: RiskBands
    mode: DeploymentMode = DeploymentMode.SILENT
    created_at: Optional[str] = None
    training_note: str = ""

    @property
    def weights(self) -> Dict[str, float]:
        return dict(zip(self.features, self.coefficients))

    @property
    def means(self) -> Dict[str, float]:
        return dict(zip(self.features, self.baseline_means))

    def to_document(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def canonical(self) -> str:
        return canonical_json(self.to_document())

    @property
    def digest(self) -> str:
        return content_hash(self.to_document())


def _check_shape(signature: ModelSignature) -> List[Issue]:
    issues = []
    count = len(signature.features)
    if len(set(signature.features)) != count:
        issues.append(Issue("$.features", "feature names must be unique"))
    if len(signature.coefficients) != count:
        issues.append(
            Issue(
                "$.coefficients",
                f"expected {count} coefficients (one per feature), "
                f"got {len(signature.coefficients)}",
            )
        )
    if len(signature.baseline_means) != count:
        issues.append(
            Issue(
                "$.baseline_means",
                f"expected {count} baseline means (one per feature), "
                f"got {len(signature.baseline_means)}",
            )
        )
    return issues


def parse_signature(document: Any) -> ModelSignature:
    try:
        signature = ModelSignature.model_validate(document)
    except ValidationError as validation_error:
        raise SignatureError(issues_from_validation_error(validation_error))
    issues = _check_shape(signature)
    if issues:
        raise SignatureError(issues)
    return signature


def read_signature(path: Union[str, Path]) -> ModelSignature:
    """Reads and validates a signature file without registering it."""
    with open(path, "r", encoding="utf8") as signature_file:
        return parse_signature(json_settings.loads(signature_file.read()))
