import math
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, NamedTuple, Sequence, Tuple

from isthmus.common.types import SourceRef
from isthmus.featurize.engine import FeatureVector
from isthmus.utils.time import format_timestamp

from .exceptions import MissingFeatureError
from .signature import ModelSignature, RiskBands


class Contribution(NamedTuple):
    feature: str
    contribution: float


@dataclass(frozen=True)
class ScoreResponse:
    patient_id: str
    model_id: str
    version: int
    score: float
    risk_level: str
    top_contributors: Tuple[Contribution, ...]
    features: Dict[str, float]
    imputed_flags: Tuple[str, ...]
    scored_at: datetime
    lineage: Tuple[SourceRef, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "model_id": self.model_id,
            "version": self.version,
            "score": self.score,
            "risk_level": self.risk_level,
            "top_contributors": [
                {"feature": item.feature, "contribution": item.contribution}
                for item in self.top_contributors
            ],
            "features": dict(self.features),
            "imputed_flags": list(self.imputed_flags),
            "scored_at": format_timestamp(self.scored_at),
            "lineage": [ref.to_list() for ref in self.lineage],
        }


def sigmoid(z: float) -> float:
    """Logistic function in the branch form that never overflows."""
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _inputs(signature: ModelSignature, vector: FeatureVector) -> List[float]:
    missing = [name for name in signature.features if name not in vector.values]
    if missing:
        raise MissingFeatureError(signature.model_id, vector.patient_id, missing)
    return [vector.values[name] for name in signature.features]


def linear_predictor(signature: ModelSignature, vector: FeatureVector) -> float:
    z = signature.intercept
    for weight, value in zip(signature.coefficients, _inputs(signature, vector)):
        z += weight * value
    return z


def risk_level(bands: RiskBands, score: float) -> str:
    # a score equal to a threshold belongs to the band above it
    return bands.labels[bisect_right(bands.thresholds, score)]


def explain(
    signature: ModelSignature, vector: FeatureVector, k: int
) -> List[Contribution]:
    """
    Returns the k features contributing most to the score, as w * (x - mean),
    by absolute value and then by name.
    """
    if k <= 0:
        return []
    values = _inputs(signature, vector)
    contributions = [
        Contribution(name, weight * (value - mean))
        for name, weight, value, mean in zip(
            signature.features,
            signature.coefficients,
            values,
            signature.baseline_means,
        )
    ]
    contributions.sort(key=lambda item: (-abs(item.contribution), item.feature))
    return contributions[:k]


def score(
    signature: ModelSignature,
    vector: FeatureVector,
    *,
    scored_at: datetime,
    top_k: int = 3,
) -> ScoreResponse:
    z = linear_predictor(signature, vector)
    probability = sigmoid(z)
    return ScoreResponse(
        patient_id=vector.patient_id,
        model_id=signature.model_id,
        version=signature.version,
        score=probability,
        risk_level=risk_level(signature.risk_bands, probability),
        top_contributors=tuple(explain(signature, vector, top_k)),
        features=dict(vector.values),
        imputed_flags=tuple(sorted(vector.imputed_flags)),
        scored_at=scored_at,
        lineage=tuple(vector.lineage),
    )


def score_all(
    signature: ModelSignature,
    vectors: Sequence[FeatureVector],
    *,
    scored_at: datetime,
    top_k: int = 3,
) -> List[ScoreResponse]:
    return [
        score(signature, vector, scored_at=scored_at, top_k=top_k)
        for vector in vectors
    ]
