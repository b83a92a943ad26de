"""
Model signatures, scoring, explanations, retraining and the version registry.
"""

from .exceptions import (
    DivergenceError,
    MissingFeatureError,
    ScoringError,
    SignatureError,
    SingleClassError,
    TrainingError,
    UnknownModelError,
    VersionConflictError,
)
from .registry import ModelRegistry, load_signature
from .scorer import (
    Contribution,
    ScoreResponse,
    explain,
    linear_predictor,
    risk_level,
    score,
    sigmoid,
)
from .signature import ModelSignature, RiskBands, parse_signature, read_signature
from .training import (
    EvaluationReport,
    Hyperparameters,
    build_baselines,
    design_matrix,
    evaluate,
    fit_logistic,
    loss_and_gradient,
    read_outcomes,
    retrain,
)

__all__ = [
    "Contribution",
    "DivergenceError",
    "EvaluationReport",
    "Hyperparameters",
    "MissingFeatureError",
    "ModelRegistry",
    "ModelSignature",
    "RiskBands",
    "ScoreResponse",
    "ScoringError",
    "SignatureError",
    "SingleClassError",
    "TrainingError",
    "UnknownModelError",
    "VersionConflictError",
    "build_baselines",
    "design_matrix",
    "evaluate",
    "explain",
    "fit_logistic",
    "linear_predictor",
    "load_signature",
    "loss_and_gradient",
    "parse_signature",
    "read_outcomes",
    "read_signature",
    "retrain",
    "risk_level",
    "score",
    "sigmoid",
]
