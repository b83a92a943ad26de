"""
Retraining of logistic model signatures from persisted features and labelled
outcomes, by full-batch proximal gradient descent on the mean log-loss with an
L2 penalty.
"""

import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from isthmus.common.types import DeploymentMode
from isthmus.featurize.engine import FeatureVector
from isthmus.monitor.drift import bin_proportions
from isthmus.settings.json import json_settings
from isthmus.utils.time import format_timestamp

from .exceptions import DivergenceError, SingleClassError, TrainingError
from .scorer import linear_predictor, sigmoid
from .signature import ModelSignature

Dataset = Sequence[Tuple[FeatureVector, int]]

BASELINE_BINS = 10


@dataclass(frozen=True)
class Hyperparameters:
    learning_rate: float = 0.5
    epochs: int = 1000
    l2: float = 0.0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise TrainingError("The learning rate must be positive.")
        if self.epochs < 1:
            raise TrainingError("At least one epoch is required.")
        if self.l2 < 0:
            raise TrainingError("The L2 penalty cannot be negative.")


@dataclass(frozen=True)
class FitResult:
    weights: np.ndarray
    intercept: float
    loss: float
    epochs: int


def design_matrix(
    dataset: Dataset, features: Sequence[str]
) -> Tuple[np.ndarray, np.ndarray]:
    rows = []
    labels = []
    for vector, outcome in dataset:
        if outcome not in (0, 1):
            raise TrainingError(f"Outcomes must be 0 or 1, got {outcome!r}.")
        try:
            rows.append([float(vector.values[name]) for name in features])
        except KeyError as missing:
            raise TrainingError(
                f"Patient {vector.patient_id} has no value for feature {missing}."
            )
        labels.append(float(outcome))
    return np.asarray(rows, dtype=float), np.asarray(labels, dtype=float)


def _probabilities(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def loss_and_gradient(
    weights: np.ndarray,
    intercept: float,
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
) -> Tuple[float, np.ndarray, float]:
    """
    Returns the objective mean(log(1 + e^z) - y z) + l2 |w|² / 2 and its
    gradient with respect to the weights and the intercept.
    """
    z = X @ weights + intercept
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * weights @ weights)
    residuals = _probabilities(z) - y
    grad_weights = X.T @ residuals / len(y) + l2 * weights
    grad_intercept = float(np.mean(residuals))
    return loss, grad_weights, grad_intercept


def fit_logistic(X: np.ndarray, y: np.ndarray, hyper: Hyperparameters) -> FitResult:
    n_samples, n_features = X.shape
    weights = np.zeros(n_features)
    intercept = 0.0
    lr = hyper.learning_rate

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for epoch in range(1, hyper.epochs + 1):
            residuals = _probabilities(X @ weights + intercept) - y
            grad_weights = X.T @ residuals / n_samples
            # the L2 term is applied as a proximal step, stable for any penalty
            weights = (weights - lr * grad_weights) / (1.0 + lr * hyper.l2)
            intercept = intercept - lr * float(np.mean(residuals))
            if not (np.all(np.isfinite(weights)) and math.isfinite(intercept)):
                raise DivergenceError(epoch)

        loss, _, _ = loss_and_gradient(weights, intercept, X, y, hyper.l2)

    if not math.isfinite(loss):
        raise DivergenceError(hyper.epochs)
    return FitResult(weights, intercept, loss, hyper.epochs)


def _mode(column: np.ndarray) -> float:
    values, counts = np.unique(column, return_counts=True)
    return float(values[int(np.argmax(counts))])


def build_baselines(
    X: np.ndarray, features: Sequence[str], bins: int = BASELINE_BINS
) -> Dict[str, Dict[str, Any]]:
    """
    Baseline statistics of each feature column: mean, std, median, mode and
    quantile bins with the share of training values in each.
    """
    baselines = {}
    for index, name in enumerate(features):
        column = X[:, index]
        edges = np.unique(np.quantile(column, np.linspace(0.0, 1.0, bins + 1)))
        if len(edges) < 2:
            edges = np.asarray([column[0] - 0.5, column[0] + 0.5])
        baselines[name] = {
            "mean": float(np.mean(column)),
            "std": float(np.std(column)),
            "median": float(np.median(column)),
            "mode": _mode(column),
            "bin_edges": [float(edge) for edge in edges],
            "proportions": bin_proportions(column, edges),
        }
    return baselines


def retrain(
    model_id: str,
    dataset: Dataset,
    hyper: Hyperparameters,
    *,
    base: ModelSignature,
    version: int,
    created_at: datetime,
) -> ModelSignature:
    """
    Fits a new version of a model on labelled feature vectors. The new version
    keeps the features and risk bands of `base` and always starts silent.
    """
    if not dataset:
        raise TrainingError("The training dataset is empty.")
    features = list(base.features)
    X, y = design_matrix(dataset, features)
    labels = set(int(label) for label in y)
    if len(labels) < 2:
        raise SingleClassError(labels.pop())

    fit = fit_logistic(X, y, hyper)
    return ModelSignature(
        model_id=model_id,
        version=version,
        features=features,
        coefficients=[float(value) for value in fit.weights],
        intercept=float(fit.intercept),
        baseline_means=[float(value) for value in X.mean(axis=0)],
        risk_bands=base.risk_bands,
        mode=DeploymentMode.SILENT,
        created_at=format_timestamp(created_at),
        training_note=(
            f"retrained from v{base.version} on {len(y)} samples "
            f"(lr={hyper.learning_rate}, epochs={hyper.epochs}, l2={hyper.l2}, "
            f"loss={fit.loss:.6f})"
        ),
    )


@dataclass(frozen=True)
class EvaluationReport:
    model_id: str
    version: int
    samples: int
    positives: int
    accuracy: float
    log_loss: float
    brier: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model_id": self.model_id,
            "version": self.version,
            "samples": self.samples,
            "positives": self.positives,
            "accuracy": self.accuracy,
            "log_loss": self.log_loss,
            "brier": self.brier,
        }


def evaluate(
    signature: ModelSignature, dataset: Dataset, threshold: float = 0.5
) -> EvaluationReport:
    """Accuracy, log-loss and Brier score of a version on labelled outcomes."""
    if not dataset:
        raise TrainingError("The evaluation dataset is empty.")
    correct = 0
    log_losses: List[float] = []
    squared: List[float] = []
    for vector, outcome in dataset:
        z = linear_predictor(signature, vector)
        probability = sigmoid(z)
        if (probability >= threshold) == bool(outcome):
            correct += 1
        # log(1 + e^z) - y z, without overflow
        log_losses.append(float(np.logaddexp(0.0, z)) - outcome * z)
        squared.append((probability - outcome) ** 2)
    return EvaluationReport(
        signature.model_id,
        signature.version,
        len(dataset),
        sum(1 for _, outcome in dataset if outcome),
        correct / len(dataset),
        math.fsum(log_losses) / len(dataset),
        math.fsum(squared) / len(dataset),
    )


def _label(patient_id: Any, value: Any) -> int:
    if isinstance(value, bool) or value not in (0, 1):
        raise TrainingError(f"The outcome of patient {patient_id} must be 0 or 1.")
    return int(value)


def read_outcomes(path: Union[str, Path]) -> Dict[str, int]:
    """
    Reads outcome labels by patient id, either from a JSON object
    {"P001": 1, ...} or from a list of {"patient_id": ..., "outcome": ...}.
    """
    with open(path, "r", encoding="utf8") as outcomes_file:
        document = json_settings.loads(outcomes_file.read())
    if isinstance(document, dict):
        return {str(key): _label(key, value) for key, value in document.items()}
    if isinstance(document, list):
        outcomes = {}
        for item in document:
            if not isinstance(item, dict) or "patient_id" not in item:
                raise TrainingError("Every outcome must name a patient_id.")
            patient_id = item["patient_id"]
            outcomes[str(patient_id)] = _label(patient_id, item.get("outcome"))
        return outcomes
    raise TrainingError("The outcomes file must hold a JSON object or list.")
