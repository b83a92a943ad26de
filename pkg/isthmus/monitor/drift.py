"""
Population stability index between the training baseline of a feature and the
values observed in the most recent committed scores.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np

from isthmus.errors import IsthmusError

EPSILON = 1e-4
DEFAULT_THRESHOLD = 0.2


class DriftError(IsthmusError):
    pass


class BinsMismatchError(DriftError):
    def __init__(self, baseline: int, observed: int) -> None:
        super().__init__(
            f"Cannot compare {baseline} baseline bins with {observed} observed bins."
        )


def _smooth(proportions: Sequence[float]) -> np.ndarray:
    values = np.asarray(proportions, dtype=float)
    values = np.where(values <= 0, EPSILON, values)
    return values / values.sum()


def psi(baseline: Sequence[float], observed: Sequence[float]) -> float:
    """
    Σ (q - p) ln(q / p), after replacing empty bins by 1e-4 and renormalizing.
    """
    if len(baseline) != len(observed):
        raise BinsMismatchError(len(baseline), len(observed))
    if len(baseline) == 0:
        return 0.0
    p = _smooth(baseline)
    q = _smooth(observed)
    value = float(np.sum((q - p) * np.log(q / p)))
    # each term is non-negative
    return max(value, 0.0)


def bin_proportions(values: Sequence[float], edges: Sequence[float]) -> List[float]:
    """
    Share of values falling in each bin. Bins are closed on the left; values
    beyond the outer edges count in the first or last bin.
    """
    bins = len(edges) - 1
    if bins < 1:
        raise DriftError("At least two bin edges are required.")
    if len(values) == 0:
        return [0.0] * bins
    bounds = np.asarray(edges, dtype=float)
    positions = np.searchsorted(bounds, values, side="right") - 1
    positions = np.clip(positions, 0, bins - 1)
    counts = np.bincount(positions, minlength=bins)
    return [float(count) / len(values) for count in counts]


@dataclass(frozen=True)
class DriftReport:
    feature: str
    psi: float
    baseline_bins: List[float]
    observed_bins: List[float]
    window_size: int
    flagged: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feature": self.feature,
            "psi": self.psi,
            "baseline_bins": list(self.baseline_bins),
            "observed_bins": list(self.observed_bins),
            "window_size": self.window_size,
            "flagged": self.flagged,
        }


def drift_report(
    feature: str,
    values: Sequence[float],
    edges: Sequence[float],
    proportions: Sequence[float],
    threshold: float = DEFAULT_THRESHOLD,
) -> DriftReport:
    observed = bin_proportions(values, edges)
    value = psi(proportions, observed) if values else 0.0
    if not math.isfinite(value):
        raise DriftError(f"PSI of {feature} is not finite.")
    return DriftReport(
        feature,
        value,
        list(proportions),
        observed,
        len(values),
        value > threshold,
    )
