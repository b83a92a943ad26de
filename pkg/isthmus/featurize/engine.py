import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from isthmus.common.types import SourceRef
from isthmus.transform.aggregation import PatientRecord

from .encoding import one_hot
from .exceptions import FeatureRejected
from .locf import LocfState
from .spec import FeatureDefinition, FeatureSpec, Imputation, Reduction

INVALID_VALUES = "invalid_values"
CLAMPED_VALUES = "clamped_values"
OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class FeatureVector:
    patient_id: str
    values: Dict[str, float]
    imputed_flags: FrozenSet[str] = frozenset()
    as_of: Optional[datetime] = None
    lineage: Tuple[SourceRef, ...] = field(default_factory=tuple)

    @property
    def observed(self) -> Dict[str, float]:
        return {
            name: value
            for name, value in self.values.items()
            if name not in self.imputed_flags
        }


def _reduce(value: Any, reduction: Reduction) -> Any:
    if not isinstance(value, list):
        return value
    items = [item for item in value if item is not None]
    if not items:
        return None
    if reduction is Reduction.FIRST:
        return items[0]
    if reduction is Reduction.LAST:
        return items[-1]
    numbers = [item for item in items if _is_finite_number(item)]
    if len(numbers) != len(items):
        return None
    if reduction is Reduction.MEAN:
        return float(np.mean(numbers))
    if reduction is Reduction.MIN:
        return min(numbers)
    return max(numbers)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_finite_number(value: Any) -> bool:
    if not _is_number(value):
        return False
    try:
        return math.isfinite(value)
    except OverflowError:
        return False


class _Resolution:
    """Resolves the features of one record, collecting observations to apply."""

    def __init__(
        self, record: PatientRecord, state: LocfState, counters: Optional[Counter]
    ) -> None:
        self.record = record
        self.state = state
        self.counters = counters if counters is not None else Counter()
        self.observations: List[Tuple[str, Any]] = []

    def numeric(self, feature: FeatureDefinition) -> Tuple[float, bool]:
        value = _reduce(self.record.fields.get(feature.source_field), feature.reduce)
        if isinstance(value, bool):
            value = float(value)
        if value is not None and not _is_finite_number(value):
            self.counters[INVALID_VALUES] += 1
            value = None
        if value is not None and feature.range is not None:
            lo, hi = feature.range
            if value < lo or value > hi:
                if feature.clamp:
                    self.counters[CLAMPED_VALUES] += 1
                    value = lo if value < lo else hi
                else:
                    self.counters[OUT_OF_RANGE] += 1
                    value = None
        if value is not None:
            self.observations.append((feature.name, value))
            return float(value), False
        return float(self.impute(feature)), True

    def categorical(self, feature: FeatureDefinition) -> Tuple[str, bool]:
        value = _reduce(self.record.fields.get(feature.source_field), feature.reduce)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif _is_finite_number(value):
            value = str(int(value)) if float(value).is_integer() else str(value)
        if value is not None and not isinstance(value, str):
            self.counters[INVALID_VALUES] += 1
            value = None
        if value is not None:
            self.observations.append((feature.name, value))
            return value, False
        return self.impute(feature), True

    def impute(self, feature: FeatureDefinition) -> Any:
        strategy = feature.imputation
        baseline = feature.baseline
        if strategy is Imputation.NONE:
            raise FeatureRejected(self.record.patient_id, feature.name)
        if strategy is Imputation.CONSTANT:
            return feature.fill_value
        assert baseline is not None
        if strategy is Imputation.MEAN:
            return baseline.mean
        if strategy is Imputation.MEDIAN:
            return baseline.median
        if strategy is Imputation.MODE:
            return baseline.mode
        # locf
        last = self.state.get(self.record.patient_id, feature.name)
        if last is not None:
            return last
        return baseline.mode if feature.encoding is not None else baseline.mean


def featurize(
    spec: FeatureSpec,
    record: PatientRecord,
    state: LocfState,
    counters: Optional[Counter] = None,
) -> FeatureVector:
    """
    Resolves every feature of the spec for one patient record. The LOCF state
    is updated with observed values only, and only when the whole vector could
    be built.
    """
    resolution = _Resolution(record, state, counters)
    values: Dict[str, float] = {}
    imputed = set()

    for feature in spec.features:
        if feature.encoding is None:
            value, was_imputed = resolution.numeric(feature)
            values[feature.name] = value
            if was_imputed:
                imputed.add(feature.name)
            continue

        category, was_imputed = resolution.categorical(feature)
        bits = one_hot(feature.categories, category, resolution.counters)
        for name, bit in zip(feature.output_names, bits):
            values[name] = float(bit)
            if was_imputed:
                imputed.add(name)

    for name, value in resolution.observations:
        state.observe(record.patient_id, name, value)

    return FeatureVector(
        record.patient_id,
        values,
        frozenset(imputed),
        record.as_of,
        tuple(record.sources),
    )
