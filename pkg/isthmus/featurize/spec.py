import math
from enum import Enum
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from isthmus.common.issues import issues_from_validation_error
from isthmus.settings.json import json_settings

from .exceptions import FeatureSpecError


class Imputation(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"
    MODE = "mode"
    CONSTANT = "constant"
    LOCF = "locf"
    NONE = "none"


class Reduction(str, Enum):
    LAST = "last"
    FIRST = "first"
    MEAN = "mean"
    MIN = "min"
    MAX = "max"


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class BaselineStats(_Document):
    mean: Optional[float] = None
    std: Optional[float] = Field(default=None, ge=0)
    median: Optional[float] = None
    mode: Union[float, str, None] = None
    bin_edges: Optional[List[float]] = None
    proportions: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_bins(self) -> "BaselineStats":
        if (self.bin_edges is None) != (self.proportions is None):
            raise ValueError("bin_edges and proportions must be declared together")
        if self.bin_edges is None or self.proportions is None:
            return self
        if len(self.proportions) < 1:
            raise ValueError("proportions cannot be empty")
        if len(self.bin_edges) != len(self.proportions) + 1:
            raise ValueError("bin_edges must have one more element than proportions")
        if any(b <= a for a, b in zip(self.bin_edges, self.bin_edges[1:])):
            raise ValueError("bin_edges must be strictly increasing")
        if any(p < 0 for p in self.proportions):
            raise ValueError("proportions cannot be negative")
        if abs(math.fsum(self.proportions) - 1.0) > 1e-9:
            raise ValueError("proportions must sum to 1")
        return self

    @property
    def has_bins(self) -> bool:
        return self.bin_edges is not None


class OneHot(_Document):
    one_hot: List[str] = Field(min_length=1)

    @field_validator("one_hot")
    @classmethod
    def _unique(cls, categories: List[str]) -> List[str]:
        if len(set(categories)) != len(categories):
            raise ValueError("categories must be unique")
        return categories


class FeatureDefinition(_Document):
    name: str = Field(min_length=1)
    source: Optional[str] = None
    imputation: Imputation = Imputation.NONE
    fill_value: Union[float, str, None] = None
    range: Optional[Tuple[float, float]] = None
    clamp: bool = False
    encoding: Optional[OneHot] = None
    reduce: Reduction = Reduction.LAST
    baseline: Optional[BaselineStats] = None

    @field_validator("encoding", mode="before")
    @classmethod
    def _identity(cls, value: Any) -> Any:
        if value == "identity":
            return None
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> "FeatureDefinition":
        if self.range is not None and not self.range[0] < self.range[1]:
            raise ValueError("range requires lo < hi")
        categorical = self.encoding is not None
        if categorical and self.range is not None:
            raise ValueError("one_hot features cannot declare a range")
        if self.imputation is Imputation.CONSTANT:
            if self.fill_value is None:
                raise ValueError("constant imputation requires fill_value")
            if categorical != isinstance(self.fill_value, str):
                raise ValueError("fill_value type does not match the encoding")
        if self.imputation in (Imputation.MEAN, Imputation.MEDIAN):
            if categorical:
                raise ValueError(
                    f"{self.imputation.value} imputation needs a numeric feature"
                )
            stat = getattr(self.baseline, self.imputation.value, None)
            if stat is None:
                raise ValueError(
                    f"{self.imputation.value} imputation requires "
                    f"baseline.{self.imputation.value}"
                )
        if self.imputation is Imputation.MODE:
            mode = None if self.baseline is None else self.baseline.mode
            if mode is None:
                raise ValueError("mode imputation requires baseline.mode")
            if categorical != isinstance(mode, str):
                raise ValueError("baseline.mode type does not match the encoding")
        if self.imputation is Imputation.LOCF:
            fallback = None
            if self.baseline is not None:
                fallback = self.baseline.mode if categorical else self.baseline.mean
            if fallback is None:
                raise ValueError(
                    "locf imputation requires a baseline fallback "
                    f"(baseline.{'mode' if categorical else 'mean'})"
                )
        return self

    @property
    def source_field(self) -> str:
        return self.source or self.name

    @property
    def categories(self) -> List[str]:
        return [] if self.encoding is None else list(self.encoding.one_hot)

    @property
    def output_names(self) -> List[str]:
        if self.encoding is None:
            return [self.name]
        return [f"{self.name}={category}" for category in self.encoding.one_hot]


class FeatureSpec(_Document):
    features: List[FeatureDefinition] = Field(min_length=1)

    @model_validator(mode="after")
    def _unique_names(self) -> "FeatureSpec":
        names = [name for feature in self.features for name in feature.output_names]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f"duplicate feature names: {', '.join(duplicates)}")
        return self

    def output_names(self) -> List[str]:
        return [name for feature in self.features for name in feature.output_names]

    def get(self, name: str) -> Optional[FeatureDefinition]:
        for feature in self.features:
            if feature.name == name:
                return feature
        return None


def parse_feature_spec(document: Any) -> FeatureSpec:
    try:
        return FeatureSpec.model_validate(document)
    except ValidationError as validation_error:
        raise FeatureSpecError(issues_from_validation_error(validation_error))


def load_feature_spec(path: Union[str, Path]) -> FeatureSpec:
    with open(path, "r", encoding="utf8") as spec_file:
        return parse_feature_spec(json_settings.loads(spec_file.read()))
