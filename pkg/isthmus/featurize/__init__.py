"""
Imputation, range filters and categorical encoding of patient records.
"""

from .encoding import one_hot
from .engine import FeatureVector, featurize
from .exceptions import FeatureError, FeatureRejected, FeatureSpecError
from .locf import LocfState
from .spec import (
    BaselineStats,
    FeatureDefinition,
    FeatureSpec,
    Imputation,
    OneHot,
    Reduction,
    load_feature_spec,
    parse_feature_spec,
)

__all__ = [
    "BaselineStats",
    "FeatureDefinition",
    "FeatureError",
    "FeatureRejected",
    "FeatureSpec",
    "FeatureSpecError",
    "FeatureVector",
    "Imputation",
    "LocfState",
    "OneHot",
    "Reduction",
    "featurize",
    "load_feature_spec",
    "one_hot",
    "parse_feature_spec",
]
