"""
Template engine: path extraction, type coercion and patient-level aggregation.
"""

from .aggregation import PatientRecord, aggregate
from .coercion import FieldType, coerce_value
from .exceptions import (
    CoercionError,
    InvalidPathExpression,
    TemplateSchemaError,
    TransformError,
)
from .paths import CompiledPath, compile_path
from .templates import (
    ArrayMode,
    PartialRecord,
    RejectedRecord,
    Template,
    TemplateOutput,
    TemplatePathError,
    TemplateRule,
    apply_template,
    load_template,
    parse_template,
)

__all__ = [
    "ArrayMode",
    "CoercionError",
    "CompiledPath",
    "FieldType",
    "InvalidPathExpression",
    "PartialRecord",
    "PatientRecord",
    "RejectedRecord",
    "Template",
    "TemplateOutput",
    "TemplatePathError",
    "TemplateRule",
    "TemplateSchemaError",
    "TransformError",
    "aggregate",
    "apply_template",
    "coerce_value",
    "compile_path",
    "load_template",
    "parse_template",
]
