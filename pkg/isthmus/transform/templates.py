"""
User defined templates turning fetched JSON documents into flat typed records.

A template declares the path of the patient identifier (`key`), optionally the
path selecting several entities inside one document (`records`), and ordered
extraction rules.
"""

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from isthmus.common.issues import Issue, issues_from_validation_error
from isthmus.common.types import SourceRef
from isthmus.ingest.payloads import RawPayload
from isthmus.settings.json import json_settings
from isthmus.utils.time import is_naive_timestamp

from .coercion import FieldType, coerce_value
from .exceptions import CoercionError, InvalidPathExpression, TemplateSchemaError
from .paths import CompiledPath, compile_path


class ArrayMode(str, Enum):
    FIRST = "first"
    LAST = "last"
    ALL = "all"
    FLATTEN = "flatten"


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RuleDocument(_Document):
    out: str = Field(min_length=1)
    path: str
    type: FieldType
    default: Any = None
    required: bool = False
    array_mode: ArrayMode = ArrayMode.FIRST


class TemplateDocument(_Document):
    key: str
    records: str = "$"
    rules: List[RuleDocument] = Field(min_length=1)


class TemplatePathError(TemplateSchemaError):
    """Raised when a template declares path expressions outside the subset."""

    def __init__(self, issues: List[Issue], expression: str) -> None:
        super().__init__(issues)
        self.expression = expression


@dataclass(frozen=True)
class TemplateRule:
    output: str
    path: CompiledPath
    type: FieldType
    default: Any = None
    required: bool = False
    array_mode: ArrayMode = ArrayMode.FIRST


@dataclass(frozen=True)
class Template:
    key: CompiledPath
    rules: Tuple[TemplateRule, ...]
    records: CompiledPath = field(default_factory=lambda: compile_path("$"))

    @property
    def outputs(self) -> List[str]:
        return [rule.output for rule in self.rules]


@dataclass(frozen=True)
class PartialRecord:
    patient_id: str
    fields: Dict[str, Any]
    source: SourceRef
    fetched_at: datetime


@dataclass(frozen=True)
class RejectedRecord:
    payload: RawPayload
    reason: str
    entity: Any = None


@dataclass
class TemplateOutput:
    records: List[PartialRecord] = field(default_factory=list)
    rejected: List[RejectedRecord] = field(default_factory=list)
    coercion_warnings: int = 0
    extracted: int = 0
    naive_timestamps: int = 0

    def extend(self, other: "TemplateOutput") -> None:
        self.records.extend(other.records)
        self.rejected.extend(other.rejected)
        self.coercion_warnings += other.coercion_warnings
        self.extracted += other.extracted
        self.naive_timestamps += other.naive_timestamps


def _compile(expression: str, path: str, issues: List[Issue], bad: List[str]):
    try:
        return compile_path(expression)
    except InvalidPathExpression as invalid_path:
        issues.append(Issue(path, str(invalid_path)))
        bad.append(expression)
        return None


def parse_template(document: Any) -> Template:
    """
    Validates a template document and compiles its path expressions. Raises
    TemplateSchemaError listing every issue by JSON path.
    """
    try:
        parsed = TemplateDocument.model_validate(document)
    except ValidationError as validation_error:
        raise TemplateSchemaError(issues_from_validation_error(validation_error))

    issues: List[Issue] = []
    bad_paths: List[str] = []
    key = _compile(parsed.key, "$.key", issues, bad_paths)
    records = _compile(parsed.records, "$.records", issues, bad_paths)

    rules = []
    outputs = set()
    for index, rule in enumerate(parsed.rules):
        location = f"$.rules[{index}]"
        if rule.out in outputs:
            issues.append(
                Issue(f"{location}.out", f"duplicate output field {rule.out!r}")
            )
        outputs.add(rule.out)

        path = _compile(rule.path, f"{location}.path", issues, bad_paths)

        if rule.default is not None:
            if rule.required:
                issues.append(
                    Issue(
                        f"{location}.default",
                        "a required rule cannot declare a default",
                    )
                )
            else:
                try:
                    coerce_value(rule.default, rule.type)
                except CoercionError as coercion_error:
                    issues.append(Issue(f"{location}.default", str(coercion_error)))

        if path is not None:
            rules.append(
                TemplateRule(
                    rule.out,
                    path,
                    rule.type,
                    rule.default,
                    rule.required,
                    rule.array_mode,
                )
            )

    if bad_paths:
        raise TemplatePathError(issues, bad_paths[0])
    if issues:
        raise TemplateSchemaError(issues)
    assert key is not None and records is not None
    return Template(key, tuple(rules), records)


def load_template(path: Union[str, Path]) -> Template:
    with open(path, "r", encoding="utf8") as template_file:
        return parse_template(json_settings.loads(template_file.read()))


def _flatten(values: List[Any]) -> List[Any]:
    flat: List[Any] = []
    for value in values:
        if isinstance(value, list):
            flat.extend(_flatten(value))
        else:
            flat.append(value)
    return flat


class _Extraction:
    __slots__ = ("warnings", "naive")

    def __init__(self) -> None:
        self.warnings = 0
        self.naive = 0

    def coerce(self, value: Any, rule: TemplateRule) -> Any:
        try:
            coerced = coerce_value(value, rule.type)
        except CoercionError:
            self.warnings += 1
            return None
        if rule.type is FieldType.TIMESTAMP and is_naive_timestamp(value):
            self.naive += 1
        return coerced

    def extract(self, rule: TemplateRule, entity: Any) -> Tuple[bool, Any]:
        """Returns (found, value); a value found but not coercible is (True, None)."""
        matches = rule.path.find(entity)
        candidates = matches
        if len(matches) == 1 and isinstance(matches[0], list):
            candidates = matches[0]
        if rule.array_mode is ArrayMode.FLATTEN:
            candidates = _flatten(candidates)
        candidates = [value for value in candidates if value is not None]
        if not candidates:
            return False, None

        if rule.array_mode is ArrayMode.FIRST:
            return True, self.coerce(candidates[0], rule)
        if rule.array_mode is ArrayMode.LAST:
            return True, self.coerce(candidates[-1], rule)

        values = []
        for candidate in candidates:
            coerced = self.coerce(candidate, rule)
            if coerced is not None:
                values.append(coerced)
        return True, values or None


def _patient_id(template: Template, entity: Any) -> Optional[str]:
    for value in template.key.find(entity):
        if isinstance(value, bool):
            return None
        if isinstance(value, int):
            return str(value)
        if isinstance(value, str) and value.strip():
            return value.strip()
        return None
    return None


def apply_template(template: Template, payload: RawPayload) -> TemplateOutput:
    """
    Extracts one partial record per entity of the payload. Pure: the same
    template and payload always give the same output.
    """
    output = TemplateOutput()
    entities = template.records.find(payload.body)
    if not entities:
        output.rejected.append(
            RejectedRecord(
                payload,
                f"records path {template.records.expression} matched nothing",
            )
        )
        return output

    for entity in entities:
        patient_id = _patient_id(template, entity)
        if patient_id is None:
            output.rejected.append(
                RejectedRecord(
                    payload,
                    f"aggregation key {template.key.expression} "
                    "missing or not a string",
                    entity,
                )
            )
            continue

        extraction = _Extraction()
        fields: Dict[str, Any] = {}
        rejection = None
        for rule in template.rules:
            found, value = extraction.extract(rule, entity)
            if found:
                output.extracted += 1
            if value is None:
                if rule.required:
                    reason = "missing" if not found else "not coercible"
                    rejection = f"required field {rule.output!r} {reason}"
                    break
                if rule.default is not None and not found:
                    value = coerce_value(rule.default, rule.type)
            fields[rule.output] = value

        if rejection is not None:
            output.rejected.append(RejectedRecord(payload, rejection, entity))
            continue

        output.coercion_warnings += extraction.warnings
        output.naive_timestamps += extraction.naive
        output.records.append(
            PartialRecord(patient_id, fields, payload.ref, payload.fetched_at)
        )
    return output
