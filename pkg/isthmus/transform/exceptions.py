from typing import List

from isthmus.common.issues import Issue, format_issues
from isthmus.errors import IsthmusError


class TransformError(IsthmusError):
    """Base class for template errors."""


class InvalidPathExpression(TransformError):
    def __init__(self, expression: str, reason: str = "") -> None:
        message = f"Invalid path expression: {expression!r}"
        if reason:
            message += f" ({reason})"
        super().__init__(message)
        self.expression = expression


class TemplateSchemaError(TransformError):
    def __init__(self, issues: List[Issue]) -> None:
        super().__init__(f"Invalid template: {format_issues(issues)}")
        self.issues = issues


class CoercionError(TransformError):
    def __init__(self, value, target: str) -> None:
        super().__init__(f"Cannot coerce {value!r} to {target}.")
        self.value = value
        self.target = target
