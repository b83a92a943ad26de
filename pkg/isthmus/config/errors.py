from typing import List

from isthmus.common.issues import Issue
from isthmus.errors import IsthmusError


class ConfigError(IsthmusError):
    """Base class for configuration errors."""

    @property
    def issues(self) -> List[Issue]:
        return []


class ConfigParseError(ConfigError):
    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"Cannot parse the configuration file {path}: {reason}")
        self.path = path
        self.reason = reason

    @property
    def issues(self) -> List[Issue]:
        return [Issue("$", self.reason)]


class ConfigValidationError(ConfigError):
    def __init__(self, issues: List[Issue]) -> None:
        lines = "\n".join(f"  {issue}" for issue in issues)
        super().__init__(f"Invalid configuration:\n{lines}")
        self._issues = list(issues)

    @property
    def issues(self) -> List[Issue]:
        return list(self._issues)


class DanglingReferenceError(ConfigValidationError):
    """Raised when the configuration references ids or files that do not exist."""
