"""
Validation issues addressed by JSON path, shared by every JSON document the
engine reads (configuration, templates, feature specs, model signatures).
"""

from typing import Iterable, List, NamedTuple, Sequence, Union

from pydantic import ValidationError


class Issue(NamedTuple):
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def json_path(loc: Iterable[Union[str, int]], root: str = "$") -> str:
    """
    Converts a location tuple into a JSON path: ("pipelines", 1, "mode") becomes
    "$.pipelines[1].mode".
    """
    value = root
    for part in loc:
        if isinstance(part, int):
            value += f"[{part}]"
        else:
            value += f".{part}"
    return value


def issues_from_validation_error(
    error: ValidationError, root: str = "$"
) -> List[Issue]:
    issues = []
    for item in error.errors():
        # union members and function validators add synthetic location parts
        loc = [
            part
            for part in item["loc"]
            if not (
                isinstance(part, str)
                and ("[" in part or part.startswith("function-"))
            )
        ]
        message = item["msg"]
        if message.startswith("Value error, "):
            message = message[len("Value error, ") :]
        issues.append(Issue(json_path(loc, root), message))
    return issues


def format_issues(issues: Sequence[Issue]) -> str:
    return "; ".join(str(issue) for issue in issues)
