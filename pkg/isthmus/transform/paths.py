"""
Path expressions: `$`, `.field`, `[n]` and `[*]`. Expressions are validated
against this subset, then compiled with jsonpath-ng.
"""

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, List

from jsonpath_ng import parse as jsonpath_parse
from jsonpath_ng.exceptions import JsonPathLexerError, JsonPathParserError

from .exceptions import InvalidPathExpression

_PATH_SUBSET = re.compile(
    r"^\$(?:\.[A-Za-z_][A-Za-z0-9_\-]*|\[\d+\]|\[\*\])*$"
)


@dataclass(frozen=True)
class CompiledPath:
    expression: str
    _compiled: Any = field(compare=False, repr=False, hash=False)

    @property
    def has_wildcard(self) -> bool:
        return "[*]" in self.expression

    def find(self, document: Any) -> List[Any]:
        """Returns the matched values in document order."""
        try:
            return [match.value for match in self._compiled.find(document)]
        except (AttributeError, IndexError, KeyError, TypeError):
            return []


@lru_cache(maxsize=1024)
def compile_path(expression: str) -> CompiledPath:
    if not isinstance(expression, str) or not _PATH_SUBSET.match(expression):
        raise InvalidPathExpression(
            str(expression), "supported: $, .field, [n], [*]"
        )
    try:
        compiled = jsonpath_parse(expression)
    except (JsonPathLexerError, JsonPathParserError) as parse_error:
        raise InvalidPathExpression(expression, str(parse_error))
    return CompiledPath(expression, compiled)
