import math
import re
from enum import Enum
from typing import Any

from isthmus.utils.time import parse_timestamp

from .exceptions import CoercionError

_INTEGER = re.compile(r"^[+-]?\d+$")


class FieldType(str, Enum):
    NUMBER = "number"
    STRING = "string"
    BOOLEAN = "boolean"
    TIMESTAMP = "timestamp"


def _finite(number):
    # ints beyond the float range cannot be featurized
    try:
        finite = math.isfinite(number)
    except OverflowError:
        finite = False
    if not finite:
        raise CoercionError(number, "number")
    return number


def _to_number(value: Any):
    if isinstance(value, bool):
        raise CoercionError(value, "number")
    if isinstance(value, (int, float)):
        return _finite(value)
    if isinstance(value, str):
        text = value.strip()
        if _INTEGER.match(text):
            try:
                return _finite(int(text))
            except ValueError:
                # beyond the int conversion digit limit
                raise CoercionError(value[:32], "number")
        try:
            number = float(text)
        except ValueError:
            raise CoercionError(value, "number")
        if not math.isfinite(number):
            raise CoercionError(value, "number")
        return number
    raise CoercionError(value, "number")


def _to_string(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    raise CoercionError(value, "string")


def _to_boolean(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        text = value.strip().lower()
        if text == "true":
            return True
        if text == "false":
            return False
    raise CoercionError(value, "boolean")


def _to_timestamp(value: Any):
    if not isinstance(value, str):
        raise CoercionError(value, "timestamp")
    try:
        return parse_timestamp(value)
    except (ValueError, OverflowError):
        raise CoercionError(value, "timestamp")


_COERCERS = {
    FieldType.NUMBER: _to_number,
    FieldType.STRING: _to_string,
    FieldType.BOOLEAN: _to_boolean,
    FieldType.TIMESTAMP: _to_timestamp,
}


def coerce_value(value: Any, target: FieldType) -> Any:
    """
    Converts an extracted JSON value to the target type. Raises CoercionError
    when the value cannot represent the type.
    """
    return _COERCERS[FieldType(target)](value)
