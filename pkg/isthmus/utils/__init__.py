import re


def truthy(value: str, default: bool = False) -> bool:
    if not value:
        return default
    return value.upper() in {"1", "TRUE"}


def env_suffix(identifier: str) -> str:
    """
    Returns the environment variable suffix for an identifier, e.g. the source id
    "ehr-main" becomes "EHR_MAIN".
    """
    return re.sub(r"[^A-Z0-9]", "_", identifier.upper())
