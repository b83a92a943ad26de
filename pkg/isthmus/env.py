import os
from dataclasses import dataclass
from pathlib import Path

from isthmus.utils import env_suffix, truthy


def get_env() -> str:
    return os.environ.get("ISTHMUS_ENV", "production")


def is_development() -> bool:
    """
    Returns a value indicating whether the engine is running for local development.
    This method checks if an `ISTHMUS_ENV` environment variable is set and its
    lowercase value is either "local", "dev", or "development".
    """
    return get_env().lower() in {"local", "dev", "development"}


def is_production() -> bool:
    """
    Returns a value indicating whether the engine is running for the production
    environment (default is true).
    """
    return get_env().lower() in {"prod", "production"}


def get_source_token(source_id: str, token_env: str = "") -> str:
    """
    Reads the access token of a source from the environment: the variable named
    by `token_env` when given, `ISTHMUS_TOKEN_<SOURCE_ID>` otherwise. Returns an
    empty string when the variable is not set.
    """
    name = token_env or f"ISTHMUS_TOKEN_{env_suffix(source_id)}"
    return os.environ.get(name, "")


@dataclass(init=False)
class EnvironmentSettings:
    env: str
    data_dir: Path
    config_path: Path
    log_level: str
    log_stderr: bool
    add_signal_handler: bool

    def __init__(self) -> None:
        self.env = get_env()
        self.data_dir = Path(os.environ.get("ISTHMUS_DATA_DIR", "isthmus-data"))
        self.config_path = Path(os.environ.get("ISTHMUS_CONFIG", "isthmus.json"))
        self.log_level = os.environ.get("ISTHMUS_LOG_LEVEL", "INFO").upper()
        self.log_stderr = truthy(os.environ.get("ISTHMUS_LOG_STDERR", ""))
        self.add_signal_handler = truthy(
            os.environ.get("ISTHMUS_SIGNAL_HANDLER", "1"), True
        )
