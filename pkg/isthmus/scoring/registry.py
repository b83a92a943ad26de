"""
Versioned model registry on disk:

    <data-dir>/models/<model_id>/v<version>.json
    <data-dir>/models/<model_id>/v<version>.baselines.json
    <data-dir>/models/<model_id>/current
"""

import os
import re
import threading
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

from isthmus.common.types import DeploymentMode
from isthmus.monitor.logs import get_logger, log_extra
from isthmus.settings.json import json_settings

from .exceptions import UnknownModelError, VersionConflictError
from .signature import ModelSignature, parse_signature, read_signature

_VERSION_FILE = re.compile(r"^v(\d+)\.json$")

logger = get_logger("scoring")

RegistryListener = Callable[[str, ModelSignature], None]


def _write_atomically(path: Path, text: str) -> None:
    temporary = path.with_name(path.name + ".tmp")
    with open(temporary, "w", encoding="utf8") as target:
        target.write(text)
        target.flush()
        os.fsync(target.fileno())
    os.replace(temporary, path)


class ModelRegistry:
    """
    Stores published signatures. Published versions are immutable; the
    `current` marker names the version live pipelines score with. Mutations are
    serialized.
    """

    def __init__(
        self, root: Union[str, Path], listener: Optional[RegistryListener] = None
    ) -> None:
        self.root = Path(root)
        self._lock = threading.RLock()
        self._listener = listener

    def _model_dir(self, model_id: str) -> Path:
        return self.root / model_id

    def _version_path(self, model_id: str, version: int) -> Path:
        return self._model_dir(model_id) / f"v{version}.json"

    def _notify(self, event: str, signature: ModelSignature) -> None:
        if self._listener is not None:
            self._listener(event, signature)

    def register(self, signature: ModelSignature) -> bool:
        """
        Publishes a signature. Returns False when the identical version already
        exists; raises VersionConflictError when it exists with other content.
        """
        with self._lock:
            path = self._version_path(signature.model_id, signature.version)
            if path.exists():
                existing = self.get(signature.model_id, signature.version)
                if existing.canonical() != signature.canonical():
                    raise VersionConflictError(signature.model_id, signature.version)
                return False

            path.parent.mkdir(parents=True, exist_ok=True)
            _write_atomically(path, json_settings.pretty_dumps(signature.to_document()))
            logger.info(
                "Registered model %s v%s",
                signature.model_id,
                signature.version,
                extra=log_extra(
                    stage="registry",
                    model_id=signature.model_id,
                    version=signature.version,
                    digest=signature.digest,
                ),
            )
            self._notify("model_registered", signature)

            if (
                signature.mode is DeploymentMode.LIVE
                and self.current_version(signature.model_id) is None
            ):
                self.set_current(signature.model_id, signature.version)
            return True

    def versions(self, model_id: str) -> List[int]:
        folder = self._model_dir(model_id)
        if not folder.is_dir():
            return []
        found = []
        for item in folder.iterdir():
            match = _VERSION_FILE.match(item.name)
            if match:
                found.append(int(match.group(1)))
        return sorted(found)

    def get(self, model_id: str, version: int) -> ModelSignature:
        path = self._version_path(model_id, version)
        if not path.exists():
            raise UnknownModelError(model_id, version)
        return read_signature(path)

    def latest(self, model_id: str) -> Optional[ModelSignature]:
        versions = self.versions(model_id)
        if not versions:
            return None
        return self.get(model_id, versions[-1])

    def next_version(self, model_id: str) -> int:
        versions = self.versions(model_id)
        return versions[-1] + 1 if versions else 1

    def current_version(self, model_id: str) -> Optional[int]:
        marker = self._model_dir(model_id) / "current"
        if not marker.exists():
            return None
        text = marker.read_text(encoding="utf8").strip()
        return int(text) if text else None

    def current(self, model_id: str) -> Optional[ModelSignature]:
        version = self.current_version(model_id)
        if version is None:
            return None
        return self.get(model_id, version)

    def set_current(self, model_id: str, version: int) -> None:
        with self._lock:
            if version not in self.versions(model_id):
                raise UnknownModelError(model_id, version)
            _write_atomically(self._model_dir(model_id) / "current", f"{version}\n")
            logger.info(
                "Model %s now scores live with v%s",
                model_id,
                version,
                extra=log_extra(stage="registry", model_id=model_id, version=version),
            )

    def _baselines_path(self, model_id: str, version: int) -> Path:
        return self._model_dir(model_id) / f"v{version}.baselines.json"

    def register_baselines(
        self, model_id: str, version: int, baselines: Dict[str, Dict[str, Any]]
    ) -> Path:
        """Stores the per-feature baseline statistics of a published version."""
        with self._lock:
            if version not in self.versions(model_id):
                raise UnknownModelError(model_id, version)
            path = self._baselines_path(model_id, version)
            _write_atomically(path, json_settings.pretty_dumps(baselines))
            logger.info(
                "Stored baselines of model %s v%s",
                model_id,
                version,
                extra=log_extra(
                    stage="registry",
                    model_id=model_id,
                    version=version,
                    features=len(baselines),
                ),
            )
            return path

    def baselines(
        self, model_id: str, version: int
    ) -> Optional[Dict[str, Dict[str, Any]]]:
        path = self._baselines_path(model_id, version)
        if not path.exists():
            return None
        return json_settings.loads(path.read_text(encoding="utf8"))

    def resolve(
        self, signature: ModelSignature, mode: DeploymentMode
    ) -> ModelSignature:
        """
        Returns the version a pipeline declaring `signature` scores with: the
        current version for live pipelines, the latest one for silent pipelines,
        and the declared one when the registry has nothing better.
        """
        if mode is DeploymentMode.LIVE:
            found = self.current(signature.model_id)
        else:
            found = self.latest(signature.model_id)
        return found or signature


def load_signature(
    path: Union[str, Path], registry: Optional[ModelRegistry] = None
) -> ModelSignature:
    """Validates a signature file and registers it when a registry is given."""
    signature = read_signature(path)
    if registry is not None:
        registry.register(signature)
    return signature


__all__ = ["ModelRegistry", "load_signature", "parse_signature"]
