"""
Loading and validation of the platform configuration document.

Validation is transitive: the template, feature spec and model signature of
every pipeline are opened and validated too, and their issues are reported
under the pipeline field that references them.
"""

import json
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Set, Tuple, Union

from pydantic import ValidationError

from isthmus.common.issues import Issue, issues_from_validation_error
from isthmus.common.types import DeploymentMode
from isthmus.featurize.exceptions import FeatureSpecError
from isthmus.featurize.spec import FeatureSpec, parse_feature_spec
from isthmus.scoring.exceptions import SignatureError
from isthmus.scoring.signature import ModelSignature, parse_signature
from isthmus.settings.json import json_settings
from isthmus.transform.exceptions import TemplateSchemaError
from isthmus.transform.templates import Template, parse_template

from .errors import ConfigParseError, ConfigValidationError, DanglingReferenceError
from .models import ModelRef, PipelineSpec, PlatformConfig, SourceKind, SourceSpec

PIPELINE_FILES = ("template_path", "feature_spec_path", "model_signature_path")


class _Validation:
    def __init__(self, base_dir: Path) -> None:
        self.base_dir = base_dir
        self.issues: List[Issue] = []
        self.dangling = False

    def add(self, path: str, message: str, *, dangling: bool = False) -> None:
        self.issues.append(Issue(path, message))
        self.dangling = self.dangling or dangling

    def resolve(self, value: str) -> Path:
        path = Path(value).expanduser()
        if not path.is_absolute():
            path = self.base_dir / path
        return path

    def read_document(
        self,
        location: str,
        path: Path,
        parse: Callable[[Any], Any],
        errors: Tuple[type, ...],
    ) -> Optional[Any]:
        if not path.is_file():
            self.add(location, f"file not found: {path}", dangling=True)
            return None
        try:
            document = json_settings.loads(path.read_text(encoding="utf8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as decode_error:
            self.add(location, f"{path}: invalid JSON: {decode_error}")
            return None
        try:
            return parse(document)
        except errors as document_error:
            for issue in document_error.issues:  # type: ignore[attr-defined]
                self.add(location, f"{path}: {issue.path}: {issue.message}")
            return None


def _check_unique(
    validation: _Validation, items: List[Any], collection: str, label: str
) -> None:
    seen: Set[str] = set()
    for index, item in enumerate(items):
        if item.id in seen:
            validation.add(
                f"$.{collection}[{index}].id", f"duplicate {label} id {item.id!r}"
            )
        seen.add(item.id)


def _check_source(validation: _Validation, index: int, source: SourceSpec) -> None:
    location = f"$.sources[{index}]"
    if source.kind is SourceKind.FILE_DROP:
        if not source.directory:
            validation.add(
                f"{location}.directory", "a file_drop source requires a directory"
            )
        if source.endpoint:
            validation.add(
                f"{location}.endpoint",
                "a file_drop source cannot declare an endpoint",
            )
    else:
        if not source.endpoint:
            validation.add(
                f"{location}.endpoint",
                f"a {source.kind.value} source requires an endpoint",
            )
        if source.directory:
            validation.add(
                f"{location}.directory",
                f"a {source.kind.value} source cannot declare a directory",
            )


def _check_pipeline(
    validation: _Validation,
    index: int,
    pipeline: PipelineSpec,
    source_ids: Set[str],
    signatures: Dict[Tuple[str, int], Tuple[str, str]],
) -> Tuple[Dict[str, str], Optional[ModelRef]]:
    location = f"$.pipelines[{index}]"
    if pipeline.mode is DeploymentMode.LIVE and not pipeline.sink:
        validation.add(f"{location}.sink", "a live pipeline requires a sink")
    if pipeline.mode is DeploymentMode.SILENT and pipeline.sink:
        validation.add(
            f"{location}.sink",
            "a silent pipeline cannot declare a sink: "
            "silent scores are never delivered",
        )
    if pipeline.source_id not in source_ids:
        validation.add(
            f"{location}.source_id",
            f"unknown source {pipeline.source_id!r}",
            dangling=True,
        )

    resolved = {
        name: validation.resolve(getattr(pipeline, name)) for name in PIPELINE_FILES
    }

    template: Optional[Template] = validation.read_document(
        f"{location}.template_path",
        resolved["template_path"],
        parse_template,
        (TemplateSchemaError,),
    )
    feature_spec: Optional[FeatureSpec] = validation.read_document(
        f"{location}.feature_spec_path",
        resolved["feature_spec_path"],
        parse_feature_spec,
        (FeatureSpecError,),
    )
    signature: Optional[ModelSignature] = validation.read_document(
        f"{location}.model_signature_path",
        resolved["model_signature_path"],
        parse_signature,
        (SignatureError,),
    )

    if template is not None and feature_spec is not None:
        outputs = set(template.outputs)
        for feature_index, feature in enumerate(feature_spec.features):
            if feature.source_field not in outputs:
                validation.add(
                    f"{location}.feature_spec_path",
                    f"{resolved['feature_spec_path']}: "
                    f"$.features[{feature_index}]: field {feature.source_field!r} "
                    "is not produced by the template",
                )

    model_ref = None
    if signature is not None:
        model_ref = ModelRef(signature.model_id, signature.version, signature.digest)
        key = (signature.model_id, signature.version)
        known = signatures.get(key)
        if known is not None and known[0] != signature.digest:
            validation.add(
                f"{location}.model_signature_path",
                f"model {signature.model_id} v{signature.version} differs from the "
                f"signature declared in {known[1]}",
            )
        signatures.setdefault(
            key, (signature.digest, str(resolved["model_signature_path"]))
        )

        if feature_spec is not None:
            available = set(feature_spec.output_names())
            missing = [name for name in signature.features if name not in available]
            if missing:
                validation.add(
                    f"{location}.model_signature_path",
                    f"{resolved['model_signature_path']}: $.features: "
                    f"not computed by the feature spec: {', '.join(missing)}",
                )

    return {name: str(path) for name, path in resolved.items()}, model_ref


def validate_document(document: Any, base_dir: Union[str, Path]) -> PlatformConfig:
    """
    Validates a configuration document whose relative paths are relative to
    `base_dir`. Raises ConfigValidationError listing every issue.
    """
    base_dir = Path(base_dir)
    if not isinstance(document, dict):
        raise ConfigValidationError(
            [Issue("$", "the configuration must be a JSON object")]
        )
    try:
        config = PlatformConfig.model_validate(document)
    except ValidationError as validation_error:
        raise ConfigValidationError(issues_from_validation_error(validation_error))

    validation = _Validation(base_dir)
    _check_unique(validation, config.sources, "sources", "source")
    _check_unique(validation, config.pipelines, "pipelines", "pipeline")
    for index, source in enumerate(config.sources):
        _check_source(validation, index, source)

    source_ids = {source.id for source in config.sources}
    signatures: Dict[Tuple[str, int], Tuple[str, str]] = {}
    pipelines = []
    model_refs = {}
    for index, pipeline in enumerate(config.pipelines):
        paths, model_ref = _check_pipeline(
            validation, index, pipeline, source_ids, signatures
        )
        pipelines.append(pipeline.model_copy(update=paths))
        if model_ref is not None:
            model_refs[pipeline.id] = model_ref

    if validation.issues:
        if validation.dangling:
            raise DanglingReferenceError(validation.issues)
        raise ConfigValidationError(validation.issues)

    sources = [
        source.model_copy(
            update={"directory": str(validation.resolve(source.directory))}
        )
        if source.directory
        else source
        for source in config.sources
    ]
    stores = config.stores
    if stores.data_dir:
        data_dir = str(validation.resolve(stores.data_dir))
        stores = stores.model_copy(update={"data_dir": data_dir})

    resolved = config.model_copy(
        update={"sources": sources, "pipelines": pipelines, "stores": stores}
    )
    resolved._model_refs = model_refs
    resolved._base_dir = base_dir
    return resolved


def load_config(path: Union[str, Path]) -> PlatformConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf8")
    except FileNotFoundError:
        raise ConfigParseError(str(path), "file not found")
    except (OSError, UnicodeDecodeError) as read_error:
        raise ConfigParseError(str(path), str(read_error))
    try:
        document = json_settings.loads(text)
    except json.JSONDecodeError as decode_error:
        raise ConfigParseError(str(path), f"malformed JSON: {decode_error}")
    return validate_document(document, path.resolve().parent)


def dump_config(config: PlatformConfig) -> Dict[str, Any]:
    """Serializes a configuration to a document accepted by load_config."""
    return config.model_dump(mode="json", exclude_none=True)
