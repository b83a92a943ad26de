from dataclasses import dataclass, field
from typing import List

from .models import PlatformConfig


@dataclass(frozen=True)
class ConfigDelta:
    added: List[str] = field(default_factory=list)
    removed: List[str] = field(default_factory=list)
    changed: List[str] = field(default_factory=list)
    reconfigured: List[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.added or self.removed or self.changed or self.reconfigured)

    @property
    def reloaded(self) -> List[str]:
        """Pipelines whose runner must be rebuilt."""
        return sorted(set(self.changed) | set(self.reconfigured) | set(self.added))


def diff_config(old: PlatformConfig, new: PlatformConfig) -> ConfigDelta:
    """
    Compares two configurations pipeline by pipeline. `changed` lists pipelines
    whose model signature path or model version changed; `reconfigured` those
    with any other difference, including their source definition.
    """
    old_pipelines = {pipeline.id: pipeline for pipeline in old.pipelines}
    new_pipelines = {pipeline.id: pipeline for pipeline in new.pipelines}
    old_refs = old.model_refs
    new_refs = new.model_refs

    added = sorted(set(new_pipelines) - set(old_pipelines))
    removed = sorted(set(old_pipelines) - set(new_pipelines))
    changed = []
    reconfigured = []

    for pipeline_id in sorted(set(old_pipelines) & set(new_pipelines)):
        before = old_pipelines[pipeline_id]
        after = new_pipelines[pipeline_id]
        if before.model_signature_path != after.model_signature_path or (
            old_refs.get(pipeline_id) != new_refs.get(pipeline_id)
        ):
            changed.append(pipeline_id)
            continue
        if before != after or old.get_source(before.source_id) != new.get_source(
            after.source_id
        ):
            reconfigured.append(pipeline_id)

    return ConfigDelta(added, removed, changed, reconfigured)
