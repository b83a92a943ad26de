"""
Composition of the services shared by every pipeline of an engine.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Set

from rodi import Container

from isthmus.config.models import PlatformConfig
from isthmus.monitor.alerts import Alert, AlertService
from isthmus.monitor.metrics import ALERTS
from isthmus.monitor.monitors import DriftMonitor, MissingDataMonitor
from isthmus.scoring.registry import ModelRegistry
from isthmus.scoring.signature import ModelSignature
from isthmus.settings.di import di_settings
from isthmus.store.abc import ScoreStore
from isthmus.store.archive import ArchiveStore
from isthmus.store.audit import AuditLog
from isthmus.store.quarantine import QuarantineStore
from isthmus.store.sql import SQLScoreStore, sqlite_url
from isthmus.utils.aio import HTTPHandler
from isthmus.utils.time import Clock

from .sink import SinkDelivery


@dataclass(frozen=True)
class DataLayout:
    """Where an engine keeps its durable state."""

    root: Path

    @property
    def database(self) -> Path:
        return self.root / "isthmus.db"

    @property
    def archive(self) -> Path:
        return self.root / "archive"

    @property
    def quarantine(self) -> Path:
        return self.root / "quarantine"

    @property
    def audit(self) -> Path:
        return self.root / "audit" / "audit.jsonl"

    @property
    def registry(self) -> Path:
        return self.root / "models"

    @property
    def logs(self) -> Path:
        return self.root / "logs"


@dataclass
class EngineServices:
    layout: DataLayout
    clock: Clock
    http: HTTPHandler
    store: ScoreStore
    archive: ArchiveStore
    quarantine: QuarantineStore
    audit: AuditLog
    registry: ModelRegistry
    alerts: AlertService
    missing: MissingDataMonitor
    drift: DriftMonitor
    sink: SinkDelivery
    # sources already warned about timestamps without a zone
    naive_warned: Set[str] = field(default_factory=set)


def _create_store(config: PlatformConfig, layout: DataLayout) -> ScoreStore:
    layout.root.mkdir(parents=True, exist_ok=True)
    return SQLScoreStore(config.stores.database_url or sqlite_url(layout.database))


def build_services(
    config: PlatformConfig,
    layout: DataLayout,
    *,
    clock: Clock,
    http: Optional[HTTPHandler] = None,
) -> EngineServices:
    """
    Registers the engine services in a container and resolves them. The store,
    the archive, the audit log and the registry are single instances shared by
    all pipelines; each serializes its own writes.
    """
    container = di_settings.get_default_container()
    assert isinstance(container, Container)

    store = _create_store(config, layout)
    audit = AuditLog(layout.audit, clock)

    def on_registry_event(event: str, signature: ModelSignature) -> None:
        audit.record(
            event,
            model_id=signature.model_id,
            version=signature.version,
            digest=signature.digest,
            mode=signature.mode.value,
        )

    def on_alert(alert: Alert) -> None:
        store.increment_metrics(alert.pipeline, {ALERTS: 1})

    http = http or HTTPHandler()
    alerts = AlertService(config.alerts, http, clock, on_alert)

    container.add_instance(layout, DataLayout)
    container.add_instance(clock, Clock)
    container.add_instance(http, HTTPHandler)
    container.add_instance(store, ScoreStore)
    container.add_instance(audit, AuditLog)
    container.add_instance(ArchiveStore(layout.archive), ArchiveStore)
    container.add_instance(QuarantineStore(layout.quarantine), QuarantineStore)
    registry = ModelRegistry(layout.registry, on_registry_event)
    container.add_instance(registry, ModelRegistry)
    container.add_instance(alerts, AlertService)
    container.add_instance(MissingDataMonitor(alerts, clock), MissingDataMonitor)
    container.add_instance(DriftMonitor(store, alerts, config.alerts), DriftMonitor)
    container.add_instance(SinkDelivery(store, http, clock), SinkDelivery)

    provider = container.build_provider()
    return EngineServices(
        layout=provider.get(DataLayout),
        clock=provider.get(Clock),
        http=provider.get(HTTPHandler),
        store=provider.get(ScoreStore),
        archive=provider.get(ArchiveStore),
        quarantine=provider.get(QuarantineStore),
        audit=provider.get(AuditLog),
        registry=provider.get(ModelRegistry),
        alerts=provider.get(AlertService),
        missing=provider.get(MissingDataMonitor),
        drift=provider.get(DriftMonitor),
        sink=provider.get(SinkDelivery),
    )
