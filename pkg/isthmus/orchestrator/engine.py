"""
The engine runs every configured pipeline: once, on demand, or as a daemon
scheduling each pipeline at the cadence of its source. It also carries the
governance operations: replay, promotion, retraining and integrity checks.
"""

import asyncio
from collections import Counter
from contextlib import suppress
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from isthmus.common.types import DeploymentMode
from isthmus.config.delta import ConfigDelta, diff_config
from isthmus.config.errors import ConfigError
from isthmus.config.loader import load_config
from isthmus.config.models import PlatformConfig
from isthmus.env import EnvironmentSettings
from isthmus.featurize.locf import LocfState
from isthmus.monitor.alerts import Alert, AlertKind
from isthmus.monitor.drift import DriftReport
from isthmus.monitor.logs import get_logger, log_extra
from isthmus.monitor.metrics import status_document
from isthmus.scoring.exceptions import UnknownModelError
from isthmus.scoring.scorer import score_all
from isthmus.scoring.signature import ModelSignature
from isthmus.scoring.training import (
    Hyperparameters,
    build_baselines,
    design_matrix,
    retrain,
)
from isthmus.store.exceptions import ArchiveGapError, MissingArchiveRangeError
from isthmus.store.models import ArchiveViolation
from isthmus.utils.aio import HTTPHandler
from isthmus.utils.time import Clock, SystemClock

from .exceptions import InsufficientSilentHistoryError, UnknownPipelineError
from .feed import SourceFeed
from .pipeline import (
    PipelineDefinition,
    PipelineRunner,
    featurize_records,
    load_definition,
    score_rows,
    transform_payloads,
)
from .runs import PipelineRun, RunOutcome, StageHook
from .services import DataLayout, EngineServices, build_services

logger = get_logger("orchestrator")


class Engine:
    def __init__(
        self,
        config: PlatformConfig,
        *,
        settings: Optional[EnvironmentSettings] = None,
        clock: Optional[Clock] = None,
        http: Optional[HTTPHandler] = None,
        data_dir: Union[None, str, Path] = None,
        config_path: Union[None, str, Path] = None,
        stage_hook: Optional[StageHook] = None,
    ) -> None:
        self.settings = settings or EnvironmentSettings()
        self.config = config
        self.clock = clock or SystemClock()
        root = Path(data_dir) if data_dir else config.data_dir(self.settings.data_dir)
        self.layout = DataLayout(root)
        self.services: EngineServices = build_services(
            config, self.layout, clock=self.clock, http=http
        )
        self.stage_hook = stage_hook
        self.config_path = Path(config_path) if config_path else None
        self._config_mtime = self._read_mtime()
        self._definitions: Dict[str, PipelineDefinition] = {}
        self._runners: Dict[str, PipelineRunner] = {}
        self._feeds: Dict[str, SourceFeed] = {}
        self._locks: Dict[str, asyncio.Lock] = {}
        self._semaphore: Optional[asyncio.Semaphore] = None
        self._schedulers: Dict[str, "asyncio.Future[None]"] = {}
        self._scheduler_stops: Dict[str, asyncio.Event] = {}
        self._retired: List["asyncio.Future[None]"] = []
        self._daemon_stop: Optional[asyncio.Event] = None
        self.cycles: Counter = Counter()

        for pipeline in config.pipelines:
            self._install(pipeline.id, config)

    async def __aenter__(self) -> "Engine":
        return self

    async def __aexit__(self, *args: Any) -> None:
        await self.close()

    async def close(self) -> None:
        await self.services.alerts.flush(force=True)
        await self.services.http.close()
        self.services.store.close()

    @property
    def pipelines(self) -> List[str]:
        return list(self._runners)

    def definition(self, pipeline_id: str) -> PipelineDefinition:
        try:
            return self._definitions[pipeline_id]
        except KeyError:
            raise UnknownPipelineError(pipeline_id)

    def _install(self, pipeline_id: str, config: PlatformConfig) -> None:
        pipeline = config.get_pipeline(pipeline_id)
        assert pipeline is not None
        definition = load_definition(config, pipeline)
        self.services.registry.register(definition.signature)
        self._definitions[pipeline_id] = definition
        self._runners[pipeline_id] = PipelineRunner(
            definition,
            self.services,
            feed=self._feed_of(definition, config),
            run_spec=config.run,
            alert_spec=config.alerts,
            stage_hook=self.stage_hook,
        )

    def _feed_of(
        self, definition: PipelineDefinition, config: PlatformConfig
    ) -> SourceFeed:
        """The single feed of a source, shared by every pipeline reading it."""
        source = definition.source
        feed = self._feeds.get(source.id)
        if (
            feed is None
            or feed.source != source
            or feed.batch_size != config.run.batch_size
        ):
            feed = SourceFeed(source, self.services, batch_size=config.run.batch_size)
            self._feeds[source.id] = feed
            for runner in self._runners.values():
                if runner.definition.source.id == source.id:
                    runner.feed = feed
        return feed

    def _uninstall(self, pipeline_id: str) -> None:
        self._definitions.pop(pipeline_id, None)
        self._runners.pop(pipeline_id, None)
        sources = {runner.feed.source_id for runner in self._runners.values()}
        for source_id in set(self._feeds) - sources:
            del self._feeds[source_id]

    def _lock_of(self, pipeline_id: str) -> asyncio.Lock:
        if pipeline_id not in self._locks:
            self._locks[pipeline_id] = asyncio.Lock()
        return self._locks[pipeline_id]

    def _slots(self) -> asyncio.Semaphore:
        if self._semaphore is None:
            self._semaphore = asyncio.Semaphore(self.config.run.max_parallel_pipelines)
        return self._semaphore

    async def run_cycle(self, pipeline_id: str) -> PipelineRun:
        """
        Runs one cycle of a pipeline. Cycles of the same pipeline never overlap,
        and at most `max_parallel_pipelines` cycles are in flight.
        """
        if pipeline_id not in self._runners:
            raise UnknownPipelineError(pipeline_id)
        async with self._lock_of(pipeline_id):
            async with self._slots():
                runner = self._runners[pipeline_id]
                run = await runner.run_cycle()
        self.cycles[pipeline_id] += 1
        return run

    async def run_all_once(self) -> List[PipelineRun]:
        return list(
            await asyncio.gather(
                *(self.run_cycle(pipeline_id) for pipeline_id in self.pipelines)
            )
        )

    async def run_daemon(self, stop: Optional[asyncio.Event] = None) -> Dict[str, int]:
        """
        Schedules every pipeline at its source cadence until `stop` is set, then
        lets the cycles in flight finish. Returns the cycles run per pipeline.
        """
        stop = stop or asyncio.Event()
        self._daemon_stop = stop
        for pipeline_id in self.pipelines:
            self._start_scheduler(pipeline_id)
        monitor = asyncio.ensure_future(self._monitor_loop(stop))
        logger.info(
            "Daemon started with %s pipelines",
            len(self._schedulers),
            extra=log_extra(stage="daemon", pipelines=self.pipelines),
        )
        cycles_before = Counter(self.cycles)
        try:
            await stop.wait()
        finally:
            for event in self._scheduler_stops.values():
                event.set()
            await asyncio.gather(
                *self._schedulers.values(), *self._retired, return_exceptions=True
            )
            monitor.cancel()
            with suppress(asyncio.CancelledError):
                await monitor
            self._schedulers.clear()
            self._scheduler_stops.clear()
            self._retired.clear()
            self._daemon_stop = None

        cycles = {
            name: count - cycles_before.get(name, 0)
            for name, count in self.cycles.items()
        }
        logger.info(
            "Daemon stopped",
            extra=log_extra(stage="daemon", cycles=cycles),
        )
        return cycles

    def _start_scheduler(self, pipeline_id: str) -> None:
        event = asyncio.Event()
        self._scheduler_stops[pipeline_id] = event
        self._schedulers[pipeline_id] = asyncio.ensure_future(
            self._schedule(pipeline_id, event)
        )

    def _stop_scheduler(self, pipeline_id: str) -> None:
        event = self._scheduler_stops.pop(pipeline_id, None)
        if event is not None:
            event.set()
        task = self._schedulers.pop(pipeline_id, None)
        if task is not None:
            self._retired.append(task)

    async def _schedule(self, pipeline_id: str, stop: asyncio.Event) -> None:
        loop = asyncio.get_event_loop()
        while not stop.is_set() and pipeline_id in self._runners:
            started = loop.time()
            run = await self.run_cycle(pipeline_id)
            if run.outcome is RunOutcome.COMMITTED:
                try:
                    self.evaluate_drift(pipeline_id)
                except Exception as drift_error:
                    logger.warning(
                        "Drift evaluation of %s failed: %s",
                        pipeline_id,
                        drift_error,
                        extra=log_extra(pipeline_id, "drift"),
                    )
            delay = started + self.config.interval_of(pipeline_id) - loop.time()
            if delay > 0:
                with suppress(asyncio.TimeoutError):
                    await asyncio.wait_for(stop.wait(), delay)

    async def _monitor_loop(self, stop: asyncio.Event) -> None:
        loop = asyncio.get_event_loop()
        next_reload = loop.time() + self.config.run.reload_interval
        while not stop.is_set():
            try:
                self.check_sources()
                await self.services.alerts.flush()
                if self.config_path is not None and loop.time() >= next_reload:
                    next_reload = loop.time() + self.config.run.reload_interval
                    self.reload_config()
            except Exception as monitor_error:
                logger.warning(
                    "Monitoring pass failed: %s",
                    monitor_error,
                    extra=log_extra(stage="monitor"),
                )
            with suppress(asyncio.TimeoutError):
                await asyncio.wait_for(stop.wait(), self.config.run.monitor_interval)

    def _read_mtime(self) -> Optional[float]:
        if self.config_path is None:
            return None
        try:
            return self.config_path.stat().st_mtime
        except OSError:
            return None

    def reload_config(self, *, force: bool = False) -> Optional[ConfigDelta]:
        """
        Loads the configuration file again when it changed on disk and applies
        the difference. An invalid file is reported and the running
        configuration kept.
        """
        if self.config_path is None:
            return None
        mtime = self._read_mtime()
        if not force and mtime == self._config_mtime:
            return None
        self._config_mtime = mtime
        try:
            config = load_config(self.config_path)
        except ConfigError as config_error:
            logger.warning(
                "Ignoring the invalid configuration %s: %s",
                self.config_path,
                config_error,
                extra=log_extra(
                    stage="reload", issues=[str(issue) for issue in config_error.issues]
                ),
            )
            return None
        return self.apply_config(config)

    def apply_config(self, config: PlatformConfig) -> ConfigDelta:
        """
        Applies the difference between the running configuration and `config`.
        Removed pipelines finish their cycle in flight and stop; changed ones
        run their next cycle with the new definition; added ones start.
        """
        delta = diff_config(self.config, config)
        settings_changed = (
            config.run != self.config.run or config.alerts != self.config.alerts
        )
        if not delta and not settings_changed:
            self.config = config
            return delta

        for pipeline_id in delta.removed:
            self._stop_scheduler(pipeline_id)
            self._uninstall(pipeline_id)

        reloaded = self.pipelines if settings_changed else []
        reloaded = sorted(set(reloaded) | set(delta.reloaded))
        self.services.alerts.spec = config.alerts
        self.services.drift.spec = config.alerts
        if config.run.max_parallel_pipelines != self.config.run.max_parallel_pipelines:
            self._semaphore = None
        self.config = config
        for pipeline_id in reloaded:
            self._install(pipeline_id, config)

        if self._daemon_stop is not None:
            for pipeline_id in delta.added:
                self._start_scheduler(pipeline_id)

        logger.info(
            "Configuration reloaded",
            extra=log_extra(
                stage="reload",
                added=delta.added,
                removed=delta.removed,
                changed=delta.changed,
                reconfigured=delta.reconfigured,
            ),
        )
        self.services.audit.record(
            "config_reloaded",
            added=delta.added,
            removed=delta.removed,
            changed=delta.changed,
            reconfigured=delta.reconfigured,
        )
        return delta

    def check_sources(self, now: Optional[datetime] = None) -> List[Alert]:
        """Raises missing_data for every source silent past twice its cadence."""
        raised = []
        source_ids = {definition.source.id for definition in self._definitions.values()}
        for source_id in sorted(source_ids):
            source = self.config.get_source(source_id)
            if source is None:
                continue
            alert = self.services.missing.check_missing_data(
                source, now, cadence=self.config.run.poll_interval
            )
            if alert is not None:
                raised.append(alert)
        return raised

    def evaluate_drift(self, pipeline_id: str) -> List[DriftReport]:
        definition = self.definition(pipeline_id)
        return self.services.drift.evaluate(pipeline_id, definition.features)

    def verify_archive(self) -> List[ArchiveViolation]:
        """
        Checks the payload archive and the audit log chain. Every violation
        raises an integrity alert.
        """
        violations = self.services.archive.verify_archive()
        audit_path = str(self.services.audit.path)
        violations.extend(
            ArchiveViolation(audit_path, line, "audit hash chain broken")
            for line in self.services.audit.verify()
        )
        for violation in violations:
            logger.error(
                "Integrity violation: %s",
                violation,
                extra=log_extra(stage="verify", **violation.to_dict()),
            )
            self.services.alerts.raise_alert(
                AlertKind.INTEGRITY_VIOLATION, "archive", str(violation)
            )
        return violations

    def status(self) -> Dict[str, Any]:
        store = self.services.store
        metrics = status_document(store.metrics())
        pipelines = {}
        for pipeline_id, definition in self._definitions.items():
            checkpoint = store.read_checkpoint(pipeline_id)
            source = store.read_source_state(definition.source.id)
            signature = self.services.registry.resolve(
                definition.signature, definition.mode
            )
            pipelines[pipeline_id] = {
                "mode": definition.mode.value,
                "source_id": definition.source.id,
                "model_id": signature.model_id,
                "version": signature.version,
                "checkpoint": checkpoint.to_dict() if checkpoint else None,
                "source": source.to_dict() if source else None,
                "pending_deliveries": len(store.pending_deliveries(pipeline_id)),
            }
        return {
            "pipelines": pipelines,
            "metrics": metrics,
            "alerts": [alert.to_dict() for alert in self.services.alerts.pending()],
        }

    def replay(
        self,
        pipeline_id: str,
        from_batch: Optional[str] = None,
        to_batch: Optional[str] = None,
    ) -> List[PipelineRun]:
        """
        Runs the committed batches from `from_batch` to `to_batch` again, from the
        archive, with the version the pipeline scores with now. Results go to
        the replay table only. Feature state is rebuilt from the batches
        committed before the range.
        """
        definition = self.definition(pipeline_id)
        services = self.services
        committed = services.store.committed_batches(pipeline_id)
        batch_ids = [record.batch_id for record in committed]
        if not committed:
            if from_batch or to_batch:
                missing = from_batch or to_batch or ""
                raise MissingArchiveRangeError(pipeline_id, missing)
            return []

        def index_of(batch_id: Optional[str], default: int) -> int:
            if batch_id is None:
                return default
            if batch_id not in batch_ids:
                raise MissingArchiveRangeError(pipeline_id, batch_id)
            return batch_ids.index(batch_id)

        first = index_of(from_batch, 0)
        last = index_of(to_batch, len(committed) - 1)
        if first > last:
            raise MissingArchiveRangeError(pipeline_id, from_batch or "")

        signature = services.registry.resolve(definition.signature, definition.mode)
        state = LocfState()
        runs = []
        for index, record in enumerate(committed[: last + 1]):
            payloads = services.archive.read_archive(
                record.source_id, record.first_sequence, record.last_sequence
            )
            if len(payloads) < record.payloads:
                raise ArchiveGapError(
                    record.source_id,
                    record.first_sequence,
                    record.last_sequence,
                    len(payloads),
                )
            records, _ = transform_payloads(definition.template, payloads)
            vectors, _ = featurize_records(definition.features, records, state)
            state.mark_committed()
            if index < first:
                continue

            run = PipelineRun(pipeline_id, self.clock.now(), replay=True)
            run.batch_ids.append(record.batch_id)
            responses = score_all(
                signature,
                vectors,
                scored_at=record.scored_at,
                top_k=self.config.run.top_k,
            )
            rows = score_rows(definition, record.batch_id, responses)
            services.store.put_replay_scores(rows)
            run.count("payloads", len(payloads))
            run.count("records", len(records))
            run.count("vectors", len(vectors))
            run.count("scores", len(rows))
            run.outcome = RunOutcome.COMMITTED if rows else RunOutcome.EMPTY
            run.finished_at = self.clock.now()
            runs.append(run)

        services.audit.record(
            "replay",
            pipeline=pipeline_id,
            from_batch=batch_ids[first],
            to_batch=batch_ids[last],
            model_id=signature.model_id,
            version=signature.version,
            batches=len(runs),
        )
        logger.info(
            "Replayed %s batches of %s",
            len(runs),
            pipeline_id,
            extra=log_extra(
                pipeline_id,
                "replay",
                from_batch=batch_ids[first],
                to_batch=batch_ids[last],
                version=signature.version,
            ),
        )
        return runs

    def promote(self, model_id: str, version: int) -> bool:
        """
        Makes `version` the version live pipelines score with. Returns False
        when it already is.
        """
        registry = self.services.registry
        registry.get(model_id, version)
        previous = registry.current_version(model_id)
        if previous == version:
            logger.info(
                "Model %s v%s is already live",
                model_id,
                version,
                extra=log_extra(stage="promote", model_id=model_id, version=version),
            )
            return False

        required = self.config.run.promotion_min_silent_scores
        found = self.services.store.count_scores(
            model_id, version, DeploymentMode.SILENT
        )
        if found < required:
            raise InsufficientSilentHistoryError(model_id, version, found, required)

        registry.set_current(model_id, version)
        self.services.audit.record(
            "model_promoted",
            model_id=model_id,
            version=version,
            previous=previous,
            silent_scores=found,
        )
        return True

    def retrain(
        self,
        model_id: str,
        outcomes: Mapping[str, int],
        hyper: Optional[Hyperparameters] = None,
    ) -> ModelSignature:
        """
        Fits a new silent version of a model on the latest stored feature
        vector of every patient with a known outcome, and registers it with the
        baseline statistics of its training data.
        """
        registry = self.services.registry
        base = registry.latest(model_id)
        if base is None:
            raise UnknownModelError(model_id)
        vectors = self.services.store.latest_features(model_id)
        dataset = [
            (vectors[patient_id], int(outcome))
            for patient_id, outcome in sorted(outcomes.items())
            if patient_id in vectors
        ]
        hyper = hyper or Hyperparameters()
        signature = retrain(
            model_id,
            dataset,
            hyper,
            base=base,
            version=registry.next_version(model_id),
            created_at=self.clock.now(),
        )
        registry.register(signature)
        X, _ = design_matrix(dataset, signature.features)
        baselines_path = registry.register_baselines(
            model_id, signature.version, build_baselines(X, signature.features)
        )
        self.services.audit.record(
            "model_retrained",
            model_id=model_id,
            version=signature.version,
            base_version=base.version,
            samples=len(dataset),
            learning_rate=hyper.learning_rate,
            epochs=hyper.epochs,
            l2=hyper.l2,
            baselines=baselines_path.name,
        )
        return signature
