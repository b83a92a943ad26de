"""
Execution of one pipeline cycle: fetch, archive, transform, featurize, score,
persist, checkpoint and deliver, batch after batch.
"""

import asyncio
import time
from collections import Counter
from contextlib import contextmanager, suppress
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

from isthmus.common.types import DeploymentMode
from isthmus.config.models import (
    AlertSpec,
    PipelineSpec,
    PlatformConfig,
    RunSpec,
    SourceSpec,
)
from isthmus.featurize.engine import FeatureVector, featurize
from isthmus.featurize.exceptions import FeatureRejected
from isthmus.featurize.locf import LocfState
from isthmus.featurize.spec import FeatureSpec, load_feature_spec
from isthmus.ingest.payloads import Batch, RawPayload
from isthmus.monitor.alerts import AlertKind
from isthmus.monitor.logs import get_logger, log_extra
from isthmus.monitor.metrics import (
    COERCION_WARNINGS,
    COMMITTED_RUNS,
    DELIVERED,
    DUPLICATES,
    FAILED_RUNS,
    FETCHED,
    QUARANTINED,
    RETRIES,
    SCORED,
)
from isthmus.scoring.scorer import ScoreResponse, score_all
from isthmus.scoring.signature import ModelSignature, read_signature
from isthmus.store.models import BatchRecord, ScoreRow
from isthmus.transform.aggregation import PatientRecord, aggregate
from isthmus.transform.templates import (
    Template,
    TemplateOutput,
    apply_template,
    load_template,
)

from .feed import SourceFeed
from .runs import PipelineRun, RunOutcome, Stage, StageHook
from .services import EngineServices

logger = get_logger("orchestrator")


@dataclass(frozen=True)
class PipelineDefinition:
    """A pipeline with its source and its loaded artifacts."""

    spec: PipelineSpec
    source: SourceSpec
    template: Template
    features: FeatureSpec
    signature: ModelSignature

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def mode(self) -> DeploymentMode:
        return self.spec.mode

    @property
    def live(self) -> bool:
        return self.spec.mode is DeploymentMode.LIVE


def load_definition(
    config: PlatformConfig, pipeline: PipelineSpec
) -> PipelineDefinition:
    source = config.get_source(pipeline.source_id)
    assert source is not None
    return PipelineDefinition(
        pipeline,
        source,
        load_template(pipeline.template_path),
        load_feature_spec(pipeline.feature_spec_path),
        read_signature(pipeline.model_signature_path),
    )


def transform_payloads(
    template: Template, payloads: Sequence[RawPayload]
) -> Tuple[List[PatientRecord], TemplateOutput]:
    output = TemplateOutput()
    for payload in payloads:
        output.extend(apply_template(template, payload))
    return aggregate(output.records), output


def featurize_records(
    spec: FeatureSpec,
    records: Sequence[PatientRecord],
    state: LocfState,
    counters: Optional[Counter] = None,
) -> Tuple[List[FeatureVector], List[Tuple[PatientRecord, FeatureRejected]]]:
    vectors = []
    rejected = []
    for record in records:
        try:
            vectors.append(featurize(spec, record, state, counters))
        except FeatureRejected as rejection:
            rejected.append((record, rejection))
    return vectors, rejected


def score_rows(
    definition: PipelineDefinition,
    batch_id: str,
    responses: Sequence[ScoreResponse],
) -> List[ScoreRow]:
    return [
        ScoreRow(definition.id, definition.mode, batch_id, response)
        for response in responses
    ]


class PipelineRunner:
    """
    Runs the cycles of one pipeline. Stage errors end the cycle as a failed run
    with an alert; the checkpoint of the failing batch is left untouched.
    """

    def __init__(
        self,
        definition: PipelineDefinition,
        services: EngineServices,
        *,
        feed: SourceFeed,
        run_spec: RunSpec,
        alert_spec: AlertSpec,
        stage_hook: Optional[StageHook] = None,
    ) -> None:
        self.definition = definition
        self.services = services
        self.feed = feed
        self.run_spec = run_spec
        self.alert_spec = alert_spec
        self.stage_hook = stage_hook

    @property
    def pipeline_id(self) -> str:
        return self.definition.id

    def _completed(self, run: PipelineRun, stage: Stage, elapsed: float) -> None:
        run.add_timing(stage, elapsed)
        if self.stage_hook is not None:
            self.stage_hook(self.pipeline_id, stage)

    @contextmanager
    def _stage(self, run: PipelineRun, stage: Stage) -> Iterator[None]:
        started = time.perf_counter()
        yield
        self._completed(run, stage, (time.perf_counter() - started) * 1000)

    async def run_cycle(self) -> PipelineRun:
        services = self.services
        run = PipelineRun(self.pipeline_id, services.clock.now())
        started = time.perf_counter()
        try:
            await self._run(run)
        except Exception as error:
            run.outcome = RunOutcome.FAILED
            run.error = f"{type(error).__name__}: {error}"
            logger.error(
                "Cycle of %s failed: %s",
                self.pipeline_id,
                run.error,
                extra=log_extra(
                    self.pipeline_id, "cycle", batch_ids=run.batch_ids, error=run.error
                ),
            )
            services.alerts.raise_alert(
                AlertKind.PIPELINE_FAILURE, self.pipeline_id, run.error
            )
            with suppress(Exception):
                services.store.increment_metrics(self.pipeline_id, {FAILED_RUNS: 1})
        else:
            if run.outcome is RunOutcome.COMMITTED:
                services.store.increment_metrics(self.pipeline_id, {COMMITTED_RUNS: 1})
        finally:
            run.wall_time = (time.perf_counter() - started) * 1000
            run.finished_at = services.clock.now()

        logger.info(
            "Cycle of %s ended %s in %.1f ms",
            self.pipeline_id,
            run.outcome.value,
            run.wall_time,
            extra=log_extra(self.pipeline_id, "cycle", run=run.to_dict()),
        )
        return run

    async def _pull(self, run: PipelineRun) -> None:
        report = await self.feed.pull()
        self._completed(run, Stage.FETCH, report.fetch_ms)
        self._completed(run, Stage.ARCHIVE, report.archive_ms)
        run.count("retries", report.retries)
        run.count("quarantined", report.unsequenced)
        if report.retries or report.unsequenced:
            self.services.store.increment_metrics(
                self.pipeline_id,
                {RETRIES: report.retries, QUARANTINED: report.unsequenced},
            )

    async def _run(self, run: PipelineRun) -> None:
        services = self.services
        definition = self.definition
        checkpoint = services.store.read_checkpoint(self.pipeline_id)
        state = services.store.load_locf(self.pipeline_id)
        signature = services.registry.resolve(definition.signature, definition.mode)

        await self._pull(run)

        queue: "asyncio.Queue[Optional[Batch]]" = asyncio.Queue(
            self.run_spec.queue_size
        )
        after = checkpoint.last_sequence if checkpoint else 0
        producer = asyncio.ensure_future(self.feed.produce(after, queue))
        try:
            while True:
                batch = await queue.get()
                if batch is None:
                    break
                self._process(run, batch, state, signature)
            # archive read errors surface here
            await producer
        finally:
            if not producer.done():
                producer.cancel()
                with suppress(asyncio.CancelledError):
                    await producer

        if definition.live:
            await self._deliver(run)
        if run.batch_ids:
            run.outcome = RunOutcome.COMMITTED

    def _process(
        self,
        run: PipelineRun,
        batch: Batch,
        state: LocfState,
        signature: ModelSignature,
    ) -> None:
        services = self.services
        definition = self.definition
        pipeline_id = self.pipeline_id
        counters: Counter = Counter()
        counters[FETCHED] += len(batch.payloads) + len(batch.quarantined)
        counters[QUARANTINED] += len(batch.quarantined)
        run.count("payloads", len(batch.payloads))

        with self._stage(run, Stage.TRANSFORM):
            records, output = transform_payloads(definition.template, batch.payloads)
            for rejected in output.rejected:
                services.quarantine.put(
                    batch.source_id,
                    stage=Stage.TRANSFORM.value,
                    reason=rejected.reason,
                    raw=(
                        rejected.entity
                        if rejected.entity is not None
                        else rejected.payload.body
                    ),
                    at=rejected.payload.fetched_at,
                    sequence=rejected.payload.sequence,
                    pipeline=pipeline_id,
                )
            counters[QUARANTINED] += len(output.rejected)
            counters[COERCION_WARNINGS] += output.coercion_warnings
            self._check_coercions(output)
            self._check_naive_timestamps(batch, output)
        run.count("records", len(records))

        with self._stage(run, Stage.FEATURIZE):
            vectors, rejected_records = featurize_records(
                definition.features, records, state, counters
            )
            for record, rejection in rejected_records:
                services.quarantine.put(
                    batch.source_id,
                    stage=Stage.FEATURIZE.value,
                    reason=str(rejection),
                    raw={"patient_id": record.patient_id, "fields": record.fields},
                    at=record.as_of or services.clock.now(),
                    sequence=record.sources[-1].sequence if record.sources else None,
                    pipeline=pipeline_id,
                )
            counters[QUARANTINED] += len(rejected_records)
        run.count("vectors", len(vectors))
        run.count(
            "quarantined",
            len(batch.quarantined) + len(output.rejected) + len(rejected_records),
        )

        with self._stage(run, Stage.SCORE):
            scored_at = services.clock.now()
            responses = score_all(
                signature, vectors, scored_at=scored_at, top_k=self.run_spec.top_k
            )
            rows = score_rows(definition, batch.batch_id, responses)

        with self._stage(run, Stage.PERSIST):
            inserted = services.store.put_scores(
                rows, sink=definition.spec.sink if definition.live else None
            )
        counters[SCORED] += inserted
        counters[DUPLICATES] += len(rows) - inserted
        run.count("scores", inserted)
        run.count("duplicates", len(rows) - inserted)

        committed_at = services.clock.now()
        with self._stage(run, Stage.CHECKPOINT):
            services.store.commit_checkpoint(
                pipeline_id,
                batch.batch_id,
                last_sequence=batch.last_sequence,
                committed_at=committed_at,
                batch=BatchRecord(
                    pipeline=pipeline_id,
                    batch_id=batch.batch_id,
                    source_id=batch.source_id,
                    first_sequence=batch.first_sequence,
                    last_sequence=batch.last_sequence,
                    scored_at=scored_at,
                    committed_at=committed_at,
                    payloads=len(batch.payloads),
                    quarantined=len(batch.quarantined),
                    scores=len(rows),
                ),
                locf_updates=state.changes(),
                metrics=counters,
            )
        state.mark_committed()
        run.batch_ids.append(batch.batch_id)

        logger.debug(
            "Committed batch %s",
            batch.batch_id,
            extra=log_extra(
                pipeline_id,
                "checkpoint",
                batch_id=batch.batch_id,
                last_sequence=batch.last_sequence,
                model_id=signature.model_id,
                version=signature.version,
            ),
        )

    def _check_naive_timestamps(self, batch: Batch, output: TemplateOutput) -> None:
        warned = self.services.naive_warned
        if not output.naive_timestamps or batch.source_id in warned:
            return
        warned.add(batch.source_id)
        logger.warning(
            "Timestamps of %s carry no zone; they are read as UTC",
            batch.source_id,
            extra=log_extra(
                self.pipeline_id,
                "transform",
                source_id=batch.source_id,
                batch_id=batch.batch_id,
                naive_timestamps=output.naive_timestamps,
            ),
        )

    def _check_coercions(self, output: TemplateOutput) -> None:
        if not output.extracted:
            return
        ratio = output.coercion_warnings / output.extracted
        if ratio > self.alert_spec.coercion_surge_ratio:
            self.services.alerts.raise_alert(
                AlertKind.COERCION_SURGE,
                self.pipeline_id,
                f"coercion warnings above {self.alert_spec.coercion_surge_ratio:g} "
                "of extracted values",
            )

    async def _deliver(self, run: PipelineRun) -> None:
        with self._stage(run, Stage.DELIVER):
            report = await self.services.sink.deliver(self.pipeline_id)
        if report.delivered:
            run.count("delivered", report.delivered)
            self.services.store.increment_metrics(
                self.pipeline_id, {DELIVERED: report.delivered}
            )
