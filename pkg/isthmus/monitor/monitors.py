from datetime import datetime
from typing import TYPE_CHECKING, Dict, List, Optional

from isthmus.config.models import AlertSpec, SourceSpec
from isthmus.featurize.spec import FeatureSpec
from isthmus.utils.time import Clock

from .alerts import Alert, AlertKind, AlertService
from .drift import DriftReport, drift_report
from .logs import get_logger, log_extra

if TYPE_CHECKING:
    from isthmus.store.abc import ScoreStore

logger = get_logger("monitor")


class MissingDataMonitor:
    """
    Tracks payload arrivals per source and raises `missing_data` when a source
    stays silent for more than twice its cadence.
    """

    def __init__(self, alerts: AlertService, clock: Clock) -> None:
        self.alerts = alerts
        self.clock = clock
        self._started = clock.now()
        self._arrivals: Dict[str, datetime] = {}
        self._missing: Dict[str, bool] = {}

    def last_arrival(self, source_id: str) -> Optional[datetime]:
        return self._arrivals.get(source_id)

    def observe(self, source_id: str, at: Optional[datetime] = None) -> None:
        at = at or self.clock.now()
        self._arrivals[source_id] = at
        if self._missing.pop(source_id, False):
            logger.info(
                "Source %s delivers data again",
                source_id,
                extra=log_extra(stage="monitor", source_id=source_id),
            )
            self.alerts.reset(AlertKind.MISSING_DATA, source_id)

    def check_missing_data(
        self,
        source: SourceSpec,
        now: Optional[datetime] = None,
        *,
        cadence: Optional[float] = None,
    ) -> Optional[Alert]:
        expected = source.cadence or cadence
        if not expected:
            return None
        now = now or self.clock.now()
        last = self._arrivals.get(source.id, self._started)
        if (now - last).total_seconds() <= 2 * expected:
            return None

        self._missing[source.id] = True
        logger.error(
            "No payload from %s since %s",
            source.id,
            last.isoformat(),
            extra=log_extra(stage="monitor", source_id=source.id, cadence=expected),
        )
        return self.alerts.raise_alert(
            AlertKind.MISSING_DATA,
            source.id,
            f"no payload from source {source.id} within {2 * expected:g} s",
        )


class DriftMonitor:
    """
    Compares the observed (non-imputed) values of the last committed scores
    with the baseline bins of each feature.
    """

    def __init__(
        self, store: "ScoreStore", alerts: AlertService, spec: AlertSpec
    ) -> None:
        self.store = store
        self.alerts = alerts
        self.spec = spec

    def evaluate(
        self, pipeline_id: str, feature_spec: FeatureSpec
    ) -> List[DriftReport]:
        documents = self.store.recent_documents(pipeline_id, self.spec.drift_window)
        reports = []
        for feature in feature_spec.features:
            baseline = feature.baseline
            if (
                feature.encoding is not None
                or baseline is None
                or not baseline.has_bins
            ):
                continue
            values = [
                document["features"][feature.name]
                for document in documents
                if feature.name in document["features"]
                and feature.name not in document["imputed_flags"]
            ]
            report = drift_report(
                feature.name,
                values,
                baseline.bin_edges or [],
                baseline.proportions or [],
                self.spec.drift_threshold,
            )
            reports.append(report)
            if report.flagged:
                logger.error(
                    "Drift detected on %s: PSI %.4f",
                    feature.name,
                    report.psi,
                    extra=log_extra(pipeline_id, "drift", **report.to_dict()),
                )
                self.alerts.raise_alert(
                    AlertKind.DRIFT_DETECTED,
                    pipeline_id,
                    f"feature {feature.name} PSI above {self.spec.drift_threshold:g}",
                )
        return reports
