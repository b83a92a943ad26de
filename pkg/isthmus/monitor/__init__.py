"""
Structured logs, metrics, drift detection and alerting.
"""

from .drift import DriftReport, bin_proportions, drift_report, psi
from .logs import configure_logging, get_logger, log_extra
from .alerts import Alert, AlertKind, AlertService, DeliveryResult  # isort: skip
from .monitors import DriftMonitor, MissingDataMonitor  # isort: skip

__all__ = [
    "Alert",
    "AlertKind",
    "AlertService",
    "DeliveryResult",
    "DriftMonitor",
    "DriftReport",
    "MissingDataMonitor",
    "bin_proportions",
    "configure_logging",
    "drift_report",
    "get_logger",
    "log_extra",
    "psi",
]
