from collections import Counter
from typing import Dict, Iterable, Mapping

FETCHED = "fetched"
QUARANTINED = "quarantined"
SCORED = "scored"
ALERTS = "alerts"
RETRIES = "retries"
COERCION_WARNINGS = "coercion_warnings"
UNKNOWN_CATEGORIES = "unknown_categories"
DELIVERED = "delivered"
DUPLICATES = "duplicates"
COMMITTED_RUNS = "committed_runs"
FAILED_RUNS = "failed_runs"

STATUS_COLUMNS = (FETCHED, QUARANTINED, SCORED, ALERTS)


def merge(counters: Iterable[Mapping[str, int]]) -> Counter:
    total: Counter = Counter()
    for item in counters:
        total.update(item)
    return total


def format_status(metrics: Mapping[str, Mapping[str, int]]) -> str:
    """Renders per-pipeline counters as an aligned text table."""
    names = list(STATUS_COLUMNS) + sorted(
        {name for values in metrics.values() for name in values} - set(STATUS_COLUMNS)
    )
    header = ["pipeline"] + names
    rows = [
        [pipeline] + [str(metrics[pipeline].get(name, 0)) for name in names]
        for pipeline in sorted(metrics)
    ]
    widths = [
        max(len(line[index]) for line in [header] + rows)
        for index in range(len(header))
    ]
    lines = []
    for line in [header] + rows:
        cells = [value.ljust(width) for value, width in zip(line, widths)]
        lines.append("  ".join(cells))
    return "\n".join(item.rstrip() for item in lines)


def status_document(
    metrics: Mapping[str, Mapping[str, int]]
) -> Dict[str, Dict[str, int]]:
    document = {}
    for pipeline in sorted(metrics):
        values = {name: 0 for name in STATUS_COLUMNS}
        values.update({name: int(value) for name, value in metrics[pipeline].items()})
        document[pipeline] = values
    return document
