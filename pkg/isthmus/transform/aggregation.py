from dataclasses import dataclass, field
from datetime import datetime
from itertools import groupby
from typing import Any, Dict, Iterable, List

from isthmus.common.types import SourceRef

from .templates import PartialRecord


@dataclass
class PatientRecord:
    patient_id: str
    fields: Dict[str, Any]
    sources: List[SourceRef] = field(default_factory=list)
    as_of: datetime = None  # type: ignore

    def lineage(self) -> List[List[Any]]:
        return [source.to_list() for source in self.sources]


def aggregate(records: Iterable[PartialRecord]) -> List[PatientRecord]:
    """
    Merges partial records per patient: the record with the later sequence wins
    per field, and null never overwrites a value. Output is sorted by patient id.
    """
    ordered = sorted(
        records, key=lambda record: (record.patient_id, record.source.sequence)
    )
    patients = []
    for patient_id, group in groupby(ordered, key=lambda record: record.patient_id):
        merged: Dict[str, Any] = {}
        sources: List[SourceRef] = []
        as_of = None
        for record in group:
            for name, value in record.fields.items():
                if value is not None or name not in merged:
                    merged[name] = value
            if record.source not in sources:
                sources.append(record.source)
            if as_of is None or record.fetched_at > as_of:
                as_of = record.fetched_at
        patients.append(PatientRecord(patient_id, merged, sources, as_of))
    return patients
