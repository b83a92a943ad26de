from typing import Any, Dict, Mapping, Optional, Tuple

LocfKey = Tuple[str, str]


class LocfState:
    """
    Last observed value of every (patient, feature) of one pipeline. Only
    observed values are recorded; imputations never feed back.
    """

    def __init__(self, values: Optional[Mapping[LocfKey, Any]] = None) -> None:
        self._values: Dict[LocfKey, Any] = dict(values or {})
        self._changes: Dict[LocfKey, Any] = {}

    def __len__(self) -> int:
        return len(self._values)

    def get(self, patient_id: str, feature: str) -> Any:
        return self._values.get((patient_id, feature))

    def observe(self, patient_id: str, feature: str, value: Any) -> None:
        key = (patient_id, feature)
        self._values[key] = value
        self._changes[key] = value

    def changes(self) -> Dict[LocfKey, Any]:
        """Values observed since this instance was created or last committed."""
        return dict(self._changes)

    def mark_committed(self) -> None:
        self._changes.clear()

    def snapshot(self) -> Dict[LocfKey, Any]:
        return dict(self._values)
