from collections import Counter
from typing import List, Optional, Sequence

UNKNOWN_CATEGORIES = "unknown_categories"


def one_hot(
    categories: Sequence[str],
    value: Optional[str],
    warnings: Optional[Counter] = None,
) -> List[int]:
    """
    Encodes a category as a 0/1 vector. Null and unknown values encode as all
    zeros; each unknown value increments `warnings["unknown_categories"]`.
    """
    vector = [0] * len(categories)
    if value is None:
        return vector
    try:
        vector[list(categories).index(value)] = 1
    except ValueError:
        if warnings is not None:
            warnings[UNKNOWN_CATEGORIES] += 1
    return vector
