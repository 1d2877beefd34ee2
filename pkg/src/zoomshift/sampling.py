"""Class-frequency weighted sampling."""
from __future__ import annotations

from collections import Counter
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateLabels


def weighted_sampler_weights(
    labels: Sequence, classes: Optional[Sequence] = None
) -> np.ndarray:
    """Per-sample weight 1 / count(class of sample).

    Drawing with replacement proportionally to these weights yields equal
    expected per-class frequency; the weights of each class sum to 1.
    """
    if len(labels) == 0:
        raise DegenerateLabels("empty label list")
    counts = Counter(labels)
    if classes is not None:
        missing = [c for c in classes if counts.get(c, 0) == 0]
        if missing:
            raise DegenerateLabels(f"no samples for classes: {missing}")
    return np.asarray([1.0 / counts[label] for label in labels], dtype=np.float64)
