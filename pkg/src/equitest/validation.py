"""Input validation shared by the estimator front ends."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_X_y

from .core import Dataset


def check_dataset(X, y) -> Dataset:
    """Validate ``(X, y)`` and wrap them as a :class:`Dataset`.

    ``X`` must be 2-d; ``y`` may be 1-d (scalar responses) or 2-d.
    """
    X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=np.float64,
                     ensure_min_samples=2)
    return Dataset(X, y)


def check_probability(value, name: str, *, closed_low: bool = True,
                      closed_high: bool = True) -> float:
    value = float(value)
    lo_ok = value >= 0 if closed_low else value > 0
    hi_ok = value <= 1 if closed_high else value < 1
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name} must lie in the unit interval, got {value}")
    return value
