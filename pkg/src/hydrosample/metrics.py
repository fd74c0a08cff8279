from __future__ import annotations

import math
from typing import Optional

import numpy as np
import numpy.typing as npt

from hydrosample.exception import EvaluationError

POLLUTION_FRACTION = 0.01
FLAT_RTOL = 1e-9


def nrmse(
    reference: npt.ArrayLike,
    estimate: npt.ArrayLike,
    scenario_max: Optional[float] = None,
) -> float:
    """
    Root mean squared error divided by the range of the reference.

    A flat reference has no range: the score is 0 when the estimate never
    deviates from it by 1e-9 of scenario_max or more, +inf otherwise.
    """
    ref = np.asarray(reference, dtype=float).ravel()
    est = np.asarray(estimate, dtype=float).ravel()
    if ref.size == 0:
        raise EvaluationError("nrmse needs at least one sample.")
    if ref.shape != est.shape:
        raise EvaluationError(
            f"nrmse needs series of equal length, got {ref.size} and {est.size}."
        )
    diff = est - ref
    span = float(ref.max() - ref.min())
    if span == 0.0:
        scale = float(np.abs(ref).max()) if scenario_max is None else scenario_max
        deviation = float(np.abs(diff).max())
        if deviation == 0.0 or deviation < FLAT_RTOL * scale:
            return 0.0
        return math.inf
    return float(np.sqrt(np.mean(diff**2)) / span)


def classify_polluted(series: npt.ArrayLike, scenario_max: float) -> bool:
    """
    A junction is polluted when its peak exceeds 1% of the scenario's peak
    concentration.
    """
    if not scenario_max > 0:
        raise EvaluationError(
            f"scenario_max must be positive to classify pollution, got {scenario_max}."
        )
    values = np.asarray(series, dtype=float)
    if values.size == 0:
        return False
    return bool(values.max() > POLLUTION_FRACTION * scenario_max)
