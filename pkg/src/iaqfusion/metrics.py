"""Prediction-quality statistics: MAPE, RMSE and R²."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, TimeSeries

__all__ = ["MetricsReport", "evaluate", "mape", "rmse", "r2"]


@dataclass(frozen=True)
class MetricsReport:
    mape: float  # percent
    rmse: float
    r2: float

    def as_row(self) -> tuple[float, float, float]:
        return (self.mape, self.rmse, self.r2)


def _pair(y_r, y_m):
    a = np.asarray(y_r.values if isinstance(y_r, TimeSeries) else y_r, dtype=float).ravel()
    b = np.asarray(y_m.values if isinstance(y_m, TimeSeries) else y_m, dtype=float).ravel()
    if a.size != b.size:
        raise DomainError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise DomainError("empty series")
    if np.isnan(a).any() or np.isnan(b).any():
        raise DomainError("series contain gaps")
    return a, b


def mape(y_r, y_m) -> float:
    """Mean absolute percentage error relative to the observed series ``y_r``."""
    a, b = _pair(y_r, y_m)
    zero = np.flatnonzero(a == 0)
    if zero.size:
        raise DomainError(f"MAPE undefined: observed value is zero at sample {int(zero[0])}")
    return float(100.0 / a.size * np.sum(np.abs(a - b) / np.abs(a)))


def rmse(y_r, y_m) -> float:
    a, b = _pair(y_r, y_m)
    d = a - b
    return math.sqrt(float(d @ d) / d.size)


def r2(y_r, y_m, centered: bool = False) -> float:
    """Coefficient of determination.

    The default divides the squared residuals by the uncentred sum of
    squared forecasts, ``1 - sum (y_m - y_r)^2 / sum y_m^2``. With
    ``centered=True`` the textbook ``1 - SS_res / SS_tot`` around the mean of
    ``y_r`` is returned instead.
    """
    a, b = _pair(y_r, y_m)
    ss_res = float(np.sum((b - a) ** 2))
    denom = float(np.sum((a - a.mean()) ** 2)) if centered else float(np.sum(b ** 2))
    if denom == 0:
        if ss_res == 0:
            return 1.0
        raise DomainError("R² undefined: zero denominator")
    return 1.0 - ss_res / denom


def evaluate(y_r, y_m, centered_r2: bool = False) -> MetricsReport:
    """MAPE, RMSE and R² of a model/forecast ``y_m`` against observations ``y_r``."""
    return MetricsReport(mape(y_r, y_m), rmse(y_r, y_m), r2(y_r, y_m, centered_r2))
