"""Pollutant sub-indices, overall IAQI, humidex and the enhanced index (EIAQI)."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .core import (
    BreakpointTable,
    ChannelKind,
    DomainError,
    HealthCategory,
    Orientation,
    UsageError,
    categorize,
)

__all__ = [
    "OVERALL",
    "IndexValue",
    "HumidexRating",
    "Humidex",
    "EiaqiWeights",
    "WeightageScheme",
    "DEFAULT_WEIGHTAGE",
    "interpolate_index",
    "interpolate_oxygen_index",
    "subindex",
    "overall_iaqi",
    "humidex",
    "eiaqi",
    "weightage_label",
]

OVERALL = "Overall"


@dataclass(frozen=True)
class IndexValue:
    value: float
    channel: Union[ChannelKind, str]
    category: HealthCategory = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "category", categorize(self.value))

    def __float__(self) -> float:
        return float(self.value)


def _bridge(x, x0, x1, y0, y1):
    return y0 + (x - x0) * (y1 - y0) / (x1 - x0)


def interpolate_index(table: BreakpointTable, concentration: float) -> IndexValue:
    """Sub-index of a pollutant by linear interpolation inside its band.

    ``I = I_lo + (C - BP_lo) * (I_hi - I_lo) / (BP_hi - BP_lo)``

    A concentration on a boundary shared by two bands goes to the less
    severe band. Concentrations that fall between the listed ranges of
    two adjacent bands (e.g. 0.2 < C < 0.21 ppm for CO) are bridged
    linearly from the top of one band to the bottom of the next, which keeps
    the index continuous and monotone. Anything above the last band is
    clamped to that band's top index.
    """
    if table.orientation is not Orientation.ASCENDING:
        raise UsageError(f"{table.channel.value} table is not ascending; use interpolate_oxygen_index")
    c = float(concentration)
    if not c >= 0:
        raise DomainError(f"concentration must be non-negative, got {concentration}")
    bands = table.bands
    if c < bands[0].conc_lo:
        # tables loaded from file may not start at zero
        return IndexValue(bands[0].idx_lo, table.channel)
    for i, band in enumerate(bands):
        if band.contains(c):
            if band.conc_hi == band.conc_lo:
                return IndexValue(band.idx_lo, table.channel)
            return IndexValue(_bridge(c, band.conc_lo, band.conc_hi, band.idx_lo, band.idx_hi), table.channel)
        if i + 1 < len(bands) and band.conc_hi < c < bands[i + 1].conc_lo:
            nxt = bands[i + 1]
            return IndexValue(_bridge(c, band.conc_hi, nxt.conc_lo, band.idx_hi, nxt.idx_lo), table.channel)
    return IndexValue(bands[-1].idx_hi, table.channel)


def interpolate_oxygen_index(table: BreakpointTable, percent: float, corrected: bool = False) -> IndexValue:
    """Oxygen sub-index.

    By default this evaluates

        ``I = I_ul - (BP_ul - C) * (I_ll - I_ul) / (BP_ll - BP_ul)``

    with ``BP_ul``/``I_ul`` the upper concentration bound of the band and its
    upper index (19.7347 % -> 69.9475).
    Within a band the result therefore rises with oxygen level. Pass
    ``corrected=True`` to reverse the orientation so that less oxygen gives a
    higher index inside every band.

    Levels above the top of the first band (20.95 %) give index 0.
    """
    if table.orientation is not Orientation.DESCENDING_CONCENTRATION:
        raise UsageError(f"{table.channel.value} table is ascending; use interpolate_index")
    c = float(percent)
    if not 0 < c <= 100:
        raise DomainError(f"oxygen level must lie in (0, 100] %, got {percent}")
    if c > table.bands[0].conc_hi:
        return IndexValue(0.0, table.channel)
    for band in table.bands:
        if band.contains(c):
            bp_ul, bp_ll, i_ul, i_ll = band.conc_hi, band.conc_lo, band.idx_hi, band.idx_lo
            if bp_ul == bp_ll:
                return IndexValue(i_ll, table.channel)
            slope = (i_ll - i_ul) / (bp_ll - bp_ul)
            if corrected:
                value = i_ll + (bp_ul - c) * slope
            else:
                value = i_ul - (bp_ul - c) * slope
            return IndexValue(value, table.channel)
    raise DomainError(f"oxygen level {c} % is not covered by any band")


def subindex(table: BreakpointTable, concentration: float, corrected_oxygen: bool = False) -> IndexValue:
    """Dispatch on table orientation."""
    if table.orientation is Orientation.DESCENDING_CONCENTRATION:
        return interpolate_oxygen_index(table, concentration, corrected_oxygen)
    return interpolate_index(table, concentration)


def overall_iaqi(subindices: Sequence[IndexValue | float], mode: str = "max") -> IndexValue:
    """Combine per-pollutant sub-indices into one IAQI (``max`` or ``mean``)."""
    vals = [float(s) for s in subindices]
    if not vals:
        raise DomainError("overall IAQI needs at least one sub-index")
    if mode == "max":
        return IndexValue(max(vals), OVERALL)
    if mode == "mean":
        return IndexValue(float(np.mean(vals)), OVERALL)
    raise DomainError(f"unknown aggregation mode {mode!r} (expected 'max' or 'mean')")


class HumidexRating(enum.Enum):
    # (lower edge of the half-open range, label, severity rank)
    COMFORT = (float("-inf"), "Comfort", 0)
    NO_COMFORT = (30.0, "No Comfort", 1)
    SOME_DISCOMFORT = (40.0, "Some Discomfort", 2)
    GREAT_DISCOMFORT = (46.0, "Great Discomfort", 3)
    DANGEROUS = (55.0, "Dangerous", 4)
    HEAT_STROKE = (61.0, "Heat Stroke", 5)

    def __init__(self, lo, label, rank):
        self.lo = lo
        self.label = label
        self.rank = rank

    @classmethod
    def of(cls, h: float) -> "HumidexRating":
        rating = cls.COMFORT
        for member in cls:
            if h >= member.lo:
                rating = member
        return rating

    @classmethod
    def parse(cls, text: str) -> "HumidexRating":
        key = text.strip().lower().replace("_", " ")
        for member in cls:
            if key in (member.label.lower(), member.name.lower().replace("_", " ")):
                return member
        raise DomainError(f"unknown humidex rating {text!r}")


@dataclass(frozen=True)
class Humidex:
    value: float
    rating: HumidexRating = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rating", HumidexRating.of(self.value))

    def __float__(self) -> float:
        return float(self.value)


def humidex(temperature: float, rh: float) -> Humidex:
    """Humidex from air temperature (°C) and relative humidity (%).

    ``h = T + 5/9 * (6.112 * 10**(7.5 T / (237.7 + T)) * RH/100 - 10)``
    """
    t = float(temperature)
    rh = float(rh)
    if not 0 <= rh <= 100:
        raise DomainError(f"relative humidity must lie in [0, 100] %, got {rh}")
    if not -40 <= t <= 60:
        raise DomainError(f"temperature must lie in [-40, 60] °C, got {t}")
    vapour = 6.112 * 10 ** (7.5 * t / (237.7 + t)) * rh / 100.0
    return Humidex(t + 5.0 / 9.0 * (vapour - 10.0))


@dataclass(frozen=True)
class EiaqiWeights:
    w_h: float = 1.0
    w_iaqi: float = 1.0

    @property
    def w_total(self) -> float:
        return self.w_h + self.w_iaqi


def eiaqi(iaqi: IndexValue | float, h: Humidex | float, w: EiaqiWeights = EiaqiWeights()) -> float:
    """Weighted blend ``w_h * h + w_iaqi * IAQI``."""
    return w.w_h * float(h) + w.w_iaqi * float(iaqi)


def _default_category_weights():
    return {cat: max(3 - cat.rank, -2) for cat in HealthCategory}


def _default_rating_weights():
    return {r: max(3 - r.rank, -2) for r in HumidexRating}


# (minimum total weight, label), most favourable first
_DEFAULT_LABELS = (
    (6, "Best"),
    (5, "Better"),
    (4, "Good"),
    (2, "Moderate"),
    (0, "Poor"),
    (-2, "Unhealthy"),
    (float("-inf"), "Hazardous"),
)


@dataclass(frozen=True)
class WeightageScheme:
    """Integer weights per category/rating and the label bands for their sum."""

    category_weights: Mapping[HealthCategory, int] = field(default_factory=_default_category_weights)
    rating_weights: Mapping[HumidexRating, int] = field(default_factory=_default_rating_weights)
    labels: tuple[tuple[float, str], ...] = _DEFAULT_LABELS

    def __post_init__(self):
        for w in list(self.category_weights.values()) + list(self.rating_weights.values()):
            if not -2 <= w <= 3:
                raise DomainError(f"weightage {w} outside [-2, 3]")
        thresholds = [t for t, _ in self.labels]
        if thresholds != sorted(thresholds, reverse=True):
            raise DomainError("label thresholds must be in decreasing order")

    def label_for(self, total: float) -> str:
        for threshold, label in self.labels:
            if total >= threshold:
                return label
        return self.labels[-1][1]


DEFAULT_WEIGHTAGE = WeightageScheme()


def weightage_label(
    iaqi_category: HealthCategory,
    humidex_rating: HumidexRating,
    scheme: WeightageScheme = DEFAULT_WEIGHTAGE,
) -> tuple[int, str]:
    """Categorical EIAQI: sum the two integer weights and label the room.

    >>> weightage_label(HealthCategory.GOOD, HumidexRating.NO_COMFORT)
    (5, 'Better')
    """
    total = scheme.category_weights[iaqi_category] + scheme.rating_weights[humidex_rating]
    return int(total), scheme.label_for(total)
