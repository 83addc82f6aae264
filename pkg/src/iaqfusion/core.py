"""Shared vocabulary: channels, health categories, breakpoint tables, time series."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "IaqError",
    "DomainError",
    "UsageError",
    "FormatError",
    "NumericalError",
    "ChannelKind",
    "HealthCategory",
    "Orientation",
    "BreakpointBand",
    "BreakpointTable",
    "TimeSeries",
    "default_breakpoint_tables",
    "load_breakpoint_tables",
    "categorize",
    "round_half_up",
    "CANONICAL_UNITS",
]


class IaqError(Exception):
    """Base class for errors raised by this package."""


class DomainError(IaqError, ValueError):
    """An argument lies outside the domain of the operation."""


class UsageError(IaqError, TypeError):
    """An operation was called with an incompatible object (e.g. wrong table orientation)."""


class FormatError(IaqError, ValueError):
    """Malformed input file."""


class NumericalError(IaqError, ArithmeticError):
    """A numerical procedure failed (singular matrix, divergence, ...)."""


class ChannelKind(str, enum.Enum):
    CO = "CO"
    CO2 = "CO2"
    O2 = "O2"
    H2 = "H2"
    NH3 = "NH3"
    ETHANOL = "Ethanol"
    H2S = "H2S"
    TOLUENE = "Toluene"
    TEMPERATURE = "Temperature"
    HUMIDITY = "Humidity"

    @classmethod
    def parse(cls, text: str) -> "ChannelKind":
        """Case-insensitive lookup by value or member name."""
        key = text.strip()
        for member in cls:
            if key.lower() in (member.value.lower(), member.name.lower()):
                return member
        raise DomainError(f"unknown channel {text!r}")

    @property
    def is_gas(self) -> bool:
        return self not in (ChannelKind.TEMPERATURE, ChannelKind.HUMIDITY)


CANONICAL_UNITS: dict[ChannelKind, str] = {
    kind: ("%" if kind in (ChannelKind.O2, ChannelKind.HUMIDITY) else "ppm")
    for kind in ChannelKind
}
CANONICAL_UNITS[ChannelKind.TEMPERATURE] = "°C"


class HealthCategory(enum.Enum):
    # (severity rank, lowest integer index, highest integer index, label, colour)
    GOOD = (0, 0, 50, "Good", "green")
    MODERATE = (1, 51, 100, "Moderate", "yellow")
    UNHEALTHY_SENSITIVE = (2, 101, 150, "Unhealthy for Sensitive Groups", "orange")
    UNHEALTHY = (3, 151, 200, "Unhealthy", "red")
    VERY_UNHEALTHY = (4, 201, 300, "Very Unhealthy", "purple")
    HAZARDOUS = (5, 301, 400, "Hazardous", "maroon")

    def __init__(self, rank, lo, hi, label, color):
        self.rank = rank
        self.lo = lo
        self.hi = hi
        self.label = label
        self.color = color

    @classmethod
    def parse(cls, text: str) -> "HealthCategory":
        key = text.strip().lower().replace("_", " ")
        for member in cls:
            if key in (member.label.lower(), member.name.lower().replace("_", " ")):
                return member
        if key in ("unhealthy sensitive", "unhealthy for sensitive"):
            return cls.UNHEALTHY_SENSITIVE
        raise DomainError(f"unknown health category {text!r}")


class Orientation(enum.Enum):
    ASCENDING = "ascending"
    DESCENDING_CONCENTRATION = "descending"


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def categorize(index: float) -> HealthCategory:
    """Health category of an index value.

    The value is rounded half-up to an integer first; anything above 400
    is reported as Hazardous.
    """
    if not index >= 0:  # also rejects NaN
        raise DomainError(f"index must be non-negative, got {index}")
    rounded = round_half_up(index)
    for cat in HealthCategory:
        if rounded <= cat.hi:
            return cat
    return HealthCategory.HAZARDOUS


@dataclass(frozen=True)
class BreakpointBand:
    conc_lo: float
    conc_hi: float
    idx_lo: float
    idx_hi: float
    category: HealthCategory
    # an open lower edge excludes conc_lo itself (used by the O2 "Good" band)
    lo_open: bool = False

    def __post_init__(self):
        if not self.conc_lo <= self.conc_hi:
            raise DomainError(f"band concentration bounds out of order: {self}")
        if not self.idx_lo < self.idx_hi:
            raise DomainError(f"band index bounds out of order: {self}")

    def contains(self, c: float) -> bool:
        if self.lo_open:
            return self.conc_lo < c <= self.conc_hi
        return self.conc_lo <= c <= self.conc_hi


@dataclass(frozen=True)
class BreakpointTable:
    channel: ChannelKind
    bands: tuple[BreakpointBand, ...]
    orientation: Orientation = Orientation.ASCENDING

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(self.bands))
        if not self.bands:
            raise DomainError("breakpoint table needs at least one band")
        b = self.bands
        for prev, nxt in zip(b, b[1:]):
            if nxt.idx_lo <= prev.idx_hi:
                raise DomainError(f"{self.channel.value}: index bands overlap or are unsorted")
            if self.orientation is Orientation.ASCENDING:
                if not (nxt.conc_lo > prev.conc_lo and nxt.conc_lo >= prev.conc_hi):
                    raise DomainError(f"{self.channel.value}: concentration bands unsorted or overlapping")
            else:
                if not (nxt.conc_lo < prev.conc_lo and nxt.conc_hi <= prev.conc_lo):
                    raise DomainError(f"{self.channel.value}: concentration bands unsorted or overlapping")

    def __getitem__(self, i: int) -> BreakpointBand:
        return self.bands[i]

    def __len__(self) -> int:
        return len(self.bands)


def _ascending(channel, rows):
    cats = list(HealthCategory)
    bands = [
        BreakpointBand(lo, hi, cats[i].lo, cats[i].hi, cats[i])
        for i, (lo, hi) in enumerate(rows)
    ]
    return BreakpointTable(channel, tuple(bands), Orientation.ASCENDING)


# Concentration columns of the indoor index table (ppm, O2 in %).
_ASCENDING_ROWS: dict[ChannelKind, list[tuple[float, float]]] = {
    ChannelKind.CO: [(0, 0.2), (0.21, 2), (2.1, 9), (9.1, 15.4), (15.5, 30.4), (30.5, 50.4)],
    ChannelKind.CO2: [(0, 379), (380, 450), (451, 1000), (1001, 5000), (5001, 30000), (30001, 40000)],
    ChannelKind.H2: [(0, 1), (1.1, 2), (2.1, 3), (3.1, 5), (5.1, 8), (8.1, 10)],
    ChannelKind.NH3: [(0, 24), (25, 30), (31, 50), (51, 100), (101, 400), (401, 500)],
    ChannelKind.ETHANOL: [(0, 0.49), (0.5, 10), (11, 49), (50, 100), (101, 700), (701, 1000)],
    ChannelKind.H2S: [(0, 0.00033), (0.00034, 1.5), (1.6, 5), (6, 20), (21, 50), (51, 100)],
    ChannelKind.TOLUENE: [(0, 0.0247), (0.0248, 0.6), (0.7, 1.6), (1.7, 9.8), (9.9, 12.2), (12.3, 100)],
}


def _oxygen_table() -> BreakpointTable:
    c = HealthCategory
    bands = (
        BreakpointBand(20.9, 20.95, 0, 50, c.GOOD, lo_open=True),
        BreakpointBand(19, 20.9, 51, 100, c.MODERATE),
        BreakpointBand(15, 19, 101, 150, c.UNHEALTHY_SENSITIVE),
        BreakpointBand(12, 15, 151, 200, c.UNHEALTHY),
        BreakpointBand(10, 12, 201, 300, c.VERY_UNHEALTHY),
        BreakpointBand(0, 10, 301, 400, c.HAZARDOUS),
    )
    return BreakpointTable(ChannelKind.O2, bands, Orientation.DESCENDING_CONCENTRATION)


def default_breakpoint_tables() -> dict[ChannelKind, BreakpointTable]:
    """Built-in indoor breakpoint tables, one per gas channel.

    Temperature and humidity have no table.
    """
    tables = {ch: _ascending(ch, rows) for ch, rows in _ASCENDING_ROWS.items()}
    tables[ChannelKind.O2] = _oxygen_table()
    return tables


def load_breakpoint_tables(path: str | Path) -> dict[ChannelKind, BreakpointTable]:
    """Load tables from a JSON file.

    The file holds a list of row objects with keys ``channel``, ``conc_lo``,
    ``conc_hi``, ``idx_lo``, ``idx_hi``, ``category`` and optionally
    ``lo_open``. Rows are grouped by channel in file order; the O2 channel is
    read as a descending-concentration table. Channels absent from the file
    fall back to the built-in defaults.
    """
    try:
        rows = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if isinstance(rows, Mapping):
        rows = rows.get("bands", [])
    grouped: dict[ChannelKind, list[BreakpointBand]] = {}
    for i, row in enumerate(rows):
        try:
            ch = ChannelKind.parse(row["channel"])
            band = BreakpointBand(
                float(row["conc_lo"]),
                float(row["conc_hi"]),
                float(row["idx_lo"]),
                float(row["idx_hi"]),
                HealthCategory.parse(row["category"]),
                bool(row.get("lo_open", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad row {i}: {exc}") from None
        grouped.setdefault(ch, []).append(band)
    tables = default_breakpoint_tables()
    for ch, bands in grouped.items():
        orient = Orientation.DESCENDING_CONCENTRATION if ch is ChannelKind.O2 else Orientation.ASCENDING
        tables[ch] = BreakpointTable(ch, tuple(bands), orient)
    return tables


def _utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled readings of one channel.

    Gaps are stored as NaN. Sample ``k`` is taken at ``start + k * step``.
    """

    channel: ChannelKind
    start: datetime
    values: np.ndarray
    step: timedelta = timedelta(hours=1)
    unit: str = ""

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size < 1:
            raise DomainError("a time series needs at least one sample")
        if np.isinf(vals).any():
            raise DomainError("time series values must be finite or NaN gaps")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "start", _utc(self.start))
        if not self.unit:
            object.__setattr__(self, "unit", CANONICAL_UNITS[self.channel])
        if self.step <= timedelta(0):
            raise DomainError("step must be positive")

    def __len__(self) -> int:
        return self.values.size

    @property
    def gaps(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def has_gaps(self) -> bool:
        return bool(self.gaps.any())

    @property
    def step_hours(self) -> float:
        return self.step.total_seconds() / 3600.0

    def times(self) -> list[datetime]:
        return [self.start + k * self.step for k in range(len(self))]

    def with_values(self, values: Iterable[float]) -> "TimeSeries":
        return TimeSeries(self.channel, self.start, np.asarray(values, dtype=float), self.step, self.unit)

    def window(self, first: int, n: int) -> "TimeSeries":
        if first < 0 or n < 1 or first + n > len(self):
            raise DomainError(f"window [{first}, {first + n}) outside series of length {len(self)}")
        return TimeSeries(self.channel, self.start + first * self.step, self.values[first:first + n], self.step, self.unit)
