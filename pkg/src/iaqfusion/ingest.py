"""CSV ingestion of sensor records, hourly gridding and synthetic scenarios."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence, Union

import numpy as np

from .core import CANONICAL_UNITS, ChannelKind, DomainError, FormatError, TimeSeries

__all__ = [
    "HEADER",
    "RawRecord",
    "Reject",
    "ParseResult",
    "parse_csv",
    "write_csv",
    "parse_timestamp",
    "format_timestamp",
    "to_series",
    "series_to_records",
    "ChannelProfile",
    "Episode",
    "Scenario",
    "default_scenario",
    "load_scenario",
    "generate",
    "ground_truth",
]

HEADER = ("timestamp", "sensor_id", "channel", "value", "unit")

_UNIT_ALIASES = {
    "ppm": "ppm",
    "%": "%",
    "%rh": "%",
    "°c": "°C",
    "degc": "°C",
    "c": "°C",
}


def parse_timestamp(text: str) -> datetime:
    """ISO-8601 timestamp; naive values are taken as UTC."""
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    ts = datetime.fromisoformat(t)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc) if ts.tzinfo else ts
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class RawRecord:
    timestamp: datetime
    sensor_id: str
    channel: ChannelKind
    value: float
    unit: str

    def __post_init__(self):
        unit = _UNIT_ALIASES.get(self.unit.strip().lower())
        if unit != CANONICAL_UNITS[self.channel]:
            raise DomainError(
                f"unit {self.unit!r} does not match {self.channel.value} "
                f"(expected {CANONICAL_UNITS[self.channel]!r})"
            )
        object.__setattr__(self, "unit", unit)


@dataclass(frozen=True)
class Reject:
    line: int
    text: str
    reason: str


@dataclass
class ParseResult:
    records: list[RawRecord] = field(default_factory=list)
    rejects: list[Reject] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def parse_csv(source: Union[str, Path, IO[str]]) -> ParseResult:
    """Parse ``timestamp,sensor_id,channel,value,unit`` rows.

    Malformed rows are collected in ``rejects`` with a reason instead of
    being dropped silently. A missing or wrong header raises
    :class:`FormatError`.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_csv(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip().lower() for h in header) != HEADER:
        raise FormatError(f"expected header {','.join(HEADER)}, got {header}")
    out = ParseResult()
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        text = ",".join(row)
        if len(row) != len(HEADER):
            out.rejects.append(Reject(line, text, f"expected {len(HEADER)} fields, got {len(row)}"))
            continue
        ts, sensor, chan, value, unit = (c.strip() for c in row)
        try:
            rec = RawRecord(parse_timestamp(ts), sensor, ChannelKind.parse(chan), float(value), unit)
            if not math.isfinite(rec.value):
                raise DomainError(f"non-finite value {value!r}")
        except ValueError as exc:
            out.rejects.append(Reject(line, text, str(exc)))
            continue
        out.records.append(rec)
    return out


def write_csv(records: Iterable[RawRecord], dest: Union[str, Path, IO[str]]) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_csv(records, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        w.writerow((format_timestamp(r.timestamp), r.sensor_id, r.channel.value, repr(float(r.value)), r.unit))


def to_series(
    records: Iterable[RawRecord],
    channel: ChannelKind,
    sensor_id: str | None,
    start: datetime,
    n_samples: int,
    step: timedelta = timedelta(hours=1),
) -> TimeSeries:
    """Average records of one channel onto a regular grid; empty slots become gaps.

    Slot ``k`` collects readings with ``start + k*step <= t < start + (k+1)*step``.
    ``sensor_id=None`` accepts every sensor.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    start = start if start.tzinfo else start.replace(tzinfo=timezone.utc)
    sums = np.zeros(n_samples)
    counts = np.zeros(n_samples, dtype=int)
    step_s = step.total_seconds()
    for r in records:
        if r.channel is not channel or (sensor_id is not None and r.sensor_id != sensor_id):
            continue
        k = math.floor((r.timestamp - start).total_seconds() / step_s)
        if 0 <= k < n_samples:
            sums[k] += r.value
            counts[k] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return TimeSeries(channel, start, values, step)


def series_to_records(series: TimeSeries, sensor_id: str) -> list[RawRecord]:
    """Inverse of :func:`to_series` for gap-free slots (gaps are skipped)."""
    return [
        RawRecord(t, sensor_id, series.channel, float(v), series.unit)
        for t, v in zip(series.times(), series.values)
        if not math.isnan(v)
    ]


# ---------------------------------------------------------------------------
# synthetic scenarios


@dataclass(frozen=True)
class ChannelProfile:
    level: float
    amplitude: float = 0.0     # daily-cycle amplitude
    noise: float = 0.0         # Gaussian measurement noise sigma
    peak_hour: float = 14.0    # hour of day at which the daily cycle peaks


@dataclass(frozen=True)
class Episode:
    channel: ChannelKind
    start: float               # hours after scenario start
    duration: float            # hours
    magnitude: float
    ramp: float = 0.0          # raised-cosine edge width in hours (0 = box)


@dataclass(frozen=True)
class Scenario:
    start: datetime
    days: int
    profiles: Mapping[ChannelKind, ChannelProfile]
    episodes: tuple[Episode, ...] = ()
    gaps: Mapping[ChannelKind, tuple[int, ...]] = field(default_factory=dict)
    seed: int = 0
    sensor_id: str = "SIM.0"

    @property
    def n_samples(self) -> int:
        return int(self.days) * 24

    def scaled_noise(self, factor: float) -> "Scenario":
        profiles = {ch: ChannelProfile(p.level, p.amplitude, p.noise * factor, p.peak_hour)
                    for ch, p in self.profiles.items()}
        return Scenario(self.start, self.days, profiles, self.episodes, self.gaps, self.seed, self.sensor_id)

    def with_seed(self, seed: int) -> "Scenario":
        return Scenario(self.start, self.days, self.profiles, self.episodes, self.gaps, seed, self.sensor_id)

    def to_dict(self) -> dict:
        return {
            "start": format_timestamp(self.start),
            "days": self.days,
            "seed": self.seed,
            "sensor_id": self.sensor_id,
            "profiles": {ch.value: asdict(p) for ch, p in self.profiles.items()},
            "episodes": [dict(asdict(e), channel=e.channel.value) for e in self.episodes],
            "gaps": {ch.value: list(v) for ch, v in self.gaps.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scenario":
        try:
            profiles = {ChannelKind.parse(k): ChannelProfile(**v) for k, v in d["profiles"].items()}
            episodes = tuple(
                Episode(ChannelKind.parse(e["channel"]), float(e["start"]), float(e["duration"]),
                        float(e["magnitude"]), float(e.get("ramp", 0.0)))
                for e in d.get("episodes", ())
            )
            gaps = {ChannelKind.parse(k): tuple(int(i) for i in v) for k, v in d.get("gaps", {}).items()}
            scen = cls(parse_timestamp(d["start"]), int(d["days"]), profiles, episodes, gaps,
                       int(d.get("seed", 0)), str(d.get("sensor_id", "SIM.0")))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"invalid scenario: {exc}") from None
        if scen.days < 1:
            raise FormatError("scenario needs at least one day")
        return scen


def load_scenario(path: str | Path) -> Scenario:
    try:
        return Scenario.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None


def default_scenario(seed: int = 0, days: int = 3) -> Scenario:
    """Three hourly days in one room, with a pollution episode on day 2.

    Noise is about half the daily-cycle amplitude on every channel. CO rises
    by 0.13 ppm and humidity by 4 %RH over the second day.
    """
    C = ChannelKind
    profiles = {
        C.CO: ChannelProfile(1.5, 0.2, 0.1),
        C.CO2: ChannelProfile(600.0, 120.0, 60.0),
        C.O2: ChannelProfile(20.4, 0.2, 0.1, peak_hour=2.0),
        C.H2: ChannelProfile(2.5, 0.4, 0.2),
        C.NH3: ChannelProfile(27.0, 2.0, 1.0),
        C.ETHANOL: ChannelProfile(5.0, 1.0, 0.5),
        C.H2S: ChannelProfile(1.0, 0.2, 0.1),
        C.TOLUENE: ChannelProfile(0.4, 0.1, 0.05),
        C.TEMPERATURE: ChannelProfile(23.0, 2.0, 1.0, peak_hour=15.0),
        C.HUMIDITY: ChannelProfile(55.0, 6.0, 3.0, peak_hour=6.0),
    }
    episodes = (
        Episode(C.CO, 24.0, 24.0, 0.13, ramp=6.0),
        Episode(C.HUMIDITY, 24.0, 24.0, 4.0, ramp=6.0),
    )
    return Scenario(datetime(2016, 8, 23, tzinfo=timezone.utc), days, profiles, episodes, {}, seed, "ESB.10.236")


def _rise(t: np.ndarray, at: float, width: float) -> np.ndarray:
    if width <= 0:
        return (t >= at).astype(float)
    s = np.clip((t - (at - width / 2)) / width, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * s)


def _truth_values(scen: Scenario, ch: ChannelKind) -> np.ndarray:
    p = scen.profiles[ch]
    t = np.arange(scen.n_samples, dtype=float)
    hour = (t + scen.start.hour + scen.start.minute / 60) % 24
    v = p.level + p.amplitude * np.cos(2 * np.pi * (hour - p.peak_hour) / 24)
    for e in scen.episodes:
        if e.channel is ch:
            v = v + e.magnitude * _rise(t, e.start, e.ramp) * (1 - _rise(t, e.start + e.duration, e.ramp))
    return v


def ground_truth(scen: Scenario) -> dict[ChannelKind, TimeSeries]:
    """Noise-free, gap-free channels of the scenario."""
    return {ch: TimeSeries(ch, scen.start, _truth_values(scen, ch)) for ch in scen.profiles}


def generate(scen: Scenario) -> dict[ChannelKind, TimeSeries]:
    """Noisy observations with gaps. Each channel draws from its own seeded stream."""
    out = {}
    order = list(ChannelKind)
    for ch in scen.profiles:
        rng = np.random.default_rng([scen.seed, order.index(ch)])
        v = _truth_values(scen, ch) + scen.profiles[ch].noise * rng.standard_normal(scen.n_samples)
        for k in scen.gaps.get(ch, ()):
            if not 0 <= k < v.size:
                raise DomainError(f"gap offset {k} outside scenario of {v.size} samples")
            v[k] = np.nan
        out[ch] = TimeSeries(ch, scen.start, v)
    return out
