"""Command-line front end: ``iaqfusion <subcommand> [options]``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from collections import defaultdict
from dataclasses import replace
from datetime import timedelta
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    ChannelKind,
    DomainError,
    FormatError,
    IaqError,
    NumericalError,
    UsageError,
    default_breakpoint_tables,
    load_breakpoint_tables,
)
from .fkalman import (
    DEFAULT_HORIZON,
    estimate_noise_variance,
    fuse_series,
    matern_model,
    tune_process_noise,
)
from .indices import (
    EiaqiWeights,
    eiaqi,
    humidex,
    overall_iaqi,
    subindex,
    weightage_label,
)
from .ingest import (
    default_scenario,
    format_timestamp,
    generate,
    ground_truth,
    load_scenario,
    parse_csv,
    parse_timestamp,
    to_series,
    write_csv,
    series_to_records,
)
from .metrics import evaluate
from .sysid import co2_reference_model, identify, load_ftf

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

DEFAULT_WINDOW = 78  # three days plus two three-hour margins, hourly


class CliUsage(Exception):
    pass


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _emit(rows: list[dict], columns: Sequence[str], fmt: str, out) -> None:
    if fmt == "json":
        clean = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()} for r in rows]
        json.dump(clean, out, indent=2, sort_keys=False, ensure_ascii=False)
        out.write("\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return _Borrowed(sys.stdout)
    return open(path, "w", newline="", encoding="utf-8")


class _Borrowed:
    def __init__(self, fh):
        self.fh = fh

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        self.fh.flush()
        return False


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _read_records(path: str):
    result = parse_csv(sys.stdin if path == "-" else path)
    for rej in result.rejects:
        _log(f"rejected line {rej.line}: {rej.reason}")
    return result.records


def _grid(records) -> tuple:
    """Hourly grid covering all records: (start, n_samples)."""
    if not records:
        raise DomainError("no samples")
    t0 = min(r.timestamp for r in records).replace(minute=0, second=0, microsecond=0)
    t1 = max(r.timestamp for r in records)
    n = int((t1 - t0) // timedelta(hours=1)) + 1
    return t0, n


def _group(records):
    by_sensor = defaultdict(list)
    for r in records:
        by_sensor[r.sensor_id].append(r)
    return dict(sorted(by_sensor.items()))


def _channels_of(records, selected):
    present = {r.channel for r in records}
    order = [ch for ch in ChannelKind if ch in present]
    if selected:
        order = [ch for ch in order if ch in selected]
    return order


# ---------------------------------------------------------------------------
# subcommands


def cmd_compute_index(args) -> int:
    records = _read_records(args.input)
    if not records:
        raise DomainError("no samples")
    tables = load_breakpoint_tables(args.tables) if args.tables else default_breakpoint_tables()
    weights = EiaqiWeights(args.w_h, args.w_iaqi)
    rows = []
    gas_cols = [ch for ch in _channels_of(records, args.channels) if ch in tables]
    columns = ["timestamp", "sensor_id"] + [f"iaqi_{ch.value}" for ch in gas_cols] + [
        "iaqi", "category", "humidex", "humidex_rating", "eiaqi", "weightage", "label"]
    for sensor, recs in _group(records).items():
        start, n = _grid(recs)
        series = {ch: to_series(recs, ch, sensor, start, n).values for ch in ChannelKind}
        for k in range(n):
            row = {"timestamp": format_timestamp(start + k * timedelta(hours=1)), "sensor_id": sensor}
            subs = []
            for ch in gas_cols:
                c = series[ch][k]
                if not math.isnan(c):
                    iv = subindex(tables[ch], c, args.corrected_oxygen)
                    row[f"iaqi_{ch.value}"] = round(iv.value, 4)
                    subs.append(iv)
            iaqi_v = overall_iaqi(subs, args.aggregate) if subs else None
            t, rh = series[ChannelKind.TEMPERATURE][k], series[ChannelKind.HUMIDITY][k]
            h = None if math.isnan(t) or math.isnan(rh) else humidex(t, rh)
            if iaqi_v is not None:
                row["iaqi"] = round(iaqi_v.value, 4)
                row["category"] = iaqi_v.category.label
            if h is not None:
                row["humidex"] = round(h.value, 4)
                row["humidex_rating"] = h.rating.label
            if iaqi_v is not None and h is not None:
                row["eiaqi"] = round(eiaqi(iaqi_v, h, weights), 4)
                row["weightage"], row["label"] = weightage_label(iaqi_v.category, h.rating)
            if len(row) > 2:
                rows.append(row)
    if not rows:
        raise DomainError("no samples")
    with _open_out(args.output) as out:
        _emit(rows, columns, args.format, out)
    return EXIT_OK


def cmd_fuse(args) -> int:
    records = _read_records(args.input)
    if not records:
        raise DomainError("no samples")
    rows = []
    for sensor, recs in _group(records).items():
        start, n = _grid(recs)
        for ch in _channels_of(recs, args.channels):
            s = to_series(recs, ch, sensor, start, n)
            if np.isnan(s.values).all():
                continue
            r = estimate_noise_variance(s) if args.r == "auto" else args.r
            q = 1e-6 if args.q == "auto" else args.q
            model = matern_model(l=args.l, q=q, r=r, alpha=args.alpha, horizon=args.horizon)
            if args.q == "auto":
                model = tune_process_noise(model, s)
            fused = fuse_series(model, s)
            q_used = model.Q[-1, -1] / model.dt ** model.orders[-1]
            _log(f"fuse sensor={sensor} channel={ch.value} n={n} gaps={int(s.gaps.sum())} "
                 f"l={args.l:g} lambda={model.lam:.5f} alpha={args.alpha:g} "
                 f"q={q_used:.6g} r={r:.6g} horizon={args.horizon}")
            for t, raw, fv in zip(s.times(), s.values, fused.values):
                rows.append({"timestamp": format_timestamp(t), "sensor_id": sensor, "channel": ch.value,
                             "raw": float(raw), "fused": float(fv), "unit": s.unit})
    with _open_out(args.output) as out:
        _emit(rows, FUSED_COLUMNS, args.format, out)
    return EXIT_OK


FUSED_COLUMNS = ("timestamp", "sensor_id", "channel", "raw", "fused", "unit")


def _read_fused(path: str) -> list[dict]:
    text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
    else:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or tuple(reader.fieldnames) != FUSED_COLUMNS:
            raise FormatError(f"{path}: expected header {','.join(FUSED_COLUMNS)}")
        rows = list(reader)
    out = []
    for i, r in enumerate(rows):
        try:
            raw = r["raw"]
            out.append({
                "timestamp": parse_timestamp(r["timestamp"]),
                "sensor_id": r["sensor_id"],
                "channel": ChannelKind.parse(r["channel"]),
                "raw": math.nan if raw in ("", None) else float(raw),
                "fused": float(r["fused"]),
            })
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad row {i + 1}: {exc}") from None
    return out


def cmd_evaluate(args) -> int:
    fused_rows = _read_fused(args.fused)
    truth = {(r.sensor_id, r.channel, r.timestamp): r.value for r in _read_records(args.truth)}
    if not fused_rows:
        raise DomainError("no samples")
    groups = defaultdict(list)
    for r in fused_rows:
        groups[(r["sensor_id"], r["channel"])].append(r)
    centered = args.r2 == "centered"
    rows = []
    order = list(ChannelKind)
    for (sensor, ch), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], order.index(kv[0][1]))):
        if args.channels and ch not in args.channels:
            continue
        ref, raw, fused = [], [], []
        for r in rs:
            t = truth.get((sensor, ch, r["timestamp"]))
            if t is None or math.isnan(r["raw"]):
                continue
            ref.append(t)
            raw.append(r["raw"])
            fused.append(r["fused"])
        if not ref:
            raise DomainError(f"no overlapping samples for {sensor}/{ch.value}")
        for name, est in (("raw", raw), ("fused", fused)):
            m = evaluate(np.array(ref), np.array(est), centered_r2=centered)
            rows.append({"sensor_id": sensor, "channel": ch.value, "series": name, "n": len(ref),
                         "mape": m.mape, "rmse": m.rmse, "r2": m.r2})
    with _open_out(args.output) as out:
        _emit(rows, ["sensor_id", "channel", "series", "n", "mape", "rmse", "r2"], args.format, out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scen = load_scenario(args.scenario) if args.scenario else default_scenario(days=args.days)
    if args.seed is not None:
        scen = scen.with_seed(args.seed)
    if args.noise_scale != 1.0:
        scen = scen.scaled_noise(args.noise_scale)
    if args.gaps:
        gaps = dict(scen.gaps)
        for spec in args.gaps:
            gaps[spec[0]] = tuple(sorted(set(gaps.get(spec[0], ())) | set(spec[1])))
        scen = replace(scen, gaps=gaps)

    def records(series_map):
        recs = []
        for ch, s in series_map.items():
            if args.channels and ch not in args.channels:
                continue
            recs.extend(series_to_records(s, scen.sensor_id))
        recs.sort(key=lambda r: (r.timestamp, list(ChannelKind).index(r.channel)))
        return recs

    with _open_out(args.output) as out:
        write_csv(records(generate(scen)), out)
    if args.truth:
        write_csv(records(ground_truth(scen)), args.truth)
    _log(f"simulate seed={scen.seed} days={scen.days} channels={len(scen.profiles)}")
    return EXIT_OK


def cmd_identify(args) -> int:
    records = _read_records(args.input)
    if not records:
        raise DomainError("no samples")
    sensors = _group(records)
    sensor = args.sensor or next(iter(sensors))
    if sensor not in sensors:
        raise DomainError(f"sensor {sensor!r} not in input")
    recs = sensors[sensor]
    start, n = _grid(recs)
    s = to_series(recs, args.channel, sensor, start, n)
    window = s.window(args.offset, min(args.window, n - args.offset) if args.offset < n else args.window)
    if window.has_gaps:
        raise DomainError(f"identification window contains {int(window.gaps.sum())} gaps")
    template = load_ftf(args.template) if args.template else co2_reference_model()
    rep = identify(window.values, template=template, dt=window.step_hours,
                   restarts=args.restarts, seed=args.seed or 0)
    doc = {"channel": args.channel.value, "sensor_id": sensor, "window_start": format_timestamp(window.start),
           "n": len(window), **rep.to_dict()}
    with _open_out(args.output) as out:
        json.dump(doc, out, indent=2)
        out.write("\n")
    _log(f"identify channel={args.channel.value} n={len(window)} eps_mse={rep.eps_mse:.6g} "
         f"converged={rep.converged}")
    if not rep.converged:
        _log("identification did not converge; best attempt written")
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _alpha(text: str) -> float:
    v = _positive(text)
    if v > 2:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 2], got {text}")
    return v


def _auto_or_positive(text: str):
    return "auto" if text.strip().lower() == "auto" else _positive(text)


def _int_at_least(lo: int):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v
    return parse


def _channel(text: str) -> ChannelKind:
    try:
        return ChannelKind.parse(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _channel_list(text: str) -> list[ChannelKind]:
    return [_channel(t) for t in text.split(",") if t.strip()]


def _gap_spec(text: str):
    """``CHANNEL:i,j,k`` or ``CHANNEL:a-b``."""
    try:
        ch, idx = text.split(":", 1)
        out = []
        for part in idx.split(","):
            if "-" in part:
                a, b = part.split("-")
                out.extend(range(int(a), int(b) + 1))
            elif part.strip():
                out.append(int(part))
        return _channel(ch), out
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad gap spec {text!r} (expected CHANNEL:i,j or CHANNEL:a-b)") from None


def _globals(parser, suppress: bool) -> None:
    d = argparse.SUPPRESS
    parser.add_argument("--config", default=d if suppress else None, metavar="FILE",
                        help="key=value file; keys are long option names")
    parser.add_argument("--seed", type=_int_at_least(0), default=d if suppress else None,
                        help="random seed")
    parser.add_argument("--format", choices=("csv", "json"), default=d if suppress else "csv",
                        help="output table format (default csv)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iaqfusion", description="Indoor air quality indices and fractional Kalman fusion.",
                                allow_abbrev=False)
    _globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_, allow_abbrev=False)
        _globals(sp, suppress=True)
        sp.set_defaults(func=func)
        return sp

    sp = add("compute-index", cmd_compute_index, "Hourly sub-indices, overall IAQI, humidex and EIAQI.")
    sp.add_argument("-i", "--input", required=True, help="sensor CSV (- for stdin)")
    sp.add_argument("-o", "--output", help="output file (default stdout)")
    sp.add_argument("--channels", type=_channel_list, help="comma-separated channel subset")
    sp.add_argument("--tables", help="breakpoint table JSON overriding the built-in tables")
    sp.add_argument("--aggregate", choices=("max", "mean"), default="max", help="overall IAQI rule")
    sp.add_argument("--w-h", dest="w_h", type=_nonneg, default=1.0, help="humidex weight in EIAQI")
    sp.add_argument("--w-iaqi", dest="w_iaqi", type=_nonneg, default=1.0, help="IAQI weight in EIAQI")
    sp.add_argument("--corrected-oxygen", action="store_true",
                    help="reverse the in-band orientation of the oxygen sub-index")

    sp = add("fuse", cmd_fuse, "Fractional Kalman fusion of every channel; writes raw and fused side by side.")
    sp.add_argument("-i", "--input", required=True, help="sensor CSV (- for stdin)")
    sp.add_argument("-o", "--output", help="output file (default stdout)")
    sp.add_argument("--channels", type=_channel_list, help="comma-separated channel subset")
    sp.add_argument("--l", dest="l", type=_positive, default=5.0, help="Matérn correlation length (default 5)")
    sp.add_argument("--alpha", type=_alpha, default=1.0, help="fractional order in (0, 2] (default 1)")
    sp.add_argument("--q", type=_auto_or_positive, default="auto",
                    help="process noise density, or 'auto' for maximum likelihood (default auto)")
    sp.add_argument("--r", type=_auto_or_positive, default="auto",
                    help="measurement noise variance, or 'auto' to estimate from the data (default auto)")
    sp.add_argument("--horizon", type=_int_at_least(1), default=DEFAULT_HORIZON, help="GL memory length")

    sp = add("identify", cmd_identify, "Fit a fractional transfer function to a channel's step response window.")
    sp.add_argument("-i", "--input", required=True, help="sensor CSV (- for stdin)")
    sp.add_argument("-o", "--output", help="model JSON (default stdout)")
    sp.add_argument("--channel", type=_channel, required=True)
    sp.add_argument("--sensor", help="sensor id (default: first in file)")
    sp.add_argument("--offset", type=_int_at_least(0), default=0, help="first sample of the window")
    sp.add_argument("--window", type=_int_at_least(2), default=DEFAULT_WINDOW, help="window length (default 78)")
    sp.add_argument("--template", help="starting model JSON (default: integer-order four-pole model)")
    sp.add_argument("--restarts", type=_int_at_least(0), default=5, help="random restarts")

    sp = add("evaluate", cmd_evaluate, "MAPE, RMSE and R² of raw and fused series against ground truth.")
    sp.add_argument("--fused", required=True, help="output of the fuse subcommand")
    sp.add_argument("--truth", required=True, help="ground-truth sensor CSV")
    sp.add_argument("-o", "--output", help="output file (default stdout)")
    sp.add_argument("--channels", type=_channel_list, help="comma-separated channel subset")
    sp.add_argument("--r2", choices=("uncentered", "centered"), default="uncentered",
                    help="R² denominator: sum of squared forecasts (default) or textbook SS_tot")

    sp = add("simulate", cmd_simulate, "Generate a seeded synthetic scenario as sensor CSV.")
    sp.add_argument("-o", "--output", help="observations CSV (default stdout)")
    sp.add_argument("--truth", help="also write the noise-free series here")
    sp.add_argument("--scenario", help="scenario JSON (default: built-in three-day scenario)")
    sp.add_argument("--days", type=_int_at_least(1), default=3, help="length of the built-in scenario")
    sp.add_argument("--noise-scale", dest="noise_scale", type=_nonneg, default=1.0, help="multiply every noise sigma")
    sp.add_argument("--channels", type=_channel_list, help="comma-separated channel subset")
    sp.add_argument("--gap", dest="gaps", type=_gap_spec, action="append",
                    help="CHANNEL:i,j or CHANNEL:a-b; repeatable")
    return p


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, ``[section]`` lines are ignored."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliUsage(f"cannot read config {path}: {exc.strerror}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise CliUsage(f"{path}:{n}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value.strip("\"'")
    return out


def _config_path(argv: Sequence[str]) -> Optional[str]:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv: Sequence[str], path: str) -> None:
    """Install config values as subcommand defaults; command-line flags still win."""
    cfg = read_config(path)
    sp_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((t for t in argv if t in sp_action.choices), None)
    if command is None:
        return
    sp = sp_action.choices[command]
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config", "func")}
    defaults = {}
    for key, raw in cfg.items():
        action = actions.get(key)
        if action is None:
            raise CliUsage(f"unknown config key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            continue
        try:
            value = action.type(raw) if action.type else raw
        except argparse.ArgumentTypeError as exc:
            raise CliUsage(f"config {key}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise CliUsage(f"config {key}: invalid choice {raw!r}")
        if isinstance(action, argparse._AppendAction):
            value = [value]
        defaults[key] = value
        action.required = False
    sp.set_defaults(**defaults)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        cfg = _config_path(argv)
        if cfg:
            _apply_config(parser, argv, cfg)
        args = parser.parse_args(argv)
    except CliUsage as exc:
        _log(f"usage error: {exc}")
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return EXIT_USAGE
    except NumericalError as exc:
        _log(f"numerical error: {exc}")
        return EXIT_NUMERICAL
    except (IaqError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
