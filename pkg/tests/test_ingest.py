import io
from dataclasses import replace
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iaqfusion.core import ChannelKind, DomainError, FormatError
from iaqfusion.ingest import (
    ChannelProfile,
    Episode,
    RawRecord,
    Scenario,
    default_scenario,
    generate,
    ground_truth,
    load_scenario,
    parse_csv,
    series_to_records,
    to_series,
    write_csv,
)

HEAD = "timestamp,sensor_id,channel,value,unit\n"
T0 = datetime(2016, 8, 24, tzinfo=timezone.utc)


def parse(text):
    return parse_csv(io.StringIO(text))


def test_well_formed_row():
    res = parse(HEAD + "2016-08-24T10:00:00Z,ESB.10.236,CO2,412.5,ppm\n")
    assert len(res) == 1 and not res.rejects
    r = res.records[0]
    assert r.channel is ChannelKind.CO2 and r.value == 412.5 and r.timestamp.hour == 10
    assert r.sensor_id == "ESB.10.236"


def test_unit_mismatch_rejected():
    res = parse(HEAD + "2016-08-24T10:00:00Z,S,CO2,412.5,%\n")
    assert len(res) == 0
    assert "unit" in res.rejects[0].reason and res.rejects[0].line == 2


def test_header_only():
    res = parse(HEAD)
    assert res.records == [] and res.rejects == []


@pytest.mark.parametrize("text", ["", "a,b,c\n1,2,3\n"])
def test_missing_header(text):
    with pytest.raises(FormatError):
        parse(text)


@pytest.mark.parametrize(
    "row, reason",
    [
        ("2016-08-24T10:00:00Z,S,SO2,1,ppm", "channel"),
        ("not-a-time,S,CO,1,ppm", "isoformat"),
        ("2016-08-24T10:00:00Z,S,CO,abc,ppm", "float"),
        ("2016-08-24T10:00:00Z,S,CO,nan,ppm", "non-finite"),
        ("2016-08-24T10:00:00Z,S,CO,1", "fields"),
    ],
)
def test_rejects_carry_reason(row, reason):
    res = parse(HEAD + row + "\n" + "2016-08-24T11:00:00Z,S,CO,1,ppm\n")
    assert len(res) == 1
    assert reason in res.rejects[0].reason


def test_unit_aliases():
    res = parse(HEAD + "2016-08-24T10:00:00Z,S,Temperature,21,C\n2016-08-24T10:00:00Z,S,Humidity,40,%RH\n")
    assert [r.unit for r in res.records] == ["°C", "%"]


def test_naive_and_offset_timestamps_become_utc():
    res = parse(HEAD + "2016-08-24T10:00:00,S,CO,1,ppm\n2016-08-24T12:00:00+02:00,S,CO,1,ppm\n")
    assert [r.timestamp for r in res.records] == [T0.replace(hour=10)] * 2


def _hourly(values, start=T0, channel=ChannelKind.CO2, sensor="S"):
    return [RawRecord(start + timedelta(hours=i), sensor, channel, v, "ppm")
            for i, v in enumerate(values) if v is not None]


def test_to_series_78_hours():
    s = to_series(_hourly(np.arange(78.0)), ChannelKind.CO2, "S", T0, 78)
    assert len(s) == 78 and not s.has_gaps


def test_to_series_gap_and_mean():
    recs = _hourly([400.0, None, 420.0])
    recs.append(RawRecord(T0 + timedelta(minutes=30), "S", ChannelKind.CO2, 410.0, "ppm"))
    recs.append(RawRecord(T0 + timedelta(hours=2, minutes=10), "S", ChannelKind.CO2, 415.0, "ppm"))
    s = to_series(recs, ChannelKind.CO2, "S", T0, 3)
    assert s.values[0] == 405.0
    assert np.isnan(s.values[1])
    assert s.values[2] == 417.5


def test_to_series_filters_sensor_and_channel():
    recs = _hourly([1.0, 2.0]) + _hourly([9.0, 9.0], sensor="other") + _hourly([7.0], channel=ChannelKind.CO)
    assert to_series(recs, ChannelKind.CO2, "S", T0, 2).values.tolist() == [1.0, 2.0]


@given(st.lists(st.tuples(st.integers(-5, 50), st.floats(0, 1e4)), max_size=30), st.integers(1, 40))
def test_to_series_length(entries, n):
    recs = [RawRecord(T0 + timedelta(hours=h), "S", ChannelKind.CO, v, "ppm") for h, v in entries]
    assert len(to_series(recs, ChannelKind.CO, "S", T0, n)) == n


def test_to_series_requires_samples():
    with pytest.raises(DomainError):
        to_series([], ChannelKind.CO, "S", T0, 0)


@given(st.lists(st.tuples(st.integers(0, 10_000), st.sampled_from(list(ChannelKind)),
                          st.floats(-1e6, 1e6, allow_nan=False), st.text("abcXYZ.019", min_size=1, max_size=8)),
                max_size=20))
def test_csv_round_trip(rows):
    from iaqfusion.core import CANONICAL_UNITS
    recs = [RawRecord(T0 + timedelta(minutes=m), sid, ch, v, CANONICAL_UNITS[ch]) for m, ch, v, sid in rows]
    buf = io.StringIO()
    write_csv(recs, buf)
    first = parse(buf.getvalue())
    assert first.records == recs and not first.rejects
    buf2 = io.StringIO()
    write_csv(first.records, buf2)
    assert buf2.getvalue() == buf.getvalue()


def test_file_round_trip(tmp_path):
    recs = _hourly([1.5, 2.5])
    p = tmp_path / "x.csv"
    write_csv(recs, p)
    assert parse_csv(p).records == recs


def test_generate_zero_noise_is_sinusoid():
    scen = Scenario(T0, 2, {ChannelKind.CO2: ChannelProfile(500.0, 50.0, 0.0, peak_hour=6.0)})
    v = generate(scen)[ChannelKind.CO2].values
    hours = np.arange(48)
    assert np.allclose(v, 500 + 50 * np.cos(2 * np.pi * (hours - 6) / 24), atol=1e-12, rtol=0)
    assert np.array_equal(v, generate(scen)[ChannelKind.CO2].values)


def test_co_episode_day_two():
    scen = default_scenario(seed=0)
    truth = ground_truth(scen)[ChannelKind.CO].values
    # ramp edges shave a little off the plateau average
    assert truth[24:48].mean() - truth[:24].mean() == pytest.approx(0.13, abs=0.015)
    obs = generate(scen)[ChannelKind.CO].values
    sigma = scen.profiles[ChannelKind.CO].noise
    assert obs[24:48].mean() - obs[:24].mean() == pytest.approx(0.13, abs=0.015 + 4 * sigma * np.sqrt(2 / 24))


def test_box_episode():
    scen = Scenario(T0, 1, {ChannelKind.CO: ChannelProfile(1.0)}, (Episode(ChannelKind.CO, 5, 3, 0.5),))
    v = ground_truth(scen)[ChannelKind.CO].values
    assert v.tolist() == [1.0] * 5 + [1.5] * 3 + [1.0] * 16


def test_generate_is_deterministic_and_seed_sensitive():
    a = generate(default_scenario(seed=3))
    b = generate(default_scenario(seed=3))
    c = generate(default_scenario(seed=4))
    for ch in a:
        assert a[ch].values.tobytes() == b[ch].values.tobytes()
        assert not np.array_equal(a[ch].values, c[ch].values)


def test_channels_draw_independent_streams():
    full = generate(default_scenario(seed=1))
    scen = default_scenario(seed=1)
    only_co = replace(scen, profiles={ChannelKind.CO: scen.profiles[ChannelKind.CO]})
    assert np.array_equal(generate(only_co)[ChannelKind.CO].values, full[ChannelKind.CO].values)


@given(st.dictionaries(st.sampled_from(list(ChannelKind)), st.sets(st.integers(0, 71), max_size=10), max_size=4))
def test_gap_spec_respected(gaps):
    scen = replace(default_scenario(), gaps={ch: tuple(v) for ch, v in gaps.items()})
    for ch, s in generate(scen).items():
        assert set(np.flatnonzero(s.gaps)) == set(gaps.get(ch, ()))


def test_gap_out_of_range():
    scen = replace(default_scenario(), gaps={ChannelKind.CO: (72,)})
    with pytest.raises(DomainError):
        generate(scen)


def test_scenario_json_round_trip(tmp_path):
    scen = replace(default_scenario(seed=9), gaps={ChannelKind.O2: (3, 4)})
    p = tmp_path / "s.json"
    import json
    p.write_text(json.dumps(scen.to_dict()))
    back = load_scenario(p)
    assert back == scen


def test_bad_scenario(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"days": 3}')
    with pytest.raises(FormatError):
        load_scenario(p)
    p.write_text("{")
    with pytest.raises(FormatError):
        load_scenario(p)


def test_series_to_records_skips_gaps():
    scen = replace(default_scenario(), gaps={ChannelKind.CO: (0, 5)})
    s = generate(scen)[ChannelKind.CO]
    recs = series_to_records(s, "X")
    assert len(recs) == 70 and recs[0].timestamp == s.start + timedelta(hours=1)
