import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from iaqfusion.cli import build_parser, main, read_config
from iaqfusion.core import ChannelKind
from iaqfusion.fkalman import matern_model
from iaqfusion.ingest import parse_csv

from oracles import classic_kalman

HEAD = "timestamp,sensor_id,channel,value,unit\n"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def scenario_files(tmp_path):
    obs, truth = tmp_path / "obs.csv", tmp_path / "truth.csv"
    assert main(["simulate", "--seed", "3", "-o", str(obs), "--truth", str(truth), "--gap", "CO:30-32"]) == 0
    return obs, truth


def test_compute_index_worked_example(tmp_path, capsys):
    p = tmp_path / "w.csv"
    p.write_text(HEAD + "2016-08-24T10:00:00Z,ESB,CO2,230.4295,ppm\n2016-08-24T10:00:00Z,ESB,O2,19.7347,%\n")
    assert main(["compute-index", "-i", str(p)]) == 0
    out = capsys.readouterr().out
    assert "30.3997" in out and "69.9475" in out
    row = list(csv.DictReader(out.splitlines()))[0]
    assert row["iaqi"] == "69.9475" and row["category"] == "Moderate"


def test_compute_index_empty_input(tmp_path, capsys):
    p = tmp_path / "e.csv"
    p.write_text(HEAD)
    assert main(["compute-index", "-i", str(p)]) == 3
    assert "no samples" in capsys.readouterr().err


def test_compute_index_climate_only(tmp_path, capsys):
    p = tmp_path / "t.csv"
    p.write_text(HEAD + "2016-08-24T10:00:00Z,S,Temperature,30,°C\n2016-08-24T10:00:00Z,S,Humidity,100,%\n")
    assert main(["compute-index", "-i", str(p)]) == 0
    row = list(csv.DictReader(capsys.readouterr().out.splitlines()))[0]
    assert float(row["humidex"]) == pytest.approx(47.96, abs=0.01)
    assert row["iaqi"] == "" and row["eiaqi"] == ""


def test_compute_index_weightage_and_eiaqi(tmp_path, capsys):
    p = tmp_path / "w.csv"
    p.write_text(HEAD + "2016-08-24T10:00:00Z,S,CO2,230.4295,ppm\n"
                 "2016-08-24T10:00:00Z,S,Temperature,30,°C\n2016-08-24T10:00:00Z,S,Humidity,40,%\n")
    assert main(["compute-index", "-i", str(p), "--format", "json", "--w-h", "0"]) == 0
    doc = json.loads(capsys.readouterr().out)[0]
    assert doc["eiaqi"] == doc["iaqi"]
    assert (doc["weightage"], doc["label"]) == (5, "Better")


def test_compute_index_aggregate_mean(tmp_path, capsys):
    p = tmp_path / "w.csv"
    p.write_text(HEAD + "2016-08-24T10:00:00Z,S,CO2,230.4295,ppm\n2016-08-24T10:00:00Z,S,O2,19.7347,%\n")
    assert main(["compute-index", "-i", str(p), "--aggregate", "mean"]) == 0
    row = list(csv.DictReader(capsys.readouterr().out.splitlines()))[0]
    assert float(row["iaqi"]) == pytest.approx((30.3997 + 69.9475) / 2, abs=1e-3)


def test_fuse_fills_gaps_and_logs_lambda(scenario_files, tmp_path, capsys):
    obs, _ = scenario_files
    out = tmp_path / "fused.csv"
    assert main(["fuse", "-i", str(obs), "-o", str(out), "--l", "5", "--channels", "CO,CO2"]) == 0
    assert "lambda=0.44721" in capsys.readouterr().err
    got = rows(out)
    co = [r for r in got if r["channel"] == "CO"]
    assert len(co) == 72 and sum(r["raw"] == "" for r in co) == 3
    assert all(r["fused"] != "" for r in got)


def test_fuse_alpha_one_matches_classic_filter(tmp_path):
    obs = tmp_path / "obs.csv"
    assert main(["simulate", "--seed", "1", "--days", "5", "--channels", "CO", "-o", str(obs)]) == 0
    out = tmp_path / "fused.csv"
    assert main(["fuse", "-i", str(obs), "-o", str(out), "--q", "1e-6", "--r", "0.25", "--alpha", "1"]) == 0
    got = rows(out)
    raw = np.array([float(r["raw"]) for r in got])
    fused = np.array([float(r["fused"]) for r in got])
    m = matern_model(l=5, q=1e-6, r=0.25)
    mean = raw.mean()
    ref = np.array(classic_kalman((m.A + np.eye(4)).tolist(), m.C.tolist(), m.Q.tolist(), m.R.tolist(),
                                  m.initial_covariance.tolist(), list(raw - mean))) + mean
    assert len(raw) >= 100
    assert np.max(np.abs(fused - ref)) < 1e-9


def test_evaluate_fused_beats_raw(scenario_files, tmp_path, capsys):
    obs, truth = scenario_files
    fused, metrics = tmp_path / "fused.csv", tmp_path / "m.csv"
    assert main(["fuse", "-i", str(obs), "-o", str(fused)]) == 0
    assert main(["evaluate", "--fused", str(fused), "--truth", str(truth), "-o", str(metrics)]) == 0
    table = rows(metrics)
    assert len(table) == 20
    by = {(r["channel"], r["series"]): r for r in table}
    for ch in ChannelKind:
        assert float(by[(ch.value, "fused")]["rmse"]) < float(by[(ch.value, "raw")]["rmse"])
    assert by[("CO", "raw")]["n"] == "69"


def test_evaluate_centered_r2(scenario_files, tmp_path):
    obs, truth = scenario_files
    fused = tmp_path / "fused.json"
    assert main(["fuse", "-i", str(obs), "-o", str(fused), "--format", "json", "--channels", "Humidity"]) == 0
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["evaluate", "--fused", str(fused), "--truth", str(truth), "-o", str(a)]) == 0
    assert main(["evaluate", "--fused", str(fused), "--truth", str(truth), "-o", str(b), "--r2", "centered"]) == 0
    assert float(rows(a)[0]["r2"]) > float(rows(b)[0]["r2"])


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--seed", "5", "simulate", "-o", str(a)]) == 0
    assert main(["simulate", "-o", str(b), "--seed", "5"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(parse_csv(a).records) == 720


def test_simulate_from_scenario_file(tmp_path):
    spec = {"start": "2016-08-24T00:00:00Z", "days": 1,
            "profiles": {"CO2": {"level": 500.0, "amplitude": 0.0, "noise": 0.0}},
            "gaps": {"CO2": [2]}}
    sp = tmp_path / "s.json"
    sp.write_text(json.dumps(spec))
    out = tmp_path / "o.csv"
    assert main(["simulate", "--scenario", str(sp), "-o", str(out)]) == 0
    recs = parse_csv(out).records
    assert len(recs) == 23 and {r.value for r in recs} == {500.0}


def test_simulate_invalid_scenario(tmp_path):
    sp = tmp_path / "s.json"
    sp.write_text("{}")
    assert main(["simulate", "--scenario", str(sp)]) == 3


def test_identify_writes_model(tmp_path):
    p = tmp_path / "step.csv"
    from iaqfusion.sysid import co2_reference_model, simulate_ftf
    y = 4.9e-7 * simulate_ftf(co2_reference_model(), np.ones(78), 1.0)
    text = HEAD + "".join(f"2016-08-{24 + (k // 24):02d}T{k % 24:02d}:00:00Z,S,CO,{float(v)!r},ppm\n" for k, v in enumerate(y))
    p.write_text(text)
    out = tmp_path / "model.json"
    code = main(["identify", "-i", str(p), "--channel", "CO", "-o", str(out), "--restarts", "0",
                 "--template", str(_template(tmp_path))])
    doc = json.loads(out.read_text())
    assert doc["n"] == 78
    assert code in (0, 4)
    assert doc["eps_mse"] < 1e-6


def _template(tmp_path):
    from iaqfusion.sysid import FractionalTransferFunction
    t = FractionalTransferFunction(((4.9e-7, 0.0),), ((1.0, 4.0), (1.058e-1, 3.0), (4.2e-3, 2.0),
                                                     (7.408e-5, 1.0), (4.9e-7, 0.0)))
    p = tmp_path / "template.json"
    p.write_text(t.to_json())
    return p


def test_identify_rejects_gappy_window(scenario_files):
    obs, _ = scenario_files
    assert main(["identify", "-i", str(obs), "--channel", "CO"]) == 3


@pytest.mark.parametrize(
    "argv",
    [
        ["fuse", "-i", "x.csv", "--l", "-1"],
        ["fuse", "-i", "x.csv", "--alpha", "3"],
        ["fuse", "-i", "x.csv", "--bogus"],
        ["compute-index", "-i", "x.csv", "--aggregate", "median"],
        ["nosuch"],
        [],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == 2


def test_missing_input_is_data_error(tmp_path):
    assert main(["fuse", "-i", str(tmp_path / "missing.csv")]) == 3


def test_config_file(scenario_files, tmp_path, capsys):
    obs, _ = scenario_files
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# fuse settings\n[fuse]\ninput = {obs}\nchannels = CO\nl = 10\nalpha = 0.9\n")
    out = tmp_path / "f.csv"
    assert main(["--config", str(cfg), "fuse", "-o", str(out)]) == 0
    err = capsys.readouterr().err
    assert "lambda=0.22361" in err and "alpha=0.9" in err
    # command-line flags override the file
    assert main(["fuse", "--config", str(cfg), "-o", str(out), "--l", "5"]) == 0
    assert "lambda=0.44721" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["bogus = 1\n", "l = -3\n", "just words\n"])
def test_bad_config(tmp_path, text):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(text)
    assert main(["--config", str(cfg), "fuse", "-i", "x.csv"]) == 2


def test_read_config(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text('w-h = 0.5  # humidex weight\nformat = "json"\n')
    assert read_config(str(cfg)) == {"w_h": "0.5", "format": "json"}


def test_help_lists_every_option():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
    for name, sp in sub.choices.items():
        text = sp.format_help()
        for action in sp._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "iaqfusion", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "compute-index" in out.stdout
