import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ppdn.cli import main, parse_quantity, parse_values, run_report
from ppdn.netmodel import RouterSpec, dump_config, reference_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
REF20 = str(CONFIGS / "ref_20uF.toml")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("text, value", [
    ("10ms", 10e-3), ("20u", 20e-6), ("20uF", 20e-6), ("1e-6", 1e-6), ("44m", 0.044),
    ("2.5k", 2500.0), ("1µ", 1e-6), (".5", 0.5), ("inf", math.inf),
])
def test_parse_quantity(text, value):
    assert parse_quantity(text) == pytest.approx(value, rel=1e-15)


def test_parse_quantity_rejects():
    for bad in ("ten", "10 furlongs", "1e", ""):
        with pytest.raises(ValueError):
            parse_quantity(bad)
    with pytest.raises(ValueError):
        parse_quantity("10F", unit="s")
    assert parse_values("1u, 10u,") == pytest.approx([1e-6, 10e-6])
    assert parse_values("") == []


def test_estimate_text_matches_reference_row(capsys, caplog):
    caplog.set_level("INFO", logger="ppdn")
    code, out, err = run(capsys, "estimate", "--config", REF20)
    assert code == 0
    row = next(line for line in out.splitlines() if line.startswith("estimate"))
    assert row.split()[1:] == ["21.60", "22.72", "22.35", "23.47", "23.09", "24.21"]
    assert "cycle T_s 112.37 us" in out
    assert "estimate timings" in caplog.text


def test_estimate_json_and_csv(capsys):
    _, out, _ = run(capsys, "estimate", "--config", REF20, "--format", "json")
    doc = json.loads(out)
    assert list(doc["estimation"]["voltages"]) == ["v0L", "v0H", "v1L", "v1H", "v2L", "v2H"]
    assert "timings" not in doc
    _, out, _ = run(capsys, "estimate", "--config", REF20, "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1
    # 17 significant digits round-trip the estimate exactly
    assert float(rows[0]["est_v1L"]) == doc["estimation"]["voltages"]["v1L"]
    assert rows[0]["B_s"] == "113"


def test_single_router_reports_two_voltages(capsys):
    code, out, _ = run(capsys, "estimate", "--config", str(CONFIGS / "single_router.toml"), "--format", "json")
    assert code == 0
    assert list(json.loads(out)["estimation"]["voltages"]) == ["v0L", "v0H"]


def test_overdamped_exits_two_naming_connection(capsys):
    code, out, err = run(capsys, "estimate", "--config", str(CONFIGS / "overdamped.toml"))
    assert code == 2 and out == ""
    assert "ppdn.errors.NotUnderdamped" in err
    assert "connection 0" in err


def test_zero_horizon_is_insufficient(capsys):
    code, _, err = run(capsys, "simulate", "--config", REF20, "--horizon", "0")
    assert code == 2
    assert "InsufficientCycles" in err


def test_io_and_usage_errors_exit_one(capsys, tmp_path):
    assert run(capsys, "estimate", "--config", str(tmp_path / "missing.toml"))[0] == 1
    bad = tmp_path / "bad.toml"
    bad.write_text("[source\n")
    code, _, err = run(capsys, "estimate", "--config", str(bad))
    assert code == 1 and "config error" in err
    assert run(capsys, "estimate")[0] == 1
    assert run(capsys, "sweep", "--config", REF20, "--param", "bogus", "--values", "1")[0] == 1


def test_trace_csv_schema(capsys, tmp_path):
    path = tmp_path / "trace.csv"
    code, _, _ = run(capsys, "simulate", "--config", REF20, "--horizon", "1ms", "--trace-out", str(path),
                     "--decimate", "5")
    assert code == 0
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
        data = np.loadtxt(fh, delimiter=",")
    assert header[0] == "t"
    assert len(header) == 1 + 2 * 3
    assert np.all(np.diff(data[:, 0]) > 0)
    assert data[-1, 0] == pytest.approx(1e-3, abs=1e-6)


def test_compare_twenty_microfarad(capsys):
    code, out, _ = run(capsys, "compare", "--config", REF20)
    assert code == 0
    lines = out.splitlines()
    head = lines.index(next(line for line in lines if "RMSE" in line))
    rmse, v_dif, ts, t01 = lines[head + 1].split()
    assert abs(float(v_dif) - 1.28) <= 0.15 * 1.28
    assert float(ts) == pytest.approx(112.37, rel=0.02)
    assert float(t01) == pytest.approx(11.16, rel=0.02)
    assert float(rmse) < 0.01


def test_unloaded_lossless_stub_has_vanishing_rmse():
    # nothing dissipates and nothing drains, so the gap to the source is the only
    # driver; both paths collapse onto the source voltage as the gap goes to zero
    cfg = reference_config(20e-6, switch_on_resistance=0.0).replace(
        routers=[RouterSpec(20e-6, 0.0) for _ in range(3)], load_resistance=math.inf,
        pulldown_resistance=math.inf, v0_low_target=24.0 * (1 - 1e-6))
    rep = run_report(cfg, simulate=True, horizon=1e-3)
    assert rep.simulation["rmse"] < 1e-6


def test_output_is_byte_identical(capsys):
    outs = [run(capsys, "compare", "--config", REF20, "--horizon", "2ms", "--format", "json")[1] for _ in range(2)]
    assert outs[0] == outs[1]


def test_empty_sweep_is_header_only(capsys):
    code, out, _ = run(capsys, "sweep", "--config", REF20, "--param", "capacitance", "--values", "",
                       "--format", "csv")
    assert code == 0
    assert out.strip() == "param,value,status"


@pytest.mark.slow
def test_capacitance_sweep_trends_and_parallel_determinism(capsys):
    argv = ["sweep", "--config", REF20, "--param", "capacitance", "--values", "1u,10u,20u,40u",
            "--format", "csv"]
    code, serial, _ = run(capsys, *argv)
    assert code == 0
    code, parallel, _ = run(capsys, *argv, "--jobs", "2")
    assert code == 0 and parallel == serial
    rows = list(csv.DictReader(io.StringIO(serial)))
    assert [r["status"] for r in rows] == ["ok"] * 4
    v_dif = [float(r["v_dif"]) for r in rows]
    rmse = [float(r["rmse"]) for r in rows]
    assert v_dif == sorted(v_dif, reverse=True)
    assert rmse == sorted(rmse, reverse=True)


def test_switch_resistance_sweep(capsys):
    reference = np.array([21.60, 22.72, 22.34, 23.47, 23.09, 24.21])
    code, out, _ = run(capsys, "sweep", "--config", REF20, "--param", "switch_on_resistance",
                       "--values", "22m,44m,50m", "--estimate-only", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    names = ["est_v0L", "est_v0H", "est_v1L", "est_v1H", "est_v2L", "est_v2H"]
    err = [np.max(np.abs(np.array([float(r[k]) for k in names]) - reference)) for r in rows]
    assert np.argmin(err) == 1  # 44 mOhm
    assert err[2] < err[0]


def test_sweep_reports_failed_rows(capsys):
    code, out, _ = run(capsys, "sweep", "--config", REF20, "--param", "line_resistance",
                       "--values", "0,10", "--estimate-only", "--format", "csv")
    assert code == 2
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["status"] for r in rows] == ["ok", "NotUnderdamped"]


def test_console_entry_point(tmp_path):
    (tmp_path / "net.toml").write_text(dump_config(reference_config(20e-6)))
    proc = subprocess.run([sys.executable, "-m", "ppdn", "estimate", "--config", str(tmp_path / "net.toml"),
                           "--format", "csv"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("config_sha256,")
