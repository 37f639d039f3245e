import csv
import io
import json

import pytest

from roamsim.cli import main


def test_validate_default(capsys):
    assert main(["validate-config"]) == 0
    assert "ok (7 devices" in capsys.readouterr().out


def test_validate_bad_file_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("name: x\ntick: -1\n")
    assert main(["validate-config", str(p)]) == 2
    assert f"{p}:2:" in capsys.readouterr().err


def test_gen_profile_out_of_range(tmp_path, capsys):
    p = tmp_path / "p.txt"
    p.write_text("[WWAN]\nCelonaPrivate,-157\n")
    assert main(["gen-profile", str(p)]) == 2
    err = capsys.readouterr().err
    assert "[-156,-31]" in err and "line 2" in err


def test_gen_profile_payload(tmp_path, capsys):
    p = tmp_path / "p.txt"
    p.write_text("# x\n[WWAN]\nCelonaPrivate,-110\n")
    assert main(["gen-profile", str(p), "--payload"]) == 0
    assert capsys.readouterr().out == "RPP1:[WWAN];CelonaPrivate,-110\n"


def test_unknown_flag_is_usage_error(capsys):
    assert main(["run", "--frobnicate"]) == 64
    assert main([]) == 64


def test_geofence_check(capsys):
    assert main(["geofence-check", "--point", "120,20", "--point", "10,10"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["120,20\tinside", "10,10\toutside"]


def test_run_writes_artifacts(tmp_path, capsys):
    assert main(["run", "--seed", "4", "--output-dir", str(tmp_path), "--format", "csv"]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"events-seed4.jsonl", "report.csv", "rebuffer.csv", "throughput.csv", "report.txt"} <= names
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert {r["device"] for r in rows} == {f"model-{k}" for k in range(1, 8)}
    first = json.loads((tmp_path / "events-seed4.jsonl").read_text().splitlines()[0])
    assert first["type"] == "run" and first["seed"] == 4
    # report rebuilt from the stored log matches
    (tmp_path / "again").mkdir()
    assert main(["report", str(tmp_path / "events-seed4.jsonl"), "--output-dir", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "report.csv").read_text() == (tmp_path / "report.csv").read_text()


def test_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ROAMSIM_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", "--seed", "1", "--scenario", str(_tiny(tmp_path))]) == 0
    assert (tmp_path / "env" / "report.csv").exists()


def test_compare_rows(tmp_path, capsys):
    assert main(["compare", "--seed", "1", "--output-dir", str(tmp_path), "--format", "csv"]) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "compare.csv").read_text())))
    modes = [r["mode"] for r in rows]
    assert modes.count("TRADITIONAL") == 7 and modes.count("TUNNEL") == 6


def test_calibrate_failure_exit_code(tmp_path, capsys):
    t = tmp_path / "targets.yaml"
    t.write_text("Impossible: {wifi_to_cbrs: 40, cbrs_to_wifi: 0}\n")
    code = main(["calibrate", "--targets", str(t), "--seed", "1", "--output-dir", str(tmp_path)])
    assert code == 3
    assert (tmp_path / "calibration.txt").read_text().startswith("Impossible: FAIL")


def _tiny(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text("""\
name: tiny
duration: 40
environment:
  nodes:
    - {id: w, rat: WIFI, position: [0, 0], tx_power: 17, network: Celona}
    - {id: c, rat: CBRS, position: [20, 0], tx_power: 4, bandwidth: 20, pci: 1, network: CelonaPrivate}
profiles:
  Phone: {}
mobility:
  waypoints: [[0, 0, 0], [50, 0, 0]]
flows:
  shop: {class: INTERACTIVE}
devices:
  - {name: a, profile: Phone, flows: [shop]}
""")
    return p
