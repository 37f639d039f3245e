from dataclasses import replace

import pytest

from invariants import dl_reflection_violations, inner_addresses, sessions
from roamsim.enums import RAT, Direction, Mode
from roamsim.sim import EventLog, run, run_device, run_log
from roamsim.sim.report import CBRS_TO_WIFI, WIFI_TO_CBRS, build_report
from roamsim.sim.runner import compare


@pytest.fixture(scope="module")
def one_device(default_scenario):
    sc = default_scenario
    return replace(sc, devices=(sc.devices[0],))


@pytest.fixture(scope="module")
def tunnel_log(one_device):
    return run_log(one_device.with_mode(Mode.TUNNEL), 3)


def test_empty_scenario_gives_empty_report(default_scenario):
    log, report = run(replace(default_scenario, devices=()))
    assert log.devices == [] and report.rows == [] and report.rebuffer == []
    assert EventLog.from_lines(log.lines()) == log


def test_same_seed_same_bytes(one_device):
    a = run_log(one_device, 5).dumps()
    assert a == run_log(one_device, 5).dumps()
    assert a != run_log(one_device, 6).dumps()


def test_log_round_trip_gives_same_report(tunnel_log):
    parsed = EventLog.from_lines(tunnel_log.dumps().splitlines())
    assert parsed == tunnel_log
    assert build_report([parsed]) == build_report([tunnel_log])


def test_log_timestamps_non_decreasing(tunnel_log):
    ts = [r["t"] for r in tunnel_log.records()]
    assert all(a <= b for a, b in zip(ts, ts[1:]))


def test_downlink_follows_uplink_rat(tunnel_log):
    dev = tunnel_log.devices[0]
    dl = [f for f in dev.frames if f.direction is Direction.DL and not f.probe]
    assert len(dl) > 1000
    assert {f.rat for f in dl} == {RAT.WIFI, RAT.CBRS}
    assert dl_reflection_violations(dev) == []


def test_inner_address_survives_rat_changes(tunnel_log):
    dev = tunnel_log.devices[0]
    assert len({s.rat for s in dev.switches}) >= 2
    assert inner_addresses(dev) == {"10.64.0.2"}
    assert len(sessions(dev)) == 1


def test_no_tunnel_client_falls_back(default_scenario):
    sc = default_scenario
    assert "Model 7" not in {d.profile for d in sc.with_mode(Mode.TUNNEL).devices}
    idx = next(i for i, d in enumerate(sc.devices) if d.profile == "Model 7")
    forced = replace(sc.devices[idx], mode=Mode.TUNNEL, policy=sc.policy)
    dev = run_device(replace(sc, devices=(forced,)), 0, 1)
    assert dev.mode is Mode.TUNNEL
    assert dev.frames == [] and dev.switches == []
    assert any("tunnel" in msg for _, msg in dev.notes)


def test_single_seed_single_device_table_has_four_cells(one_device):
    report = compare(one_device, [2])
    assert report.cells("zoom") == 4
    table = report.table("zoom")
    assert "TRADITIONAL" in table and "TUNNEL" in table
    trad = report.row(one_device.devices[0].name, "zoom", WIFI_TO_CBRS, Mode.TRADITIONAL)
    tun = report.row(one_device.devices[0].name, "zoom", WIFI_TO_CBRS, Mode.TUNNEL)
    assert tun.gap.mean < trad.gap.mean
    assert report.find(one_device.devices[0].name, "zoom", CBRS_TO_WIFI, Mode.TUNNEL) is not None


def test_reports_only_need_the_log(tunnel_log, tmp_path):
    p = tmp_path / "events.jsonl"
    p.write_text(tunnel_log.dumps())
    with open(p) as fh:
        again = EventLog.from_lines(fh)
    assert build_report([again]).to_csv() == build_report([tunnel_log]).to_csv()
