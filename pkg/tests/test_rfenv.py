import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roamsim.enums import RAT
from roamsim.mobility import MobilityTrace
from roamsim.rfenv import (
    BEYOND_PATH_END,
    DEFAULT_RATE_TABLES,
    InvalidArgument,
    PathLossModel,
    RadioNode,
    RateTable,
    best_server,
    coverage_edge,
    link_rate,
    signal_at,
    signal_values,
    validate_nodes,
)


def wifi(id="w", pos=(0, 0), tx=20.0):
    return RadioNode(id, RAT.WIFI, pos, tx)


def log_distance(tx, d, l0=40.0, n=3.0):
    return tx - l0 - 10 * n * math.log10(d)


@settings(max_examples=80, deadline=None)
@given(st.floats(1, 300), st.floats(0, 2 * math.pi), st.floats(-10, 30), st.floats(2, 4))
def test_free_space_matches_log_distance(d, ang, tx, n):
    model = PathLossModel(exponent=n)
    node = wifi(tx=tx)
    pt = (d * math.cos(ang), d * math.sin(ang))
    assert signal_at(node, pt, model).value == pytest.approx(log_distance(tx, d, n=n), abs=1e-9)


def test_level_never_exceeds_tx_power():
    model = PathLossModel(reference_loss_db=0.0)
    assert signal_at(wifi(tx=10), (0.0, 0.0), model).value <= 10


def test_each_wall_costs_penetration_loss():
    box = ((0, 0), (10, 0), (10, 10), (0, 10))
    model = PathLossModel(buildings=(box,), wall_penetration_db=7.0)
    inside = wifi(pos=(5, 5))
    out = signal_values(inside, [(25, 5)], model)[0]
    assert out == pytest.approx(log_distance(20, 20) - 7.0)
    # passing straight through the building crosses two walls
    outside = wifi(pos=(-10, 5))
    through = signal_values(outside, [(20, 5)], model)[0]
    assert through == pytest.approx(log_distance(20, 30) - 14.0)


def test_shadowing_is_deterministic_and_seeded():
    node = wifi()
    pts = np.array([[10.2, 3.3], [40.0, 5.0], [10.7, 3.9]])
    a = signal_values(node, pts, PathLossModel(shadowing_sigma_db=6, seed=1))
    b = signal_values(node, pts, PathLossModel(shadowing_sigma_db=6, seed=1))
    c = signal_values(node, pts, PathLossModel(shadowing_sigma_db=6, seed=2))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # same 1 m cell, same shadowing offset
    base = signal_values(node, pts, PathLossModel())
    off = a - base
    assert off[0] == pytest.approx(off[2])


def test_shadowing_statistics():
    node = wifi()
    xs = np.arange(2000) + 0.5
    pts = np.column_stack([xs, np.full_like(xs, 7.5)])
    model = PathLossModel(shadowing_sigma_db=8.0, seed=3)
    off = signal_values(node, pts, model) - signal_values(node, pts, PathLossModel())
    assert abs(off.mean()) < 0.6
    assert off.std() == pytest.approx(8.0, rel=0.1)


def test_best_server_ties_pick_smallest_id():
    nodes = [wifi("b", (10, 0)), wifi("a", (-10, 0))]
    node, sample = best_server(nodes, (0, 0), RAT.WIFI, PathLossModel())
    assert node.id == "a"
    assert best_server(nodes, (0, 0), RAT.CBRS, PathLossModel()) is None


def test_invalid_inputs():
    with pytest.raises(InvalidArgument):
        PathLossModel(exponent=1.0)
    with pytest.raises(InvalidArgument):
        signal_at(wifi(), (math.nan, 0), PathLossModel())
    with pytest.raises(InvalidArgument):
        RadioNode("c", RAT.CBRS, (0, 0), 0, bandwidth=60, pci=1)
    a = RadioNode("c1", RAT.CBRS, (0, 0), 0, bandwidth=40, pci=7)
    b = RadioNode("c2", RAT.CBRS, (5, 0), 0, bandwidth=40, pci=7)
    with pytest.raises(InvalidArgument):
        validate_nodes([a, b])
    with pytest.raises(InvalidArgument):
        validate_nodes([wifi("x"), wifi("x")])


def test_rate_table_steps():
    t = DEFAULT_RATE_TABLES["RSSI"]
    assert t.rate(-91, 20) == 0
    assert t.rate(-90, 20) == 0.5
    assert t.rate(-89, 20) == 0.5
    assert t.rate(-64, 20) == 54
    assert np.array_equal(t.rates(np.array([-91.0, -86.0, -60.0]), 20), [0, 2, 54])
    with pytest.raises(InvalidArgument):
        RateTable(((-80, 5), (-90, 1)))


def test_cbrs_carrier_aggregation_doubles_rate():
    cell = RadioNode("c", RAT.CBRS, (0, 0), 4, bandwidth=40, pci=1)
    s = signal_at(cell, (50, 0), PathLossModel())
    single = DEFAULT_RATE_TABLES["RSRP"].rate(s.value, 20)
    assert link_rate(s, cell.bandwidth) == pytest.approx(2 * single)


@settings(max_examples=40, deadline=None)
@given(st.floats(5, 30), st.floats(-95, -70))
def test_coverage_edge_closed_form(tx, thr):
    # single node at the origin, walk along +x: the edge solves the
    # log-distance equation for the threshold
    model = PathLossModel()
    node = wifi(tx=tx)
    d_edge = 10 ** ((tx - 40 - thr) / 30)
    end = d_edge + 50
    path = MobilityTrace(((1.0, 0.0), (end, 0.0)))
    s = coverage_edge([node], path, RAT.WIFI, thr, model, step=0.25)
    assert s + 1.0 == pytest.approx(d_edge, abs=0.25 + 1e-6)


def test_coverage_edge_beyond_path_and_bad_input():
    model = PathLossModel()
    path = MobilityTrace(((1, 0), (5, 0)))
    assert coverage_edge([wifi()], path, RAT.WIFI, -100, model) == BEYOND_PATH_END
    with pytest.raises(InvalidArgument):
        coverage_edge([wifi()], path, RAT.WIFI, -100, model, step=2.0)


def test_default_walk_leaves_wifi_before_cbrs(default_scenario):
    env = default_scenario.environment
    trace = default_scenario.devices[0].trace
    outbound = MobilityTrace(trace.waypoints[:2], trace.speed)
    wifi = coverage_edge(env.nodes_of(RAT.WIFI), outbound, RAT.WIFI, -90.0, env.path_loss)
    cbrs = coverage_edge(env.nodes_of(RAT.CBRS), outbound, RAT.CBRS, -110.0, env.path_loss)
    assert wifi != BEYOND_PATH_END
    assert cbrs == BEYOND_PATH_END or cbrs > wifi


def test_threshold_above_tx_power_gives_zero_edge():
    path = MobilityTrace(((1, 0), (20, 0)))
    assert coverage_edge([wifi(tx=10)], path, RAT.WIFI, 11.0, PathLossModel()) == 0.0
