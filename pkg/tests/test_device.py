import math

import numpy as np

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roamsim.device import (
    CELL_LINK_FLOOR,
    MBB_OVERLAP,
    ConnectionEvent,
    DeviceProfile,
    EventKind,
    Phase,
    initial_state,
    step,
    switch_intervals,
)
from roamsim.enums import RAT
from roamsim.rfenv import SignalSample

TICK = 0.01


def sig(wifi=None, cbrs=None):
    out = {}
    if wifi is not None:
        out[RAT.WIFI] = SignalSample("w1", "RSSI", wifi, (0, 0))
    if cbrs is not None:
        out[RAT.CBRS] = SignalSample("c1", "RSRP", cbrs, (0, 0))
    return out


def run(profile, level_at, until, hint=None, mbb=False):
    """Drive the state machine with ``level_at(t) -> signals``."""
    state, events = initial_state(profile, level_at(0.0))
    for k in range(1, int(round(until / TICK)) + 1):
        t = round(k * TICK, 10)
        h = hint(t) if callable(hint) else hint
        state, ev = step(state, profile, level_at(t), h, t, TICK, make_before_break=mbb)
        events += ev
    return state, events


def fading_wifi(t_cross, cbrs=-90.0):
    # Wi-Fi sits at -70 then drops to -95 at t_cross; CBRS always present
    return lambda t: sig(wifi=-70.0 if t < t_cross else -95.0, cbrs=cbrs)


def oracle_break_before_make(p, t_cross):
    """Independent replay of the traditional Wi-Fi -> CBRS sequence."""
    # first tick at or after the drop, then the hold timer
    k0 = math.ceil(t_cross / TICK - 1e-9)
    t_det = (k0 + round(p.wifi_disconnect_hold / TICK)) * TICK
    # scanning begins on the tick after the detach
    k = 0
    while k * p.cell_scan_interval <= t_det + 1e-9:
        k += 1
    b = k * p.cell_scan_interval
    done = b + p.cell_attach_delay
    t_att = math.ceil(done / TICK - 1e-9) * TICK
    # the attach cannot complete on the tick that started it
    t_start = math.ceil(b / TICK - 1e-9) * TICK
    t_att = max(t_att, t_start + TICK)
    return t_det, t_att


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 8.0), st.sampled_from([0.5, 1.0, 2.0]), st.floats(0.0, 3.0), st.floats(0.0, 2.0))
def test_break_before_make_matches_replay(t_cross, scan, delay, hold):
    t_cross = round(t_cross, 2)
    p = DeviceProfile("m", cell_scan_interval=scan, cell_attach_delay=round(delay, 2),
                      wifi_disconnect_hold=round(hold, 2))
    _, events = run(p, fading_wifi(t_cross), t_cross + hold + scan + delay + 1)
    det = [e for e in events if e.kind is EventKind.DETACHED]
    att = [e for e in events if e.kind is EventKind.ATTACHED and e.rat is RAT.CBRS]
    t_det, t_att = oracle_break_before_make(p, t_cross)
    assert det[0].t == pytest.approx(t_det, abs=1e-6)
    assert att[0].t == pytest.approx(t_att, abs=1e-6)
    (tr,) = switch_intervals(events)
    assert (tr.from_rat, tr.to_rat) == (RAT.WIFI, RAT.CBRS)
    assert tr.gap_duration == pytest.approx(t_att - t_det, abs=1e-6)


def test_short_dip_below_threshold_does_not_detach():
    p = DeviceProfile("m", wifi_disconnect_hold=1.0)
    dip = lambda t: sig(wifi=-95.0 if 2.0 <= t < 2.9 else -70.0, cbrs=-90.0)
    state, events = run(p, dip, 6.0)
    assert state.current_rat is RAT.WIFI
    assert [e.kind for e in events] == [EventKind.ATTACHED]


def test_oscillating_signal_never_detaches():
    # dips shorter than the hold time, forever
    p = DeviceProfile("m", wifi_disconnect_hold=1.0)
    osc = lambda t: sig(wifi=-95.0 if (t % 1.5) >= 0.8 else -70.0, cbrs=-90.0)
    state, events = run(p, osc, 30.0)
    assert state.current_rat is RAT.WIFI
    assert not any(e.kind is EventKind.DETACHED for e in events)


def test_return_to_wifi_is_break_before_make():
    p = DeviceProfile("m", wifi_scan_interval=2.0, wifi_attach_delay=0.5)
    state, _ = initial_state(p, sig(wifi=-95.0, cbrs=-90.0))
    assert state.current_rat is RAT.CBRS
    events = []
    for k in range(1, 500):
        t = round(k * TICK, 10)
        state, ev = step(state, p, sig(wifi=-60.0, cbrs=-90.0), None, t, TICK)
        events += ev
    kinds = [(e.kind, e.rat) for e in events]
    assert kinds == [(EventKind.DETACHED, RAT.CBRS), (EventKind.ATTACHED, RAT.WIFI)]
    assert events[0].t == pytest.approx(2.0)
    assert events[1].t == pytest.approx(2.5)


def test_make_before_break_keeps_old_rat_for_overlap():
    p = DeviceProfile("m", cell_attach_delay=1.0)
    state, events = run(p, lambda t: sig(wifi=-70.0, cbrs=-90.0), 4.0,
                        hint=lambda t: RAT.CBRS if t >= 1.0 else RAT.WIFI, mbb=True)
    assert state.current_rat is RAT.CBRS
    att = next(e for e in events if e.kind is EventKind.ATTACHED and e.rat is RAT.CBRS)
    det = next(e for e in events if e.kind is EventKind.DETACHED)
    assert att.t == pytest.approx(2.0)
    assert det.rat is RAT.WIFI and det.t == pytest.approx(att.t + MBB_OVERLAP)
    (tr,) = switch_intervals(events)
    assert tr.gap_duration == 0.0


def test_mbb_usable_during_attach():
    p = DeviceProfile("m", cell_attach_delay=1.0)
    state, _ = initial_state(p, sig(wifi=-70.0, cbrs=-90.0))
    state, _ = step(state, p, sig(wifi=-70.0, cbrs=-90.0), RAT.CBRS, TICK, TICK, make_before_break=True)
    assert state.phase is Phase.ATTACHING
    assert state.usable == (RAT.WIFI,)


def test_attach_aborts_when_target_vanishes():
    p = DeviceProfile("m", cell_attach_delay=2.0)
    state, _ = initial_state(p, sig(cbrs=-100.0))
    state, _ = step(state, p, sig(cbrs=CELL_LINK_FLOOR - 5), None, TICK, TICK)
    assert state.current_rat is RAT.NONE


def test_open_transition_when_nothing_returns():
    events = [ConnectionEvent(0.0, EventKind.ATTACHED, RAT.WIFI),
              ConnectionEvent(5.0, EventKind.DETACHED, RAT.WIFI)]
    (tr,) = switch_intervals(events)
    assert tr.open and tr.to_rat is RAT.NONE and tr.gap_duration is None


def test_profile_validation():
    with pytest.raises(ValueError):
        DeviceProfile("m", wifi_attach_rssi=-90, wifi_disconnect_rssi=-88)
    with pytest.raises(ValueError):
        DeviceProfile("m", cell_attach_delay=-1)
    with pytest.raises(ValueError):
        DeviceProfile("m", cell_scan_interval=0)
    with pytest.raises(ValueError):
        step(initial_state(DeviceProfile("m"), {})[0], DeviceProfile("m"), {}, None, 1.0, 0.0)


def test_gap_bounds_over_all_scan_phases():
    # hold 2 s, scan every 4 s, attach 1 s: from the threshold crossing to the
    # CBRS attach takes hold + scan residual + delay, i.e. somewhere in [3, 7] s
    p = DeviceProfile("m", wifi_disconnect_hold=2.0, cell_scan_interval=4.0, cell_attach_delay=1.0)
    t0 = 5.0
    seen = []
    for phase in np.linspace(0, 1, 41, endpoint=False):
        state, _ = initial_state(p, sig(wifi=-70.0, cbrs=-90.0), cell_scan_phase=float(phase))
        events = []
        for k in range(1, 1600):
            t = round(k * TICK, 10)
            state, ev = step(state, p, fading_wifi(t0)(t), None, t, TICK)
            events += ev
        att = next(e.t for e in events if e.kind is EventKind.ATTACHED and e.rat is RAT.CBRS)
        det = next(e.t for e in events if e.kind is EventKind.DETACHED)
        # replay: first boundary (k + phase) * 4 after the detach tick
        b = (math.floor(det / 4.0 - phase + 1e-9) + 1 + phase) * 4.0
        want = math.ceil((b + 1.0) / TICK - 1e-9) * TICK
        assert att == pytest.approx(max(want, math.ceil(b / TICK - 1e-9) * TICK + TICK), abs=1e-6)
        seen.append(att - t0)
    assert 3.0 - 1e-6 <= min(seen) and max(seen) <= 7.0 + TICK
    assert max(seen) - min(seen) > 3.5


@settings(max_examples=30, deadline=None)
@given(st.floats(-110, -60), st.booleans())
def test_single_covered_rat_stays_connected(level, wifi_only):
    # only one RAT above its attach threshold for the whole walk
    p = DeviceProfile("m")
    if wifi_only:
        level = max(level, p.wifi_attach_rssi)
        signals = lambda t: sig(wifi=level)
        rat = RAT.WIFI
    else:
        level = max(level, p.cell_attach_rsrp)
        signals = lambda t: sig(cbrs=level)
        rat = RAT.CBRS
    state, events = run(p, signals, 20.0)
    assert state.current_rat is rat and state.phase is Phase.CONNECTED
    assert not any(e.kind is EventKind.DETACHED for e in events)
