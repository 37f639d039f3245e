import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roamsim.enums import RAT, Direction
from roamsim.policy.engine import PolicyDecision, Reason
from roamsim.tunnel import codec
from roamsim.tunnel.endpoints import (
    PathState,
    ReplayWindow,
    SessionState,
    TunnelClient,
    TunnelConfig,
    TunnelMode,
    TunnelServer,
    Verdict,
    client_select_path,
    update_congestion,
)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3000), max_size=400), st.integers(1, 256))
def test_replay_window_matches_set_oracle(seqs, size):
    w = ReplayWindow(size)
    seen, highest = set(), -1
    for s in seqs:
        if s < highest - size + 1:
            want = Verdict.STALE
        elif s in seen:
            want = Verdict.DUPLICATE
        else:
            want = Verdict.ACCEPT
            seen.add(s)
            highest = max(highest, s)
        assert w.check(s) is want


def live_client(**cfg):
    c = TunnelClient(7, "10.64.0.2", TunnelConfig(**cfg))
    for r in (RAT.WIFI, RAT.CBRS):
        c.path_up(r)
    return c


def ack(c, rat, t, rtt):
    srv = TunnelServer(7, "10.64.0.2")
    _, _, reply = srv.receive_ul(c.probe_frame(rat, t), t)
    c.on_probe_reply(reply, t + rtt / 1000)


def test_path_dies_after_missed_probes():
    c = live_client(dead_after=3)
    ack(c, RAT.WIFI, 0.0, 10)
    for k in range(3):
        c.probe_frame(RAT.WIFI, 0.25 * (k + 1))
    assert c.session.paths[RAT.WIFI].alive
    c.probe_frame(RAT.WIFI, 1.0)  # third unanswered probe recorded
    assert not c.session.paths[RAT.WIFI].alive
    assert c.session.alive_paths() == [RAT.CBRS]


def test_congestion_switch_needs_consecutive_rounds():
    cfg = TunnelConfig(switch_ratio=1.5, switch_rounds=2)
    c = live_client()
    s = c.session
    s.serving = RAT.WIFI
    ack(c, RAT.WIFI, 0.0, 100)
    ack(c, RAT.CBRS, 0.0, 20)
    assert update_congestion(s, RAT.WIFI, cfg) is None
    assert update_congestion(s, RAT.WIFI, cfg) is RAT.CBRS
    assert s.serving is RAT.CBRS
    # the override sticks while the policy answer is unchanged
    hint = PolicyDecision(RAT.WIFI, Reason.PRIORITY_LIST)
    assert client_select_path(s, hint, {}) == (RAT.CBRS,)
    # and is dropped once the policy answer changes
    assert client_select_path(s, PolicyDecision(RAT.CBRS, Reason.GEOFENCE), {}) == (RAT.CBRS,)
    assert s.congestion_override is None


def test_congestion_counter_resets():
    cfg = TunnelConfig()
    c = live_client()
    s = c.session
    s.serving = RAT.WIFI
    ack(c, RAT.WIFI, 0.0, 100)
    ack(c, RAT.CBRS, 0.0, 20)
    update_congestion(s, RAT.WIFI, cfg)
    for _ in range(10):
        ack(c, RAT.WIFI, 1.0, 1)
    assert update_congestion(s, RAT.WIFI, cfg) is None
    assert s.over_rounds == 0


def test_duplicate_mode_uses_both_paths_with_one_seq():
    c = live_client(mode="DUPLICATE")
    rats = c.select(None, {})
    assert rats == (RAT.WIFI, RAT.CBRS)
    out = c.data_frames(b"hello", 1.0, rats)
    frames = [codec.decode_frame(b) for _, b in out]
    assert {f.seq for f in frames} == {frames[0].seq}
    assert all(f.duplicate for f in frames)
    srv = TunnelServer(7, "10.64.0.2")
    verdicts = [srv.receive_ul(b, 1.0)[1] for _, b in out]
    assert verdicts == [Verdict.ACCEPT, Verdict.DUPLICATE]


def test_split_mode_weights_by_rate():
    s = SessionState(1, "10.64.0.2", TunnelMode.SPLIT)
    s.paths = {RAT.WIFI: PathState(RAT.WIFI), RAT.CBRS: PathState(RAT.CBRS)}
    picks = [client_select_path(s, None, {RAT.WIFI: 30.0, RAT.CBRS: 10.0})[0] for _ in range(400)]
    assert picks.count(RAT.WIFI) == 300


def test_downlink_reflects_last_uplink_rat():
    c = live_client()
    srv = TunnelServer(7, "10.64.0.2")
    assert srv.route_dl(b"early", 0.0) is None
    assert len(srv.dl_buffer) == 1
    for t, rat in ((0.1, RAT.WIFI), (0.2, RAT.CBRS), (0.3, RAT.WIFI)):
        (_, data), = c.data_frames(b"x", t, (rat,))
        srv.receive_ul(data, t)
        got_rat, frame = srv.route_dl(b"resp", t)
        assert got_rat is rat
        f = codec.decode_frame(frame)
        assert f.rat is rat and f.direction is Direction.DL


def test_probe_replies_do_not_move_the_dl_path():
    c = live_client()
    srv = TunnelServer(7, "10.64.0.2")
    (_, data), = c.data_frames(b"x", 0.1, (RAT.CBRS,))
    srv.receive_ul(data, 0.1)
    srv.receive_ul(c.probe_frame(RAT.WIFI, 0.2), 0.2)
    assert srv.route_dl(b"y", 0.3)[0] is RAT.CBRS


def test_client_buffer_keeps_newest_frames():
    c = live_client(buffer_frames=64)
    for k in range(100):
        assert c.data_frames(bytes([k % 256]), k * 0.02, ()) == []
    assert len(c.buffer) == 64
    assert c.dropped_from_buffer == 36
    assert c.buffer[0][0] == bytes([36])


def test_inner_address_is_fixed():
    s = SessionState(1, "10.64.0.9")
    with pytest.raises(AttributeError):
        s.inner_address = "10.0.0.1"


def test_config_validation():
    with pytest.raises(ValueError):
        TunnelConfig(probe_interval=0)
    with pytest.raises(ValueError):
        TunnelConfig(switch_ratio=0.5)
