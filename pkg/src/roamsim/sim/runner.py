"""Deterministic fixed-tick runner.

Each device is simulated in two passes. The control pass walks the ticks in
order: position, signals, policy, device state machine, then tunnel path
management and probing. The traffic pass then pushes every packet through
the resulting per-tick link state; for tunnel devices it runs the real frame
codec and both tunnel endpoints in timestamp order.
"""

from __future__ import annotations

import heapq
import itertools
import struct
import zlib
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from ..device import boundary_crossed, initial_state, step
from ..enums import DATA_RATS, RAT, Criticality, Direction, Mode
from ..mobility import MobilityTrace, positions_at
from ..policy.engine import PolicyDecision, apply_hysteresis, first_match
from ..rfenv import RadioNode, SignalSample, best_server_arrays, metric_for
from ..traffic import (
    STALENESS,
    DeliveryRecord,
    FlowClass,
    FlowSpec,
    LinkTimeline,
    deliver,
    send_times,
)
from ..tunnel.endpoints import PathState, SessionState, TunnelClient, TunnelMode, TunnelServer, Verdict, client_select_path, update_congestion
from ..tunnel.codec import FLAG_DUPLICATE, HEADER
from .eventlog import (
    DecisionRecord,
    DeviceLog,
    EventLog,
    FrameRecord,
    PathSwitch,
    SignalRecord,
    canonical_deliveries,
    finite_or_none,
)
from .scenario import DeviceConfig, PolicyConfig, Scenario

SIGNAL_LOG_PERIOD = 0.1  # s, decimation of logged signal samples
_BIT = {RAT.WIFI: 1, RAT.CBRS: 2}
_CODE = {RAT.NONE: 0, RAT.WIFI: 1, RAT.CBRS: 2}
_APP = struct.Struct(">HI")  # flow index, flow sequence number


def n_ticks(duration: float, tick: float) -> int:
    return int(round(duration / tick)) + 1


# -- radio environment along a trace (shared by every seed) ----------------------

@dataclass
class SignalTrack:
    times: np.ndarray
    pos: np.ndarray
    level: dict
    rate: dict
    samples: list
    policy_cache: dict = field(default_factory=dict)


@lru_cache(maxsize=16)
def signal_track(nodes: tuple[RadioNode, ...], model, tables: tuple, trace: MobilityTrace, tick: float,
                 n: int) -> SignalTrack:
    tables = dict(tables)
    times = np.arange(n) * tick
    pos = positions_at(trace, times)
    level, rate, ids = {}, {}, {}
    for rat in DATA_RATS:
        cands, idx, val = best_server_arrays(nodes, pos, rat, model)
        if idx is None:
            level[rat] = np.full(n, -np.inf)
            rate[rat] = np.zeros(n)
            ids[rat] = None
            continue
        bw = np.array([c.bandwidth for c in cands])[idx]
        level[rat] = val
        rate[rat] = tables[metric_for(rat)].rates(val, bw)
        ids[rat] = ([c.id for c in cands], [c.network for c in cands], idx.tolist())
    samples = []
    vals = {r: level[r].tolist() for r in DATA_RATS}
    pts = [tuple(p) for p in pos.tolist()]
    for i in range(n):
        sig = {}
        for rat in DATA_RATS:
            if ids[rat] is None:
                sig[rat] = None
                continue
            names, networks, idx = ids[rat]
            k = idx[i]
            sig[rat] = SignalSample(names[k], metric_for(rat), vals[rat][i], pts[i], networks[k])
        samples.append(sig)
    return SignalTrack(times, pos, level, rate, samples)


def _track_for(scenario: Scenario, dev: DeviceConfig, seed: int) -> SignalTrack:
    env = scenario.environment
    model = env.path_loss
    if model.shadowing_sigma_db > 0:
        model = replace(model, seed=seed)
    return signal_track(env.nodes, model, tuple(sorted(env.rate_tables.items())), dev.trace, scenario.tick,
                        n_ticks(scenario.duration, scenario.tick))


def policy_hints(track: SignalTrack, policy: PolicyConfig, app_class: Criticality) -> list[PolicyDecision]:
    """Per-tick emitted decisions; independent of the seed, so cached on the track."""
    key = (policy, app_class)
    if key not in track.policy_cache:
        out = []
        state = None
        for i, t in enumerate(track.times.tolist()):
            raw = first_match(policy.profile, policy.geofence, track.samples[i], app_class,
                              position=tuple(track.pos[i]))
            decision, state = apply_hysteresis(raw, state, t, app_class, policy.margin_db, policy.dwell_s)
            out.append(decision)
        track.policy_cache[key] = out
    return track.policy_cache[key]


# -- per-device control pass -----------------------------------------------------

@dataclass
class ControlResult:
    cur: np.ndarray  # data-carrying RAT code per tick (native link)
    attached: np.ndarray  # bitmask of attached RATs per tick
    selected: Optional[np.ndarray] = None  # tunnel: bitmask of selected paths per tick
    client: Optional[TunnelClient] = None
    server: Optional[TunnelServer] = None


def _control_pass(dev: DeviceConfig, scenario: Scenario, track: SignalTrack, seed: int, index: int,
                  log: DeviceLog) -> ControlResult:
    profile = scenario.profiles[dev.profile]
    tick = scenario.tick
    n = len(track.times)
    times = track.times.tolist()
    rng = np.random.default_rng([seed & 0xFFFFFFFF, _name_key(dev.name), 0x5CA9])
    cell_phase, wifi_phase, probe_phase = rng.uniform(size=3).tolist()

    tunnel = dev.mode is Mode.TUNNEL
    crit = [f for f in dev.flows if f.criticality is Criticality.CRITICAL]
    app_class = Criticality.CRITICAL if crit else Criticality.NON_CRITICAL
    hints = policy_hints(track, dev.policy, app_class) if dev.policy is not None else None

    samples = track.samples
    hint0 = hints[0].preferred_rat if hints else None
    state, evs = initial_state(profile, samples[0], times[0], policy_hint=hint0,
                               cell_scan_phase=cell_phase, wifi_scan_phase=wifi_phase)
    events = list(evs)
    if not evs:
        log.notes.append((0.0, "no coverage at start"))

    cur = np.zeros(n, dtype=np.int8)
    attached = np.zeros(n, dtype=np.int8)
    res = ControlResult(cur, attached)

    last_decision = None
    mbb = tunnel and scenario.tunnel.mode is not TunnelMode.SINGLE
    if tunnel:
        cfg = scenario.tunnel
        inner = f"10.64.{index // 250}.{index % 250 + 2}"
        session_id = (seed & 0xFFFF) << 16 | index
        client = TunnelClient(session_id, inner, cfg, probe_phase)
        server = TunnelServer(session_id, inner, cfg)
        res.client, res.server = client, server
        res.selected = np.zeros(n, dtype=np.int8)
        load = sum(f.demand for f in crit) or 0.1
        base = {RAT(k): v for k, v in cfg.base_rtt_ms.items()}
        rates = {r: track.rate[r].tolist() for r in DATA_RATS}
        pending: list = []
        probes: list[FrameRecord] = []
        serving = None

    for i in range(n):
        t = times[i]
        decision = hints[i] if hints else None
        hint = decision.preferred_rat if decision is not None else None
        if i:
            state, evs = step(state, profile, samples[i], hint, t, tick, make_before_break=mbb)
            if evs:
                events.extend(evs)
        if decision is not None:
            key = (decision.preferred_rat, decision.reason, decision.scan_request)
            if key != last_decision:
                log.decisions.append(DecisionRecord(t, decision.preferred_rat, decision.reason.value,
                                                    decision.scan_request))
                last_decision = key
        cur[i] = _CODE[state.current_rat]
        mask = 0
        for r in state.usable:
            mask |= _BIT[r]
        attached[i] = mask
        if not tunnel:
            continue

        # tunnel: paths follow the radio links
        paths = client.session.paths
        for r in DATA_RATS:
            if mask & _BIT[r]:
                if r not in paths:
                    client.path_up(r)
            elif r in paths:
                client.path_down(r)
        while pending and pending[0][0] <= t + 1e-12:
            t_arr, _, reply, loss = heapq.heappop(pending)
            client.on_probe_reply(reply, t_arr, loss)
        if i and paths and boundary_crossed(t, tick, cfg.probe_interval, probe_phase) is not None:
            for r in [r for r in DATA_RATS if r in paths]:
                data = client.probe_frame(r, t)
                seq = client.session.next_seq - 1
                rate = rates[r][i]
                if rate > 0:
                    rtt = base[r] * max(1.0, load / rate) / 1000.0
                    loss = max(0.0, 1.0 - rate / load)
                    t_srv = t + rtt / 2
                    _, _, reply = server.receive_ul(data, t_srv)
                    heapq.heappush(pending, (t + rtt, seq, reply, loss))
                    probes.append(FrameRecord(t, Direction.UL, r, seq, False, True, t_srv, session_id))
                    probes.append(FrameRecord(t_srv, Direction.DL, r, seq, False, True, t + rtt, session_id))
                else:
                    probes.append(FrameRecord(t, Direction.UL, r, seq, False, True, None, session_id))
            update_congestion(client.session, hint, cfg)
        if cfg.mode is TunnelMode.SPLIT:
            sel = tuple(client.session.alive_paths())
        else:
            sel = client.select(decision, {r: rates[r][i] for r in DATA_RATS})
        bits = 0
        for r in sel:
            bits |= _BIT[r]
        res.selected[i] = bits
        now_serving = client.session.serving if sel else RAT.NONE
        if now_serving is None:
            now_serving = sel[0]
        if now_serving is not serving:
            log.switches.append(PathSwitch(t, now_serving, client.session.inner_address))
            serving = now_serving

    log.events = events
    if tunnel:
        log.frames.extend(probes)
    return res


# -- traffic pass ------------------------------------------------------------------

def _native_timeline(track: SignalTrack, cur: np.ndarray, tick: float) -> LinkTimeline:
    rates = np.where(cur == 1, track.rate[RAT.WIFI], np.where(cur == 2, track.rate[RAT.CBRS], 0.0))
    return LinkTimeline(0.0, tick, cur, rates)


class _TunnelTraffic:
    """Timestamp-ordered packet processing through both tunnel endpoints."""

    UL, UL_RETRY, UL_ARRIVE, DL, DL_RETRY, DL_ARRIVE = range(6)

    def __init__(self, flows: Sequence[FlowSpec], track: SignalTrack, ctrl: ControlResult, tick: float,
                 flow_seeds: Sequence[int], mode: TunnelMode):
        self.flows = list(flows)
        self.tick = tick
        self.n = len(track.times)
        self.rates = {r: track.rate[r] for r in DATA_RATS}
        self.rate_list = {r: track.rate[r].tolist() for r in DATA_RATS}
        self.attached = ctrl.attached.tolist()
        self.selected = ctrl.selected.tolist()
        self.client, self.server = ctrl.client, ctrl.server
        self.mode = mode
        self.flow_seeds = list(flow_seeds)
        self.frames: list[list] = []
        self.counter = itertools.count()
        self.heap: list = []
        self.pad = {}
        if mode is TunnelMode.SPLIT:
            self.split = SessionState(0, "", TunnelMode.SPLIT)

    def _idx(self, t: float) -> int:
        return min(self.n - 1, int(t / self.tick + 1e-9))

    def _push(self, t, kind, data):
        heapq.heappush(self.heap, (t, next(self.counter), kind, data))

    def _payload(self, k: int, s: int, d: Direction) -> bytes:
        key = (k, d)
        if key not in self.pad:
            self.pad[key] = bytes(max(0, self.flows[k].size(d) - _APP.size))
        return _APP.pack(k, s) + self.pad[key]

    def _select(self, i: int) -> tuple[RAT, ...]:
        bits = self.selected[i]
        if self.mode is TunnelMode.SPLIT and bits == 3:
            self.split.paths = {r: PathState(r) for r in DATA_RATS}
            return client_select_path(self.split, None, {r: self.rate_list[r][i] for r in DATA_RATS})
        return tuple(r for r in DATA_RATS if bits & _BIT[r])

    def _ok(self, i: int, r: RAT, demand: float) -> bool:
        if not self.attached[i] & _BIT[r]:
            return False
        rate = self.rate_list[r][i]
        return rate > 0 and rate >= demand

    def _send(self, data: bytes, r: RAT, t: float, i: int, demand: float, direction: Direction, kind: int):
        _, _, flags, session_id, seq, _, _ = HEADER.unpack_from(data)  # header fields for the log
        ok = self._ok(i, r, demand)
        rec = [t, direction, r, seq, bool(flags & FLAG_DUPLICATE), False, None, session_id]
        self.frames.append(rec)
        if ok:
            arr = t + len(data) * 8 / (self.rate_list[r][i] * 1e6)
            self._push(arr, kind, (data, rec))

    def run(self) -> dict[str, list[DeliveryRecord]]:
        flows = self.flows
        sent = [send_times(f, sd) for f, sd in zip(flows, self.flow_seeds)]
        self.click = [s.tolist() for s in sent]
        self.ul_got: list[dict] = [{} for _ in flows]
        self.dl_got: list[dict] = [{} for _ in flows]
        self.dl_sent: list[dict] = [{} for _ in flows]
        items = []
        for k, f in enumerate(flows):
            for s, t in enumerate(self.click[k]):
                items.append((t, next(self.counter), self.UL, (k, s)))
                if f.cls is FlowClass.LIVE:
                    items.append((t, next(self.counter), self.DL, (k, s)))
        heapq.heapify(items)
        self.heap = items
        client, server = self.client, self.server
        ul_buffer: deque = client.buffer

        while self.heap:
            t, _, kind, data = heapq.heappop(self.heap)
            if kind in (self.UL, self.UL_RETRY):
                k, s = data
                f = flows[k]
                i = self._idx(t)
                rats = self._select(i)
                live = f.cls is FlowClass.LIVE
                if not rats or (not live and not any(self._ok(i, r, f.demand) for r in rats)):
                    if live:
                        client.data_frames(self._payload(k, s, Direction.UL), t, ())
                    elif t - self.click[k][s] <= STALENESS[f.cls] and i + 1 < self.n:
                        self._push((i + 1) * self.tick, self.UL_RETRY, (k, s))
                    continue
                while ul_buffer:
                    payload, _ = ul_buffer.popleft()
                    kb, _sb = _APP.unpack_from(payload)
                    for r, fr in client.data_frames(payload, t, rats):
                        self._send(fr, r, t, i, flows[kb].demand, Direction.UL, self.UL_ARRIVE)
                for r, fr in client.data_frames(self._payload(k, s, Direction.UL), t, rats):
                    self._send(fr, r, t, i, f.demand, Direction.UL, self.UL_ARRIVE)
            elif kind == self.UL_ARRIVE:
                raw, rec = data
                rec[6] = t
                frame, verdict, _ = server.receive_ul(raw, t)
                k, s = _APP.unpack_from(frame.payload)
                f = flows[k]
                if verdict is Verdict.ACCEPT and t - self.click[k][s] <= STALENESS[f.cls]:
                    self.ul_got[k][s] = (t, frame.rat)
                    if f.cls is FlowClass.INTERACTIVE:
                        self.dl_sent[k][s] = t
                        self._dl(t, k, s)
                while server.dl_buffer:
                    payload, _ = server.dl_buffer.popleft()
                    kb, sb = _APP.unpack_from(payload)
                    self._dl(t, kb, sb)
            elif kind in (self.DL, self.DL_RETRY):
                k, s = data
                if kind == self.DL:
                    self.dl_sent[k].setdefault(s, t)
                self._dl(t, k, s)
            elif kind == self.DL_ARRIVE:
                raw, rec = data
                rec[6] = t
                frame, verdict = client.receive(raw)
                k, s = _APP.unpack_from(frame.payload)
                f = flows[k]
                origin = self.click[k][s] if f.cls is FlowClass.INTERACTIVE else self.dl_sent[k][s]
                if verdict is Verdict.ACCEPT and t - origin <= STALENESS[f.cls]:
                    self.dl_got[k][s] = (t, frame.rat)
        return self._records()

    def _dl(self, t: float, k: int, s: int):
        f = self.flows[k]
        i = self._idx(t)
        server = self.server
        rat = server.session.last_ul_rat
        payload = self._payload(k, s, Direction.DL)
        if rat is None:
            server.route_dl(payload, t)  # parked until the first UL frame
            return
        if f.cls is not FlowClass.LIVE and not self._ok(i, rat, f.demand):
            if t - self.click[k][s] <= STALENESS[f.cls] and i + 1 < self.n:
                self._push((i + 1) * self.tick, self.DL_RETRY, (k, s))
            return
        rat, fr = server.route_dl(payload, t)
        self._send(fr, rat, t, i, f.demand, Direction.DL, self.DL_ARRIVE)

    def _records(self) -> dict[str, list[DeliveryRecord]]:
        out = {}
        for k, f in enumerate(self.flows):
            recs = []
            for s, t in enumerate(self.click[k]):
                got = self.ul_got[k].get(s)
                recs.append(DeliveryRecord(s, t, got[0] if got else None, Direction.UL,
                                           got[1] if got else RAT.NONE))
            dl_seqs = range(len(self.click[k])) if f.cls is FlowClass.LIVE else sorted(self.ul_got[k])
            for s in dl_seqs:
                got = self.dl_got[k].get(s)
                t0 = self.dl_sent[k].get(s, self.click[k][s])
                recs.append(DeliveryRecord(s, t0, got[0] if got else None, Direction.DL,
                                           got[1] if got else RAT.NONE))
            out[f.id] = recs
        return out

    def frame_records(self) -> list[FrameRecord]:
        return [FrameRecord(*r) for r in self.frames]


# -- public API ----------------------------------------------------------------------

def run_device(scenario: Scenario, index: int, seed: int) -> DeviceLog:
    dev = scenario.devices[index]
    profile = scenario.profiles[dev.profile]
    track = _track_for(scenario, dev, seed)
    log = DeviceLog(dev.name, dev.profile, dev.mode, profile.supports_tunnel_client, list(dev.flows))
    if dev.mode is Mode.TUNNEL and not profile.supports_tunnel_client:
        log.notes.append((0.0, "profile lacks tunnel client support; running traditional"))
        dev = replace(dev, mode=Mode.TRADITIONAL, policy=None)
    ctrl = _control_pass(dev, scenario, track, seed, index, log)

    native = _native_timeline(track, ctrl.cur, scenario.tick)
    tunneled = [f for f in dev.flows if dev.mode is Mode.TUNNEL and f.criticality is Criticality.CRITICAL]
    for f in dev.flows:
        if f not in tunneled:
            log.deliveries[f.id] = canonical_deliveries(deliver(f, native, _flow_seed(seed, dev.name, f.id)))
    if tunneled:
        # flow seeds follow the device's flow list so both modes see identical send times
        seeds = [_flow_seed(seed, dev.name, f.id) for f in tunneled]
        tt = _TunnelTraffic(tunneled, track, ctrl, scenario.tick, seeds, scenario.tunnel.mode)
        recs = tt.run()
        for f in tunneled:
            log.deliveries[f.id] = canonical_deliveries(recs[f.id])
        log.frames.extend(tt.frame_records())
    log.frames.sort(key=lambda r: r.t)
    log.deliveries = {f.id: log.deliveries[f.id] for f in dev.flows}

    step_n = max(1, int(round(SIGNAL_LOG_PERIOD / scenario.tick)))
    lw, lc = track.level[RAT.WIFI], track.level[RAT.CBRS]
    rw, rc = track.rate[RAT.WIFI], track.rate[RAT.CBRS]
    for i in range(0, len(track.times), step_n):
        log.signals.append(SignalRecord(float(track.times[i]), float(track.pos[i, 0]), float(track.pos[i, 1]),
                                        finite_or_none(lw[i]), finite_or_none(lc[i]), float(rw[i]),
                                        float(rc[i])))
    return log


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode())


def _flow_seed(seed: int, device: str, flow: str) -> int:
    """Random streams are keyed by names, so a device sees the same draws in any scenario."""
    return zlib.crc32(f"{device}/{flow}".encode(), seed & 0xFFFFFFFF)


def run_log(scenario: Scenario, seed: int) -> EventLog:
    log = EventLog(scenario.name, seed, scenario.tick)
    for i in range(len(scenario.devices)):
        log.devices.append(run_device(scenario, i, seed))
    return log


def run(scenario: Scenario, seed: Optional[int] = None):
    """Simulate every device of ``scenario``. Returns ``(EventLog, Report)``."""
    from .report import build_report

    seed = scenario.seed if seed is None else seed
    log = run_log(scenario, seed)
    return log, build_report([log])


def _run_log_job(args) -> EventLog:
    scenario, seed = args
    return run_log(scenario, seed)


def iter_logs(scenario: Scenario, seeds: Sequence[int], jobs: int = 1):
    """Event logs for ``seeds`` in order; runs may fan out over ``jobs`` processes."""
    if jobs <= 1 or len(seeds) <= 1:
        for s in seeds:
            yield run_log(scenario, s)
        return
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(_run_log_job, [(scenario, s) for s in seeds])


def compare(scenario: Scenario, seeds: Sequence[int], jobs: int = 1, sink=None):
    """Run TRADITIONAL and TUNNEL variants of ``scenario`` over ``seeds``.

    Devices without a tunnel client only appear in the traditional rows.
    ``sink(mode, log)`` is called with every log before it is dropped.
    """
    from .report import build_report

    def logs():
        for mode in (Mode.TRADITIONAL, Mode.TUNNEL):
            variant = scenario.with_mode(mode)
            for log in iter_logs(variant, list(seeds), jobs):
                if sink is not None:
                    sink(mode, log)
                yield log

    return build_report(logs())
