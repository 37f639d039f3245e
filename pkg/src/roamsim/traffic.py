"""Synthetic application flows, delivery over a link, interruption metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .enums import RAT, Criticality, Direction

SEAMLESS_THRESHOLD = 0.5  # s
WINDOW_BEFORE = 1.0  # s before detach
WINDOW_AFTER = 5.0  # s after attach


class FlowClass(str, Enum):
    LIVE = "LIVE"
    INTERACTIVE = "INTERACTIVE"
    BUFFERED = "BUFFERED"


# LIVE packets are useless late; INTERACTIVE requests time out like a browser would.
STALENESS = {FlowClass.LIVE: 2.0, FlowClass.INTERACTIVE: 30.0, FlowClass.BUFFERED: math.inf}

RAT_CODES = {RAT.NONE: 0, RAT.WIFI: 1, RAT.CBRS: 2}
CODE_RATS = {v: k for k, v in RAT_CODES.items()}


@dataclass(frozen=True)
class FlowSpec:
    id: str
    cls: FlowClass
    packet_size: int = 3000  # bytes; response size for INTERACTIVE, chunk size for BUFFERED
    packet_interval: float = 0.02
    request_interval: float = 1.0
    request_size: int = 400
    buffer_depth: float = 10.0
    media_rate: float = 0.4  # Mbps
    fill_ratio: float = 2.0
    duration: float = 60.0
    start: float = 0.0
    criticality: Criticality = Criticality.CRITICAL

    def __post_init__(self):
        object.__setattr__(self, "cls", FlowClass(self.cls))
        object.__setattr__(self, "criticality", Criticality(self.criticality))
        if not (self.packet_interval > 0 and self.request_interval > 0):
            raise ValueError(f"flow {self.id}: intervals must be > 0")
        if self.buffer_depth < 0:
            raise ValueError(f"flow {self.id}: buffer_depth must be >= 0")
        if self.packet_size <= 0 or self.duration < 0:
            raise ValueError(f"flow {self.id}: packet_size > 0 and duration >= 0 required")
        if self.cls is FlowClass.BUFFERED and not (self.media_rate > 0 and self.fill_ratio >= 1):
            raise ValueError(f"flow {self.id}: BUFFERED needs media_rate > 0 and fill_ratio >= 1")

    @property
    def directions(self) -> tuple[Direction, ...]:
        if self.cls is FlowClass.BUFFERED:
            return (Direction.DL,)
        return (Direction.UL, Direction.DL)

    @property
    def demand(self) -> float:
        """Rate in Mbps the link must offer for a packet to get through."""
        if self.cls is FlowClass.LIVE:
            return self.packet_size * 8 / self.packet_interval / 1e6
        if self.cls is FlowClass.INTERACTIVE:
            return self.packet_size * 8 / self.request_interval / 1e6
        return self.media_rate

    @property
    def send_interval(self) -> float:
        if self.cls is FlowClass.LIVE:
            return self.packet_interval
        if self.cls is FlowClass.INTERACTIVE:
            return self.request_interval
        return self.packet_size * 8 / (self.media_rate * self.fill_ratio * 1e6)

    def size(self, direction: Direction) -> int:
        if self.cls is FlowClass.INTERACTIVE and direction is Direction.UL:
            return self.request_size
        return self.packet_size

    @property
    def media_per_packet(self) -> float:
        return self.packet_size * 8 / (self.media_rate * 1e6)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["cls"] = self.cls.value
        d["criticality"] = self.criticality.value
        return d


@dataclass(frozen=True, slots=True)
class DeliveryRecord:
    seq: int
    sent_at: float
    delivered_at: Optional[float]
    direction: Direction
    rat_used: RAT


@dataclass(frozen=True)
class InterruptionRecord:
    flow_id: str
    from_rat: RAT
    to_rat: RAT
    switch_time: Optional[float]
    max_gap: Optional[float]
    seamless: Optional[bool]
    t_detach: float = 0.0
    measurable: bool = True


class LinkTimeline:
    """Per-tick (RAT, rate) of the link a flow rides on.

    Tick ``i`` covers ``[t0 + i*tick, t0 + (i+1)*tick)``.
    """

    def __init__(self, t0: float, tick: float, rats: np.ndarray, rates: np.ndarray):
        self.t0 = float(t0)
        self.tick = float(tick)
        self.rats = np.asarray(rats, dtype=np.int8)
        self.rates = np.asarray(rates, dtype=float)
        if self.rats.shape != self.rates.shape:
            raise ValueError("rats and rates must align")

    @classmethod
    def from_segments(cls, segments: Iterable[tuple[float, float, RAT, float]], duration: float,
                      tick: float = 0.01, t0: float = 0.0) -> "LinkTimeline":
        """Build from ``(t_begin, t_end, rat, mbps)`` pieces; gaps have no link."""
        n = int(round(duration / tick)) + 1
        times = t0 + np.arange(n) * tick
        rats = np.zeros(n, dtype=np.int8)
        rates = np.zeros(n)
        for a, b, rat, mbps in segments:
            m = (times >= a - 1e-9) & (times < b - 1e-9)
            rats[m] = RAT_CODES[RAT(rat)]
            rates[m] = mbps
        return cls(t0, tick, rats, rates)

    def __len__(self):
        return len(self.rates)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) * self.tick

    def index(self, t: np.ndarray) -> np.ndarray:
        i = np.floor((np.asarray(t) - self.t0) / self.tick + 1e-9).astype(np.int64)
        return np.clip(i, 0, len(self) - 1)

    def usable(self, demand: float) -> np.ndarray:
        return (self.rates > 0) & (self.rates >= demand) & (self.rats != 0)


def next_true(mask: np.ndarray) -> np.ndarray:
    """For each index, the first index >= it where ``mask`` holds (-1 if none)."""
    n = len(mask)
    idx = np.where(mask, np.arange(n), n)
    nxt = np.minimum.accumulate(idx[::-1])[::-1]
    return np.where(nxt == n, -1, nxt)


def send_times(flow: FlowSpec, seed: int) -> np.ndarray:
    """Packet (or request) generation instants, with a seeded start phase."""
    rng = np.random.default_rng([seed & 0xFFFFFFFF, 0x7F10])
    interval = flow.send_interval
    phase = rng.uniform(0.0, interval)
    n = int(math.floor((flow.duration - phase) / interval + 1e-9)) + 1
    if flow.duration - phase < 0:
        return np.empty(0)
    return flow.start + phase + np.arange(max(n, 0)) * interval


def transmit(flow: FlowSpec, timeline: LinkTimeline, sent: np.ndarray, direction: Direction,
             wait: bool, usable: Optional[np.ndarray] = None):
    """Vectorised single-link delivery. Returns ``(delivered, rat_codes)``; NaN marks a drop."""
    if usable is None:
        usable = timeline.usable(flow.demand)
    nxt = next_true(usable)
    i = timeline.index(sent)
    ok_now = usable[i]
    j = np.where(ok_now, i, nxt[i] if wait else -1)
    found = j >= 0
    jj = np.where(found, j, 0)
    start = np.where(ok_now, sent, timeline.t0 + jj * timeline.tick)
    with np.errstate(divide="ignore"):
        tx = flow.size(direction) * 8 / (timeline.rates[jj] * 1e6)
    delivered = start + tx
    stale = delivered - sent > STALENESS[flow.cls]
    delivered = np.where(found & ~stale, delivered, np.nan)
    rats = np.where(np.isnan(delivered), 0, timeline.rats[jj]).astype(np.int8)
    return delivered, rats


def _records(seqs, sent, delivered, rats, direction) -> list[DeliveryRecord]:
    out = []
    for k, s, d, r in zip(seqs.tolist(), sent.tolist(), delivered.tolist(), rats.tolist()):
        out.append(DeliveryRecord(k, s, None if d != d else d, direction, CODE_RATS[r]))
    return out


def deliver(flow: FlowSpec, link_timeline: LinkTimeline, seed: int = 0) -> list[DeliveryRecord]:
    """Schedule ``flow`` over a single link and return UL then DL records."""
    sent = send_times(flow, seed)
    seqs = np.arange(len(sent))
    usable = link_timeline.usable(flow.demand)
    out: list[DeliveryRecord] = []
    if flow.cls is FlowClass.LIVE:
        for d in (Direction.UL, Direction.DL):
            delivered, rats = transmit(flow, link_timeline, sent, d, wait=False, usable=usable)
            out += _records(seqs, sent, delivered, rats, d)
    elif flow.cls is FlowClass.INTERACTIVE:
        up, up_rats = transmit(flow, link_timeline, sent, Direction.UL, wait=True, usable=usable)
        out += _records(seqs, sent, up, up_rats, Direction.UL)
        ok = ~np.isnan(up)
        down = np.full(len(sent), np.nan)
        down_rats = np.zeros(len(sent), dtype=np.int8)
        if ok.any():
            d, r = transmit(flow, link_timeline, up[ok], Direction.DL, wait=True, usable=usable)
            # the response must also beat the request timeout measured from the click
            d = np.where(d - sent[ok] > STALENESS[flow.cls], np.nan, d)
            down[ok], down_rats[ok] = d, np.where(np.isnan(d), 0, r)
        out += _records(seqs[ok], up[ok], down[ok], down_rats[ok], Direction.DL)
    else:
        delivered, rats = transmit(flow, link_timeline, sent, Direction.DL, wait=True, usable=usable)
        out += _records(seqs, sent, delivered, rats, Direction.DL)
    return out


# -- metrology ----------------------------------------------------------------

def _window(tr) -> tuple[float, float]:
    t_att = tr.t_attach if tr.t_attach is not None else tr.t_detach
    return min(tr.t_detach, t_att) - WINDOW_BEFORE, max(tr.t_detach, t_att) + WINDOW_AFTER


def request_stalls(records: Sequence[DeliveryRecord]) -> list[tuple[float, float]]:
    """``(click, completion)`` per request; completion is ``inf`` if never served."""
    up = {r.seq: r.sent_at for r in records if r.direction is Direction.UL}
    done = {r.seq: r.delivered_at for r in records if r.direction is Direction.DL}
    return [(s, done.get(k) if done.get(k) is not None else math.inf) for k, s in sorted(up.items())]


def _direction_gaps(recs, ws, we, tr):
    got = sorted((r.delivered_at, r.rat_used) for r in recs if r.delivered_at is not None)
    if not got:
        return None
    t = np.array([g[0] for g in got])
    if t[0] > tr.t_detach or (tr.t_attach is not None and t[-1] < tr.t_attach):
        return None
    sel = np.flatnonzero((t[1:] >= ws) & (t[:-1] <= we))
    if sel.size == 0:
        return None
    gaps = t[sel + 1] - t[sel]
    switch = [t[k + 1] - t[k] for k in sel if got[k][1] is tr.from_rat and got[k + 1][1] is tr.to_rat]
    if switch:
        st = float(max(switch))
    elif any(got[k + 1][1] is tr.to_rat for k in sel):
        st = 0.0
    else:
        st = None
    return float(gaps.max()), st


def measure_interruption(records: Sequence[DeliveryRecord], transitions, flow: Optional[FlowSpec] = None,
                         flow_id: str = "") -> list[InterruptionRecord]:
    """One :class:`InterruptionRecord` per transition.

    Gaps are taken between consecutive deliveries whose span overlaps
    ``[t_detach - 1 s, t_attach + 5 s]``, per direction, and the larger one is
    kept. Interactive flows report the longest request stall instead.
    """
    flow_id = flow_id or (flow.id if flow else "")
    out = []
    interactive = flow is not None and flow.cls is FlowClass.INTERACTIVE
    by_dir = {d: [r for r in records if r.direction is d] for d in Direction}
    stalls = request_stalls(records) if interactive else None
    for tr in transitions:
        ws, we = _window(tr)
        if interactive:
            hit = [c - s for s, c in stalls if s <= we and c >= ws]
            if not hit or math.isinf(max(hit)):
                out.append(InterruptionRecord(flow_id, tr.from_rat, tr.to_rat, None, None, None,
                                              tr.t_detach, False))
                continue
            gap = max(hit)
            out.append(InterruptionRecord(flow_id, tr.from_rat, tr.to_rat, gap, gap,
                                          gap < SEAMLESS_THRESHOLD, tr.t_detach))
            continue
        results = [g for g in (_direction_gaps(by_dir[d], ws, we, tr) for d in Direction) if g is not None]
        if not results:
            out.append(InterruptionRecord(flow_id, tr.from_rat, tr.to_rat, None, None, None, tr.t_detach, False))
            continue
        max_gap = max(g for g, _ in results)
        sts = [s for _, s in results if s is not None]
        st = max(sts) if sts else None
        out.append(InterruptionRecord(flow_id, tr.from_rat, tr.to_rat, st, max_gap,
                                      max_gap < SEAMLESS_THRESHOLD, tr.t_detach))
    return out


def rebuffer_events(flow: FlowSpec, records: Sequence[DeliveryRecord], dt: float = 0.01,
                    end: Optional[float] = None) -> list[tuple[float, float]]:
    """Playout stalls of a buffered stream as ``(start, duration)``.

    Fluid model: delivered chunks add media time to a buffer capped at
    ``buffer_depth`` seconds, playout drains it in real time starting at the
    first arrival.
    """
    if flow.cls is not FlowClass.BUFFERED:
        raise ValueError("rebuffer_events needs a BUFFERED flow")
    arrivals = np.sort([r.delivered_at for r in records
                        if r.direction is Direction.DL and r.delivered_at is not None])
    if arrivals.size == 0:
        return []
    t0 = float(arrivals[0])
    t_end = end if end is not None else flow.start + flow.duration
    nbins = max(1, int(math.ceil((t_end - t0) / dt)))
    bins = np.clip(((arrivals - t0) / dt + 1e-9).astype(np.int64), 0, nbins - 1)
    inflow = np.bincount(bins, minlength=nbins) * flow.media_per_packet
    cap = max(flow.buffer_depth, dt)
    level = 0.0
    events = []
    stall_start = None
    for k, add in enumerate(inflow.tolist()):
        level = min(cap, level + add)
        if level + 1e-12 >= dt:
            level -= dt
            if stall_start is not None:
                events.append((stall_start, t0 + k * dt - stall_start))
                stall_start = None
        else:
            level = 0.0
            if stall_start is None:
                stall_start = t0 + k * dt
    if stall_start is not None:
        events.append((stall_start, t0 + nbins * dt - stall_start))
    return events
