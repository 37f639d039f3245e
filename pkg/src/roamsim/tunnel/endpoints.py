"""Client and server ends of the single-tunnel protocol."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

from ..enums import DATA_RATS, RAT, Direction, other_rat
from .codec import TunnelFrame, decode_frame, encode_frame


class TunnelMode(str, Enum):
    SINGLE = "SINGLE"
    MAKE_BEFORE_BREAK = "MAKE_BEFORE_BREAK"
    DUPLICATE = "DUPLICATE"
    SPLIT = "SPLIT"


class Verdict(str, Enum):
    ACCEPT = "accept"
    DUPLICATE = "duplicate"
    STALE = "stale"


@dataclass(frozen=True)
class TunnelConfig:
    mode: TunnelMode = TunnelMode.MAKE_BEFORE_BREAK
    probe_interval: float = 0.25  # s per path
    dead_after: int = 3  # missed probes
    switch_ratio: float = 1.5
    switch_rounds: int = 2
    buffer_frames: int = 64
    window: int = 1024
    rtt_ref_ms: float = 20.0
    loss_weight: float = 1.0
    ewma_alpha: float = 0.3
    base_rtt_ms: Mapping[str, float] = field(default_factory=lambda: {"WIFI": 8.0, "CBRS": 20.0})

    def __post_init__(self):
        object.__setattr__(self, "mode", TunnelMode(self.mode))
        if self.probe_interval <= 0 or self.dead_after < 1 or self.switch_rounds < 1:
            raise ValueError("probe_interval > 0, dead_after >= 1 and switch_rounds >= 1 required")
        if self.switch_ratio < 1 or self.buffer_frames < 1 or self.window < 1:
            raise ValueError("switch_ratio >= 1, buffer_frames >= 1 and window >= 1 required")


@dataclass
class PathState:
    rat: RAT
    alive: bool = True
    rtt_ewma: Optional[float] = None  # ms
    loss_ewma: float = 0.0
    last_probe_at: Optional[float] = None
    probes_ok: int = 0
    misses: int = 0
    congestion_score: float = math.inf
    outstanding: Optional[tuple[int, float]] = None  # (seq, sent_at)

    def _rescore(self, cfg: TunnelConfig):
        if self.rtt_ewma is not None:
            self.congestion_score = self.rtt_ewma / cfg.rtt_ref_ms + cfg.loss_weight * self.loss_ewma

    def ack(self, rtt_ms: float, loss: float, cfg: TunnelConfig):
        a = cfg.ewma_alpha
        self.rtt_ewma = rtt_ms if self.rtt_ewma is None else (1 - a) * self.rtt_ewma + a * rtt_ms
        self.loss_ewma = min(1.0, max(0.0, (1 - a) * self.loss_ewma + a * loss))
        self.probes_ok += 1
        self.misses = 0
        self.alive = True
        self._rescore(cfg)

    def miss(self, cfg: TunnelConfig):
        a = cfg.ewma_alpha
        self.loss_ewma = min(1.0, (1 - a) * self.loss_ewma + a)
        self.misses += 1
        if self.misses >= cfg.dead_after:
            self.alive = False
        self._rescore(cfg)


class ReplayWindow:
    """Sliding window over received sequence numbers."""

    def __init__(self, size: int = 1024):
        self.size = size
        self.highest = -1
        self._seen: set[int] = set()

    @property
    def floor(self) -> int:
        return self.highest - self.size + 1

    def check(self, seq: int) -> Verdict:
        if seq < self.floor:
            return Verdict.STALE
        if seq in self._seen:
            return Verdict.DUPLICATE
        self._seen.add(seq)
        if seq > self.highest:
            self.highest = seq
            if len(self._seen) > 2 * self.size:
                lo = self.floor
                self._seen = {s for s in self._seen if s >= lo}
        return Verdict.ACCEPT

    def __len__(self):
        return len(self._seen)


class SessionState:
    def __init__(self, session_id: int, inner_address: str, mode: TunnelMode = TunnelMode.MAKE_BEFORE_BREAK,
                 window: int = 1024):
        self.session_id = session_id
        self._inner_address = inner_address
        self.mode = TunnelMode(mode)
        self.paths: dict[RAT, PathState] = {}
        self.last_ul_rat: Optional[RAT] = None
        self.recv_window = ReplayWindow(window)
        self.serving: Optional[RAT] = None
        self.over_rounds = 0
        self.congestion_override: Optional[RAT] = None
        self.override_policy: Optional[RAT] = None
        self.wrr_credit: dict[RAT, float] = {}
        self.next_seq = 0

    @property
    def inner_address(self) -> str:
        return self._inner_address

    def alive_paths(self) -> list[RAT]:
        return [r for r in DATA_RATS if r in self.paths and self.paths[r].alive]


def dedup_and_order(session: SessionState, frame: TunnelFrame) -> Verdict:
    return session.recv_window.check(frame.seq)


def client_select_path(session: SessionState, policy, link_rates: Mapping[RAT, float]) -> tuple[RAT, ...]:
    """RATs the next data frame goes out on; empty means the tunnel is down.

    ``policy`` is a :class:`~roamsim.policy.engine.PolicyDecision` (or None).
    """
    alive = session.alive_paths()
    if not alive:
        return ()
    mode = session.mode
    if mode is TunnelMode.DUPLICATE:
        return tuple(alive)
    if mode is TunnelMode.SPLIT:
        # smooth weighted round robin, weights proportional to link rate
        weights = {r: max(link_rates.get(r, 0.0), 0.0) for r in alive}
        total = sum(weights.values())
        if total <= 0:
            weights = {r: 1.0 for r in alive}
            total = float(len(alive))
        for r in alive:
            session.wrr_credit[r] = session.wrr_credit.get(r, 0.0) + weights[r]
        pick = max(alive, key=lambda r: (session.wrr_credit[r], r is RAT.WIFI))
        session.wrr_credit[pick] -= total
        session.serving = pick
        return (pick,)

    preferred = policy.preferred_rat if policy is not None else RAT.NONE
    if session.congestion_override is not None:
        if preferred is not session.override_policy:
            session.congestion_override = None
        elif session.congestion_override in alive:
            preferred = session.congestion_override

    def ready(r: RAT) -> bool:
        return mode is TunnelMode.SINGLE or session.paths[r].probes_ok >= 1

    if preferred in alive and ready(preferred):
        choice = preferred
    elif session.serving in alive:
        choice = session.serving
    else:
        ranked = sorted(alive, key=lambda r: (not ready(r), r is not preferred))
        choice = ranked[0]
    session.serving = choice
    return (choice,)


def update_congestion(session: SessionState, policy_rat: Optional[RAT], cfg: TunnelConfig) -> Optional[RAT]:
    """Apply the relative-threshold rule after a probe round.

    Returns the RAT switched to, if the rule fired.
    """
    serving = session.serving
    if serving is None or serving not in session.paths:
        session.over_rounds = 0
        return None
    other = other_rat(serving)
    if other not in session.paths or not session.paths[other].alive or session.paths[other].probes_ok == 0:
        session.over_rounds = 0
        return None
    s_serv = session.paths[serving].congestion_score
    s_other = session.paths[other].congestion_score
    if s_other * cfg.switch_ratio < s_serv:
        session.over_rounds += 1
    else:
        session.over_rounds = 0
    if session.over_rounds >= cfg.switch_rounds:
        session.over_rounds = 0
        session.congestion_override = other
        session.override_policy = policy_rat
        session.serving = other
        return other
    return None


def _ms(t: float) -> int:
    return int(round(t * 1000))


class TunnelClient:
    """Device side. Owns UL sequencing, probing, path choice and DL dedup."""

    def __init__(self, session_id: int, inner_address: str, config: TunnelConfig = TunnelConfig(),
                 probe_phase: float = 0.0):
        self.config = config
        self.session = SessionState(session_id, inner_address, config.mode, config.window)
        self.probe_phase = probe_phase
        self.buffer: deque = deque(maxlen=config.buffer_frames)
        self.dropped_from_buffer = 0

    def path_up(self, rat: RAT):
        if rat not in self.session.paths:
            self.session.paths[rat] = PathState(rat)

    def path_down(self, rat: RAT):
        self.session.paths.pop(rat, None)
        if self.session.serving is rat:
            self.session.serving = None

    def probe_frame(self, rat: RAT, t: float) -> bytes:
        s = self.session
        seq = s.next_seq
        s.next_seq += 1
        path = s.paths[rat]
        if path.outstanding is not None:
            path.miss(self.config)
        path.outstanding = (seq, t)
        path.last_probe_at = t
        return encode_frame(TunnelFrame(s.session_id, seq, _ms(t), Direction.UL, rat, probe=True))

    def on_probe_reply(self, data: bytes, t: float, loss: float = 0.0):
        frame = decode_frame(data)
        path = self.session.paths.get(frame.rat)
        if path is None or path.outstanding is None or path.outstanding[0] != frame.seq:
            return
        rtt = (t - path.outstanding[1]) * 1000.0
        path.outstanding = None
        path.ack(rtt, loss, self.config)

    def select(self, policy, link_rates) -> tuple[RAT, ...]:
        return client_select_path(self.session, policy, link_rates)

    def data_frames(self, payload: bytes, t: float, rats: tuple[RAT, ...]) -> list[tuple[RAT, bytes]]:
        """Encapsulate one UL payload; several RATs means duplicates sharing a seq."""
        s = self.session
        if not rats:
            if len(self.buffer) == self.buffer.maxlen:
                self.dropped_from_buffer += 1
            self.buffer.append((payload, t))
            return []
        seq = s.next_seq
        s.next_seq += 1
        dup = len(rats) > 1
        return [(r, encode_frame(TunnelFrame(s.session_id, seq, _ms(t), Direction.UL, r, dup, False, payload)))
                for r in rats]

    def receive(self, data: bytes) -> tuple[TunnelFrame, Verdict]:
        frame = decode_frame(data)
        return frame, dedup_and_order(self.session, frame)


class TunnelServer:
    """Controller side: decapsulates UL, reflects the UL RAT choice onto DL."""

    def __init__(self, session_id: int, inner_address: str, config: TunnelConfig = TunnelConfig()):
        self.config = config
        self.session = SessionState(session_id, inner_address, config.mode, config.window)
        self.dl_buffer: deque = deque(maxlen=config.buffer_frames)

    def receive_ul(self, data: bytes, t: float):
        """Returns ``(frame, verdict, reply)``; ``reply`` is the probe echo, if any."""
        frame = decode_frame(data)
        if frame.probe:
            reply = encode_frame(TunnelFrame(frame.session_id, frame.seq, _ms(t), Direction.DL, frame.rat,
                                             probe=True))
            return frame, None, reply
        self.session.last_ul_rat = frame.rat
        return frame, dedup_and_order(self.session, frame), None

    def route_dl(self, payload: bytes, t: float):
        return server_route_dl(self.session, payload, t, self.dl_buffer)


def server_route_dl(session: SessionState, payload: bytes, t: float, hold: Optional[deque] = None):
    """``(rat, frame_bytes)`` on the RAT of the last UL data frame, or None
    (payload parked in ``hold``) if no UL data has been seen yet."""
    rat = session.last_ul_rat
    if rat is None:
        if hold is not None:
            hold.append((payload, t))
        return None
    seq = session.next_seq
    session.next_seq += 1
    frame = TunnelFrame(session.session_id, seq, _ms(t), Direction.DL, rat, payload=payload)
    return rat, encode_frame(frame)
