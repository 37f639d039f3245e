"""Connection-manager state machine for one handset model.

Traditional mode reproduces the stock OS behaviour: Wi-Fi is preferred and
held well past its useful edge, the switch to cellular is break-before-make.
When a policy hint is supplied the device follows the hint instead, either
break-before-make or (under the tunnel client) make-before-break.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, NamedTuple, Optional

from .enums import RAT
from .rfenv import SignalSample

#: association is lost below these levels regardless of roaming preference
WIFI_LINK_FLOOR = -92.0
CELL_LINK_FLOOR = -120.0
#: how long the old RAT stays up after a make-before-break attach completes
MBB_OVERLAP = 0.5

_EPS = 1e-9


@dataclass(frozen=True)
class DeviceProfile:
    model_name: str
    wifi_disconnect_rssi: float = -88.0
    wifi_disconnect_hold: float = 1.0
    wifi_attach_rssi: float = -78.0
    cell_scan_interval: float = 1.0
    wifi_scan_interval: float = 2.0
    cell_attach_delay: float = 0.5
    wifi_attach_delay: float = 0.3
    prefers_wifi: bool = True
    supports_tunnel_client: bool = True
    cell_attach_rsrp: float = -115.0

    def __post_init__(self):
        if not self.wifi_attach_rssi > self.wifi_disconnect_rssi:
            raise ValueError(f"{self.model_name}: wifi_attach_rssi must exceed wifi_disconnect_rssi")
        for name in ("wifi_disconnect_hold", "cell_attach_delay", "wifi_attach_delay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{self.model_name}: {name} must be >= 0")
        for name in ("cell_scan_interval", "wifi_scan_interval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{self.model_name}: {name} must be > 0")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class Phase(str, Enum):
    CONNECTED = "CONNECTED"
    SCANNING = "SCANNING"
    ATTACHING = "ATTACHING"


class EventKind(str, Enum):
    ATTACHED = "ATTACHED"
    DETACHED = "DETACHED"
    SCAN_STARTED = "SCAN_STARTED"


@dataclass(frozen=True, slots=True)
class ConnectionEvent:
    t: float
    kind: EventKind
    rat: RAT
    node_id: Optional[str] = None


@dataclass(frozen=True, slots=True)
class ConnectionState:
    """``current_rat`` carries data; during a make-before-break attach it is
    the old RAT while ``attach_target`` comes up, and ``secondary_rat`` is the
    old RAT kept alive for :data:`MBB_OVERLAP` after the new one attached."""

    current_rat: RAT = RAT.NONE
    phase: Phase = Phase.SCANNING
    attach_complete_at: Optional[float] = None
    below_threshold_since: Optional[float] = None
    serving_node: Optional[str] = None
    attach_target: RAT = RAT.NONE
    secondary_rat: RAT = RAT.NONE
    secondary_until: Optional[float] = None
    scan_reported: bool = False
    cell_scan_phase: float = 0.0
    wifi_scan_phase: float = 0.0

    @property
    def usable(self) -> tuple[RAT, ...]:
        rats = []
        if self.current_rat is not RAT.NONE:
            rats.append(self.current_rat)
        if self.secondary_rat is not RAT.NONE:
            rats.append(self.secondary_rat)
        return tuple(rats)


def _level(signals: Mapping[RAT, Optional[SignalSample]], rat: RAT) -> float:
    s = signals.get(rat)
    return s.value if s is not None else -math.inf


def _node(signals, rat) -> Optional[str]:
    s = signals.get(rat)
    return s.node_id if s is not None else None


def boundary_crossed(t: float, tick: float, interval: float, phase: float) -> Optional[float]:
    """Scan boundary ``(k + phase) * interval`` inside ``(t - tick, t]``, if any."""
    prev = math.floor((t - tick) / interval - phase + _EPS)
    now = math.floor(t / interval - phase + _EPS)
    if now > prev:
        return (now + phase) * interval
    return None


def _attach_floor(profile: DeviceProfile, rat: RAT) -> float:
    return profile.wifi_attach_rssi if rat is RAT.WIFI else profile.cell_attach_rsrp


def _link_floor(rat: RAT) -> float:
    return WIFI_LINK_FLOOR if rat is RAT.WIFI else CELL_LINK_FLOOR


def _attach_delay(profile: DeviceProfile, rat: RAT) -> float:
    return profile.wifi_attach_delay if rat is RAT.WIFI else profile.cell_attach_delay


def initial_state(profile: DeviceProfile, signals, t: float = 0.0, *, policy_hint: Optional[RAT] = None,
                  cell_scan_phase: float = 0.0, wifi_scan_phase: float = 0.0):
    """Start-up attach, performed instantly so runs begin connected.

    Returns ``(state, events)``.
    """
    base = ConnectionState(cell_scan_phase=cell_scan_phase, wifi_scan_phase=wifi_scan_phase)
    if policy_hint not in (None, RAT.NONE):
        order = [policy_hint]
    elif profile.prefers_wifi:
        order = [RAT.WIFI, RAT.CBRS]
    else:
        order = [RAT.CBRS, RAT.WIFI]
    for rat in order:
        if _level(signals, rat) >= _attach_floor(profile, rat):
            node = _node(signals, rat)
            state = replace(base, current_rat=rat, phase=Phase.CONNECTED, serving_node=node)
            return state, [ConnectionEvent(t, EventKind.ATTACHED, rat, node)]
    return base, []


def step(state: ConnectionState, profile: DeviceProfile, signals: Mapping[RAT, Optional[SignalSample]],
         policy_hint: Optional[RAT], t: float, tick: float, *, make_before_break: bool = False):
    """Advance one tick ending at ``t``. Returns ``(state, events)``."""
    if not tick > 0:
        raise ValueError("tick must be > 0")
    events: list[ConnectionEvent] = []

    # make-before-break tail: drop the old RAT once the overlap has elapsed
    if state.secondary_rat is not RAT.NONE and t + _EPS >= state.secondary_until:
        events.append(ConnectionEvent(t, EventKind.DETACHED, state.secondary_rat))
        state = replace(state, secondary_rat=RAT.NONE, secondary_until=None)
        return state, events

    if state.phase is Phase.ATTACHING:
        target = state.attach_target
        if _level(signals, target) < _link_floor(target):
            # target vanished before the attach finished
            state = replace(state, phase=Phase.SCANNING if state.current_rat is RAT.NONE else Phase.CONNECTED,
                            attach_complete_at=None, attach_target=RAT.NONE, scan_reported=False)
            return state, events
        if t + _EPS >= state.attach_complete_at:
            node = _node(signals, target)
            events.append(ConnectionEvent(t, EventKind.ATTACHED, target, node))
            old = state.current_rat
            state = replace(state, current_rat=target, phase=Phase.CONNECTED, attach_complete_at=None,
                            attach_target=RAT.NONE, serving_node=node, below_threshold_since=None)
            if old is not RAT.NONE and old is not target:
                state = replace(state, secondary_rat=old, secondary_until=t + MBB_OVERLAP)
        return state, events

    if policy_hint is None:
        return _step_traditional(state, profile, signals, t, tick, events)
    return _step_policy(state, profile, signals, policy_hint, t, tick, make_before_break, events)


def _start_attach(state, rat, at, profile, keep_current: bool):
    return replace(
        state,
        current_rat=state.current_rat if keep_current else RAT.NONE,
        phase=Phase.ATTACHING,
        attach_target=rat,
        attach_complete_at=at + _attach_delay(profile, rat),
        below_threshold_since=None,
        serving_node=state.serving_node if keep_current else None,
        scan_reported=False,
    )


def _detach(state, t, events):
    events.append(ConnectionEvent(t, EventKind.DETACHED, state.current_rat, state.serving_node))
    return replace(state, current_rat=RAT.NONE, phase=Phase.SCANNING, serving_node=None,
                   below_threshold_since=None, scan_reported=False)


def _step_traditional(state, profile, signals, t, tick, events):
    rat = state.current_rat
    wifi = _level(signals, RAT.WIFI)
    cell = _level(signals, RAT.CBRS)

    if rat is RAT.WIFI:
        if wifi < profile.wifi_disconnect_rssi:
            since = state.below_threshold_since if state.below_threshold_since is not None else t
            if t - since + _EPS >= profile.wifi_disconnect_hold:
                return _detach(state, t, events), events
            if since != state.below_threshold_since:
                state = replace(state, below_threshold_since=since)
        elif state.below_threshold_since is not None:
            state = replace(state, below_threshold_since=None)
        node = _node(signals, RAT.WIFI)
        if node != state.serving_node:
            state = replace(state, serving_node=node)
        return state, events

    if rat is RAT.CBRS:
        if cell < CELL_LINK_FLOOR:
            return _detach(state, t, events), events
        if profile.prefers_wifi:
            b = boundary_crossed(t, tick, profile.wifi_scan_interval, state.wifi_scan_phase)
            if b is not None and wifi >= profile.wifi_attach_rssi:
                state = _detach(state, t, events)
                return _start_attach(state, RAT.WIFI, t, profile, keep_current=False), events
        node = _node(signals, RAT.CBRS)
        if node != state.serving_node:
            state = replace(state, serving_node=node)
        return state, events

    # SCANNING with nothing attached
    wb = boundary_crossed(t, tick, profile.wifi_scan_interval, state.wifi_scan_phase)
    cb = boundary_crossed(t, tick, profile.cell_scan_interval, state.cell_scan_phase)
    if wb is None and cb is None:
        return state, events
    if not state.scan_reported:
        events.append(ConnectionEvent(t, EventKind.SCAN_STARTED, RAT.NONE))
        state = replace(state, scan_reported=True)
    order = [RAT.WIFI, RAT.CBRS] if profile.prefers_wifi else [RAT.CBRS, RAT.WIFI]
    for cand in order:
        b = wb if cand is RAT.WIFI else cb
        if b is not None and _level(signals, cand) >= _attach_floor(profile, cand):
            return _start_attach(state, cand, b, profile, keep_current=False), events
    return state, events


def _step_policy(state, profile, signals, hint, t, tick, mbb, events):
    rat = state.current_rat
    if rat is not RAT.NONE:
        if _level(signals, rat) < _link_floor(rat):
            since = state.below_threshold_since if state.below_threshold_since is not None else t
            if t - since + _EPS >= profile.wifi_disconnect_hold:
                return _detach(state, t, events), events
            if since != state.below_threshold_since:
                state = replace(state, below_threshold_since=since)
        elif state.below_threshold_since is not None:
            state = replace(state, below_threshold_since=None)
        if hint in (RAT.NONE, rat) or state.secondary_rat is not RAT.NONE:
            return state, events
        if _level(signals, hint) >= _link_floor(hint):
            if not mbb:
                state = _detach(state, t, events)
            return _start_attach(state, hint, t, profile, keep_current=mbb), events
        return state, events

    # nothing attached: take the hinted RAT, or whatever has coverage
    order = [hint] if hint is not RAT.NONE else []
    order += [r for r in (RAT.CBRS, RAT.WIFI) if r not in order]
    for cand in order:
        if _level(signals, cand) >= _attach_floor(profile, cand):
            if not state.scan_reported:
                events.append(ConnectionEvent(t, EventKind.SCAN_STARTED, RAT.NONE))
            return _start_attach(state, cand, t, profile, keep_current=False), events
    return state, events


class SwitchInterval(NamedTuple):
    from_rat: RAT
    to_rat: RAT
    gap_duration: Optional[float]
    t_detach: float
    t_attach: Optional[float]
    open: bool = False


def switch_intervals(events) -> list[SwitchInterval]:
    """Pair DETACHED/ATTACHED events on differing RATs into RAT transitions."""
    out: list[SwitchInterval] = []
    attached: dict[RAT, float] = {}
    pending: Optional[tuple[RAT, float]] = None
    for ev in events:
        if ev.kind is EventKind.ATTACHED:
            if pending is not None:
                if pending[0] is not ev.rat:
                    out.append(SwitchInterval(pending[0], ev.rat, ev.t - pending[1], pending[1], ev.t))
                pending = None
            attached[ev.rat] = ev.t
        elif ev.kind is EventKind.DETACHED:
            attached.pop(ev.rat, None)
            others = [(ta, r) for r, ta in attached.items() if r is not ev.rat]
            if others:
                ta, r = max(others, key=lambda x: x[0])
                out.append(SwitchInterval(ev.rat, r, 0.0, ev.t, ta))
            else:
                pending = (ev.rat, ev.t)
    if pending is not None:
        out.append(SwitchInterval(pending[0], RAT.NONE, None, pending[1], None, True))
    return out
