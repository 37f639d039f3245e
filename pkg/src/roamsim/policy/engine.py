"""Combine preference lists, geofences and congestion into one RAT choice."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional

from ..enums import RAT, Criticality
from ..rfenv import SignalSample
from .geofence import GeofenceSpec, footprint_trigger, geofence_contains
from .profile import ProfileEntry, RadioPreferenceProfile

HYSTERESIS_MARGIN_DB = 3.0
HYSTERESIS_DWELL_S = 2.0
CONGESTION_RATIO = 1.5


class Reason(str, Enum):
    PRIORITY_LIST = "PRIORITY_LIST"
    SIGNAL_FLOOR = "SIGNAL_FLOOR"
    GEOFENCE = "GEOFENCE"
    FOOTPRINT_SCAN = "FOOTPRINT_SCAN"
    APP_PREFERENCE = "APP_PREFERENCE"
    CONGESTION = "CONGESTION"


@dataclass(frozen=True)
class PolicyDecision:
    preferred_rat: RAT
    reason: Reason
    scan_request: bool = False
    entry: Optional[str] = None
    level: Optional[float] = None  # signal of the winning entry
    floor: Optional[float] = None


@dataclass(frozen=True)
class PolicyState:
    decision: PolicyDecision
    since: float
    candidate: Optional[RAT] = None
    candidate_since: Optional[float] = None


def _met_entries(profile: RadioPreferenceProfile, signals: Mapping[RAT, Optional[SignalSample]]):
    """First satisfied entry per RAT, in ``rat_order``."""
    met: list[tuple[RAT, ProfileEntry, float]] = []
    for rat in profile.rat_order:
        s = signals.get(rat)
        if s is None:
            continue
        for e in profile.entries(rat):
            if s.network == e.name and s.value >= e.threshold:
                met.append((rat, e, s.value))
                break
    return met


def first_match(profile: RadioPreferenceProfile, geofence: Optional[GeofenceSpec],
                signals: Mapping[RAT, Optional[SignalSample]], app_class: Criticality = Criticality.CRITICAL,
                congestion: Optional[Mapping[RAT, float]] = None, *, position=None,
                visible_macro: Iterable = (), app_preference: Optional[Mapping[Criticality, RAT]] = None,
                congestion_ratio: float = CONGESTION_RATIO) -> PolicyDecision:
    """The decision without hysteresis."""
    met = _met_entries(profile, signals)
    by_rat = {rat: (e, v) for rat, e, v in met}

    in_shape = geofence is not None and position is not None and geofence_contains(geofence, position)
    in_footprint = geofence is not None and footprint_trigger(geofence, visible_macro)
    geo_reason = Reason.GEOFENCE if in_shape else Reason.FOOTPRINT_SCAN
    scan = in_shape or in_footprint

    def pick(rat, reason):
        e, v = by_rat.get(rat, (None, None))
        return PolicyDecision(rat, reason, scan, e.name if e else None, v, e.threshold if e else None)

    if app_preference and app_class in app_preference and app_preference[app_class] in by_rat:
        decision = pick(app_preference[app_class], Reason.APP_PREFERENCE)
    elif scan and RAT.CBRS in by_rat:
        decision = pick(RAT.CBRS, geo_reason)
    elif met:
        decision = pick(met[0][0], Reason.PRIORITY_LIST if len(by_rat) > 1 else Reason.SIGNAL_FLOOR)
    elif scan:
        decision = pick(RAT.CBRS, geo_reason)
    else:
        return PolicyDecision(RAT.NONE, Reason.SIGNAL_FLOOR, scan)

    if congestion and decision.reason is not Reason.APP_PREFERENCE:
        alts = [r for r in by_rat if r is not decision.preferred_rat]
        win = congestion.get(decision.preferred_rat)
        for alt in alts:
            if win is not None and alt in congestion and congestion[alt] * congestion_ratio < win:
                return pick(alt, Reason.CONGESTION)
    return decision


def evaluate(profile: RadioPreferenceProfile, geofence: Optional[GeofenceSpec],
             signals: Mapping[RAT, Optional[SignalSample]], app_class: Criticality = Criticality.CRITICAL,
             congestion: Optional[Mapping[RAT, float]] = None, state: Optional[PolicyState] = None, *,
             t: float = 0.0, position=None, visible_macro: Iterable = (),
             app_preference: Optional[Mapping[Criticality, RAT]] = None,
             margin_db: float = HYSTERESIS_MARGIN_DB, dwell_s: float = HYSTERESIS_DWELL_S,
             congestion_ratio: float = CONGESTION_RATIO) -> tuple[PolicyDecision, PolicyState]:
    """Policy decision at time ``t`` plus the state to feed into the next call.

    A change of preferred RAT is only emitted once the new winner has held
    for ``dwell_s`` and its signal clears its floor by ``margin_db``.
    """
    raw = first_match(profile, geofence, signals, app_class, congestion, position=position,
                      visible_macro=visible_macro, app_preference=app_preference,
                      congestion_ratio=congestion_ratio)
    return apply_hysteresis(raw, state, t, app_class, margin_db, dwell_s)


def apply_hysteresis(raw: PolicyDecision, state: Optional[PolicyState], t: float,
                     app_class: Criticality = Criticality.CRITICAL, margin_db: float = HYSTERESIS_MARGIN_DB,
                     dwell_s: float = HYSTERESIS_DWELL_S) -> tuple[PolicyDecision, PolicyState]:
    if state is None:
        return raw, PolicyState(raw, t)
    prev = state.decision
    if raw.preferred_rat is prev.preferred_rat:
        return raw, PolicyState(raw, state.since)
    if prev.preferred_rat is RAT.NONE and app_class is Criticality.CRITICAL and raw.preferred_rat is not RAT.NONE:
        return raw, PolicyState(raw, t)

    since = state.candidate_since if state.candidate is raw.preferred_rat else t
    clears = raw.level is None or raw.level >= raw.floor + margin_db
    if t - since + 1e-9 >= dwell_s and clears:
        return raw, PolicyState(raw, t)
    return prev, PolicyState(prev, state.since, raw.preferred_rat, since)
