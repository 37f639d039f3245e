"""Piecewise-linear, constant-speed device motion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Point = tuple[float, float]

DEFAULT_SPEED = 1.4  # m/s, walking pace


@dataclass(frozen=True)
class MobilityTrace:
    """Walk along ``waypoints`` at ``speed`` starting at ``start_time``.

    ``dwell`` optionally holds a pause (seconds) at each waypoint; the device
    stands still there before moving on.
    """

    waypoints: tuple[Point, ...]
    speed: float = DEFAULT_SPEED
    start_time: float = 0.0
    dwell: tuple[float, ...] = field(default=())

    def __post_init__(self):
        wps = tuple((float(x), float(y)) for x, y in self.waypoints)
        if not wps:
            raise ValueError("trace needs at least one waypoint")
        if not all(math.isfinite(c) for p in wps for c in p):
            raise ValueError("waypoints must be finite")
        if not (self.speed > 0 and math.isfinite(self.speed)):
            raise ValueError("speed must be > 0")
        dwell = tuple(float(d) for d in self.dwell) or (0.0,) * len(wps)
        if len(dwell) != len(wps):
            raise ValueError("dwell must have one entry per waypoint")
        if any(d < 0 for d in dwell):
            raise ValueError("dwell must be >= 0")
        object.__setattr__(self, "waypoints", wps)
        object.__setattr__(self, "dwell", dwell)

    @property
    def segment_lengths(self) -> list[float]:
        w = self.waypoints
        return [math.dist(w[i], w[i + 1]) for i in range(len(w) - 1)]

    @property
    def length(self) -> float:
        return sum(self.segment_lengths)

    @property
    def duration(self) -> float:
        return self.length / self.speed + sum(self.dwell)

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


def _schedule(trace: MobilityTrace) -> list[tuple[float, float, Point, Point]]:
    """(t_begin, t_end, p0, p1) pieces; dwell pieces have p0 == p1."""
    pieces = []
    t = trace.start_time
    w = trace.waypoints
    for i, p in enumerate(w):
        if trace.dwell[i] > 0:
            pieces.append((t, t + trace.dwell[i], p, p))
            t += trace.dwell[i]
        if i + 1 < len(w):
            dt = math.dist(p, w[i + 1]) / trace.speed
            pieces.append((t, t + dt, p, w[i + 1]))
            t += dt
    return pieces


def position_at(trace: MobilityTrace, t: float) -> Point:
    if t <= trace.start_time or len(trace.waypoints) == 1:
        return trace.waypoints[0]
    for t0, t1, p0, p1 in _schedule(trace):
        if t <= t1:
            if t1 <= t0:
                return p1
            f = (t - t0) / (t1 - t0)
            return (p0[0] + f * (p1[0] - p0[0]), p0[1] + f * (p1[1] - p0[1]))
    return trace.waypoints[-1]


def positions_at(trace: MobilityTrace, times: Sequence[float] | np.ndarray) -> np.ndarray:
    """Vectorised :func:`position_at`; returns an ``(n, 2)`` array."""
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, 2))
    out[:] = trace.waypoints[0]
    for t0, t1, p0, p1 in _schedule(trace):
        mask = times > t0
        if t1 > t0:
            f = np.clip((times[mask] - t0) / (t1 - t0), 0.0, 1.0)
            out[mask, 0] = p0[0] + f * (p1[0] - p0[0])
            out[mask, 1] = p0[1] + f * (p1[1] - p0[1])
        else:
            out[mask] = p1
    return out


def position_at_distance(trace: MobilityTrace, s: float) -> Point:
    """Point at arclength ``s`` metres along the waypoint path."""
    w = trace.waypoints
    if s <= 0 or len(w) == 1:
        return w[0]
    for i, seg in enumerate(trace.segment_lengths):
        if s <= seg and seg > 0:
            f = s / seg
            a, b = w[i], w[i + 1]
            return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
        s -= seg
    return w[-1]


def sample_path(trace: MobilityTrace, step: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Arclengths and points sampled every ``step`` metres (ends included)."""
    if step <= 0:
        raise ValueError("step must be > 0")
    total = trace.length
    n = max(1, int(math.ceil(total / step)))
    s = np.minimum(np.arange(n + 1) * step, total)
    pts = np.array([position_at_distance(trace, float(x)) for x in s])
    return s, pts
