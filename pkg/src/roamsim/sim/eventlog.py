"""Event logs: everything a run produced, serialisable as JSON lines.

One JSON object per line, keys in a fixed order, timestamps non-decreasing.
``EventLog.from_lines(log.lines())`` rebuilds an equal object, so reports
computed from stored logs match the ones computed in-process.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional

from ..device import ConnectionEvent, EventKind
from ..enums import RAT, Direction, Mode
from ..traffic import DeliveryRecord, FlowSpec


class FrameRecord(NamedTuple):
    t: float  # send time
    direction: Direction
    rat: RAT
    seq: int
    duplicate: bool
    probe: bool
    rx: Optional[float]  # arrival at the far end, None if lost
    session: int = 0


class DecisionRecord(NamedTuple):
    t: float
    rat: RAT
    reason: str
    scan: bool


class PathSwitch(NamedTuple):
    t: float
    rat: RAT  # NONE when the tunnel has no usable path
    inner: str


class SignalRecord(NamedTuple):
    t: float
    x: float
    y: float
    wifi: Optional[float]
    cbrs: Optional[float]
    wifi_rate: float
    cbrs_rate: float


@dataclass
class DeviceLog:
    device: str
    model: str
    mode: Mode
    supports_tunnel: bool = True
    flows: list[FlowSpec] = field(default_factory=list)
    events: list[ConnectionEvent] = field(default_factory=list)
    decisions: list[DecisionRecord] = field(default_factory=list)
    frames: list[FrameRecord] = field(default_factory=list)
    switches: list[PathSwitch] = field(default_factory=list)
    deliveries: dict[str, list[DeliveryRecord]] = field(default_factory=dict)
    signals: list[SignalRecord] = field(default_factory=list)
    notes: list[tuple[float, str]] = field(default_factory=list)  # degenerate states


@dataclass
class EventLog:
    scenario: str
    seed: int
    tick: float
    devices: list[DeviceLog] = field(default_factory=list)

    def device(self, name: str) -> DeviceLog:
        for d in self.devices:
            if d.device == name:
                return d
        raise KeyError(name)

    # -- serialisation -------------------------------------------------------

    def _records(self, dev: DeviceLog, rank: int) -> Iterator[tuple]:
        """``(t, rank, n, record)`` per record of one device."""
        name = dev.device
        n = 0
        head = [{"type": "device", "t": 0.0, "device": name, "model": dev.model, "mode": dev.mode.value,
                 "supports_tunnel": dev.supports_tunnel}]
        head += [{"type": "flow", "t": 0.0, "device": name, **_flow_dict(f)} for f in dev.flows]
        for r in head:
            yield (0.0, -1, rank, n, r)
            n += 1
        for e in dev.events:
            yield (e.t, 0, rank, n, {"type": "conn", "t": e.t, "device": name, "kind": e.kind.value,
                                     "rat": e.rat.value, "node": e.node_id})
            n += 1
        for d in dev.decisions:
            yield (d.t, 1, rank, n, {"type": "policy", "t": d.t, "device": name, "rat": d.rat.value,
                                     "reason": d.reason, "scan": d.scan})
            n += 1
        for s in dev.switches:
            yield (s.t, 2, rank, n, {"type": "path", "t": s.t, "device": name, "rat": s.rat.value,
                                     "inner": s.inner})
            n += 1
        for f in dev.frames:
            yield (f.t, 3, rank, n, {"type": "frame", "t": f.t, "device": name, "dir": f.direction.value,
                                     "rat": f.rat.value, "seq": f.seq, "dup": f.duplicate, "probe": f.probe,
                                     "rx": f.rx, "session": f.session})
            n += 1
        for flow_id, recs in dev.deliveries.items():
            for r in recs:
                yield (r.sent_at, 4, rank, n, {"type": "delivery", "t": r.sent_at, "device": name,
                                               "flow": flow_id, "seq": r.seq, "dir": r.direction.value,
                                               "delivered": r.delivered_at, "rat": r.rat_used.value})
                n += 1
        for s in dev.signals:
            yield (s.t, 5, rank, n, {"type": "signal", "t": s.t, "device": name, "x": s.x, "y": s.y,
                                     "wifi": s.wifi, "cbrs": s.cbrs, "wifi_rate": s.wifi_rate,
                                     "cbrs_rate": s.cbrs_rate})
            n += 1
        for t, msg in dev.notes:
            yield (t, 6, rank, n, {"type": "note", "t": t, "device": name, "msg": msg})
            n += 1

    def records(self) -> Iterator[dict]:
        yield {"type": "run", "t": 0.0, "scenario": self.scenario, "seed": self.seed, "tick": self.tick}
        streams = [sorted(self._records(d, k), key=lambda r: r[:4]) for k, d in enumerate(self.devices)]
        for *_, rec in heapq.merge(*streams, key=lambda r: r[:4]):
            yield rec

    def lines(self) -> Iterator[str]:
        for r in self.records():
            yield json.dumps(r, separators=(",", ":"), allow_nan=False)

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "EventLog":
        log: Optional[EventLog] = None
        devs: dict[str, DeviceLog] = {}
        for raw in lines:
            raw = raw.strip()
            if not raw:
                continue
            r = json.loads(raw)
            kind = r["type"]
            if kind == "run":
                log = cls(r["scenario"], r["seed"], r["tick"])
                continue
            if log is None:
                raise ValueError("event log must start with a run record")
            if kind == "device":
                dev = DeviceLog(r["device"], r["model"], Mode(r["mode"]), r["supports_tunnel"])
                devs[dev.device] = dev
                log.devices.append(dev)
                continue
            dev = devs[r["device"]]
            if kind == "flow":
                f = _flow_from_dict(r)
                dev.flows.append(f)
                dev.deliveries.setdefault(f.id, [])
            elif kind == "conn":
                dev.events.append(ConnectionEvent(r["t"], EventKind(r["kind"]), RAT(r["rat"]), r["node"]))
            elif kind == "policy":
                dev.decisions.append(DecisionRecord(r["t"], RAT(r["rat"]), r["reason"], r["scan"]))
            elif kind == "path":
                dev.switches.append(PathSwitch(r["t"], RAT(r["rat"]), r["inner"]))
            elif kind == "frame":
                dev.frames.append(FrameRecord(r["t"], Direction(r["dir"]), RAT(r["rat"]), r["seq"], r["dup"],
                                              r["probe"], r["rx"], r["session"]))
            elif kind == "delivery":
                dev.deliveries.setdefault(r["flow"], []).append(
                    DeliveryRecord(r["seq"], r["t"], r["delivered"], Direction(r["dir"]), RAT(r["rat"])))
            elif kind == "signal":
                dev.signals.append(SignalRecord(r["t"], r["x"], r["y"], r["wifi"], r["cbrs"], r["wifi_rate"],
                                                r["cbrs_rate"]))
            elif kind == "note":
                dev.notes.append((r["t"], r["msg"]))
            else:
                raise ValueError(f"unknown record type {kind!r}")
        if log is None:
            raise ValueError("empty event log")
        for dev in log.devices:
            _restore_order(dev)
        return log


_FLOW_KEYS = ("packet_size", "packet_interval", "request_interval", "request_size", "buffer_depth",
              "media_rate", "fill_ratio", "duration", "start")


def _flow_dict(f: FlowSpec) -> dict:
    d = {"flow": f.id, "cls": f.cls.value, "criticality": f.criticality.value}
    d.update({k: getattr(f, k) for k in _FLOW_KEYS})
    return d


def _flow_from_dict(r: dict) -> FlowSpec:
    return FlowSpec(id=r["flow"], cls=r["cls"], criticality=r["criticality"], **{k: r[k] for k in _FLOW_KEYS})


def _restore_order(dev: DeviceLog):
    # the merged stream interleaves record kinds; per-kind order is preserved
    # except deliveries, which are logged by send time but kept per direction
    for flow_id, recs in dev.deliveries.items():
        recs.sort(key=lambda r: (r.direction is Direction.DL, r.seq))


def finite_or_none(x: float) -> Optional[float]:
    return float(x) if math.isfinite(x) else None


def canonical_deliveries(recs: list[DeliveryRecord]) -> list[DeliveryRecord]:
    """Order used when logging, so parsed logs compare equal to fresh ones."""
    return sorted(recs, key=lambda r: (r.direction is Direction.DL, r.seq))
