"""Reports computed from event logs only."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from ..device import switch_intervals
from ..enums import RAT, Mode
from ..traffic import SEAMLESS_THRESHOLD, FlowClass, measure_interruption, rebuffer_events
from .eventlog import DeviceLog, EventLog

WIFI_TO_CBRS = "WIFI->CBRS"
CBRS_TO_WIFI = "CBRS->WIFI"
DIRECTIONS = (WIFI_TO_CBRS, CBRS_TO_WIFI)
THROUGHPUT_BIN_M = 5.0


@dataclass(frozen=True)
class Stat:
    mean: Optional[float]
    min: Optional[float]
    max: Optional[float]
    n: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "Stat":
        if not values:
            return cls(None, None, None, 0)
        return cls(math.fsum(values) / len(values), min(values), max(values), len(values))


@dataclass(frozen=True)
class ReportRow:
    device: str
    model: str
    mode: Mode
    flow: str
    flow_class: FlowClass
    direction: str
    switch: Stat
    gap: Stat
    runs: int
    unmeasured: int
    samples: tuple[tuple[int, float], ...]  # (seed, interruption) per measured run

    @property
    def seamless(self) -> Optional[bool]:
        return None if self.gap.mean is None else self.gap.mean < SEAMLESS_THRESHOLD

    def by_seed(self) -> dict[int, float]:
        return dict(self.samples)


@dataclass(frozen=True)
class RebufferRow:
    device: str
    mode: Mode
    flow: str
    runs: int
    events: int
    stall_s: float


@dataclass(frozen=True)
class ThroughputRow:
    device: str
    x: float  # bin centre, m
    wifi_rssi: Optional[float]
    wifi_mbps: float
    cbrs_rsrp: Optional[float]
    cbrs_mbps: float


@dataclass
class Report:
    rows: list[ReportRow] = field(default_factory=list)
    rebuffer: list[RebufferRow] = field(default_factory=list)
    throughput: list[ThroughputRow] = field(default_factory=list)

    def row(self, device: str, flow: str, direction: str, mode: Mode = Mode.TRADITIONAL) -> ReportRow:
        for r in self.rows:
            if (r.device, r.flow, r.direction, r.mode) == (device, flow, direction, Mode(mode)):
                return r
        raise KeyError((device, flow, direction, mode))

    def find(self, device: str, flow: str, direction: str, mode: Mode = Mode.TRADITIONAL) -> Optional[ReportRow]:
        try:
            return self.row(device, flow, direction, mode)
        except KeyError:
            return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["device", "model", "mode", "flow", "class", "direction", "runs", "unmeasured",
                    "switch_mean", "switch_min", "switch_max", "gap_mean", "gap_min", "gap_max", "seamless"])
        for r in self.rows:
            w.writerow([r.device, r.model, r.mode.value, r.flow, r.flow_class.value, r.direction, r.runs,
                        r.unmeasured, *map(_num, (r.switch.mean, r.switch.min, r.switch.max)),
                        *map(_num, (r.gap.mean, r.gap.min, r.gap.max)), _flag(r.seamless)])
        return buf.getvalue()

    def rebuffer_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["device", "mode", "flow", "runs", "rebuffer_events", "stall_s"])
        for r in self.rebuffer:
            w.writerow([r.device, r.mode.value, r.flow, r.runs, r.events, _num(r.stall_s)])
        return buf.getvalue()

    def throughput_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["device", "x_m", "wifi_rssi_dbm", "wifi_mbps", "cbrs_rsrp_dbm", "cbrs_mbps"])
        for r in self.throughput:
            w.writerow([r.device, _num(r.x), _num(r.wifi_rssi), _num(r.wifi_mbps), _num(r.cbrs_rsrp),
                        _num(r.cbrs_mbps)])
        return buf.getvalue()

    def table(self, flow: str) -> str:
        """Human table in the layout of the per-model switch-time comparison."""
        head = ("Device Model", "Mode", "Switch Time from Wi-Fi to CBRS", "Switch Time from CBRS to Wi-Fi")
        lines = []
        for (model, mode), cells in self._cells(flow).items():
            lines.append((model, mode.value, _cell(cells.get(WIFI_TO_CBRS)), _cell(cells.get(CBRS_TO_WIFI))))
        widths = [max(len(h), *(len(l[k]) for l in lines)) if lines else len(h) for k, h in enumerate(head)]
        fmt = " | ".join("{:<%d}" % w for w in widths)
        out = [fmt.format(*head), "-+-".join("-" * w for w in widths)]
        out += [fmt.format(*l) for l in lines]
        return "\n".join(out) + "\n"

    def four_mode_csv(self, flow: str) -> str:
        """Mean interruption per model and mode: one row per (model, mode)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "mode", "flow", "wifi_to_cbrs_s", "cbrs_to_wifi_s", "wifi_to_cbrs_seamless",
                    "cbrs_to_wifi_seamless"])
        for (model, mode), cells in self._cells(flow).items():
            a, b = cells.get(WIFI_TO_CBRS), cells.get(CBRS_TO_WIFI)
            w.writerow([model, mode.value, flow, _num(a.gap.mean if a else None), _num(b.gap.mean if b else None),
                        _flag(a.seamless if a else None), _flag(b.seamless if b else None)])
        return buf.getvalue()

    def cells(self, flow: str) -> int:
        return sum(len(c) for c in self._cells(flow).values())

    def _cells(self, flow: str) -> dict:
        out: dict = {}
        order = {Mode.TRADITIONAL: 0, Mode.TUNNEL: 1}
        for r in sorted((r for r in self.rows if r.flow == flow), key=lambda r: (order[r.mode], r.model)):
            out.setdefault((r.model, r.mode), {})[r.direction] = r
        return out


def _num(x) -> str:
    if x is None:
        return ""
    return f"{x:.4f}"


def _flag(x) -> str:
    return "" if x is None else ("yes" if x else "no")


def _cell(r: Optional[ReportRow]) -> str:
    if r is None or r.gap.mean is None:
        return "n/a"
    return "Seamless" if r.seamless else f"{r.gap.mean:.1f} S"


def _direction(from_rat: RAT, to_rat: RAT) -> Optional[str]:
    if from_rat is RAT.WIFI and to_rat is RAT.CBRS:
        return WIFI_TO_CBRS
    if from_rat is RAT.CBRS and to_rat is RAT.WIFI:
        return CBRS_TO_WIFI
    return None


def interruptions(dev: DeviceLog) -> dict[tuple[str, str], list]:
    """``(flow, direction) -> [InterruptionRecord, ...]`` for one device run."""
    transitions = switch_intervals(dev.events)
    out: dict = defaultdict(list)
    for flow in dev.flows:
        for rec in measure_interruption(dev.deliveries.get(flow.id, []), transitions, flow):
            d = _direction(rec.from_rat, rec.to_rat)
            if d is not None:
                out[(flow.id, d)].append(rec)
            elif rec.to_rat is RAT.NONE:
                out[(flow.id, "open")].append(rec)
    return out


def build_report(logs: Iterable[EventLog]) -> Report:
    groups: dict = defaultdict(lambda: {"switch": [], "gap": [], "runs": 0, "unmeasured": 0, "samples": []})
    meta: dict = {}
    rebuf: dict = defaultdict(lambda: [0, 0, 0.0])
    first_run: dict = {}
    for log in logs:
        for dev in log.devices:
            meta_key = (dev.device, dev.mode)
            meta[meta_key] = dev.model
            first_run.setdefault(dev.device, dev)
            per = interruptions(dev)
            for flow in dev.flows:
                for d in DIRECTIONS:
                    recs = per.get((flow.id, d), [])
                    if not recs:
                        continue
                    g = groups[(dev.device, dev.mode, flow.id, d)]
                    g["runs"] += 1
                    measured = [r for r in recs if r.measurable]
                    if len(measured) < len(recs) or not measured:
                        g["unmeasured"] += 1
                    if measured:
                        worst = max(measured, key=lambda r: r.max_gap)
                        g["gap"].append(worst.max_gap)
                        if worst.switch_time is not None:
                            g["switch"].append(worst.switch_time)
                        g["samples"].append((log.seed, worst.max_gap))
                if flow.cls is FlowClass.BUFFERED:
                    ev = rebuffer_events(flow, dev.deliveries.get(flow.id, []))
                    acc = rebuf[(dev.device, dev.mode, flow.id)]
                    acc[0] += 1
                    acc[1] += len(ev)
                    acc[2] += math.fsum(d for _, d in ev)

    report = Report()
    order = {Mode.TRADITIONAL: 0, Mode.TUNNEL: 1}
    for key in sorted(groups, key=lambda k: (order[k[1]], k[0], k[2], DIRECTIONS.index(k[3]))):
        device, mode, flow_id, d = key
        g = groups[key]
        flow_cls = _flow_class(first_run[device], flow_id)
        report.rows.append(ReportRow(device, meta[(device, mode)], mode, flow_id, flow_cls, d,
                                     Stat.of(g["switch"]), Stat.of(g["gap"]), g["runs"], g["unmeasured"],
                                     tuple(g["samples"])))
    for (device, mode, flow_id) in sorted(rebuf, key=lambda k: (order[k[1]], k[0], k[2])):
        runs, n, stall = rebuf[(device, mode, flow_id)]
        report.rebuffer.append(RebufferRow(device, mode, flow_id, runs, n, stall))
    for device, dev in first_run.items():
        report.throughput.extend(_throughput(dev))
    return report


def _flow_class(dev: DeviceLog, flow: str) -> FlowClass:
    for f in dev.flows:
        if f.id == flow:
            return f.cls
    raise KeyError(flow)


def _throughput(dev: DeviceLog) -> list[ThroughputRow]:
    bins: dict = defaultdict(list)
    for s in dev.signals:
        bins[math.floor(s.x / THROUGHPUT_BIN_M)].append(s)
    rows = []
    for b in sorted(bins):
        ss = bins[b]
        wifi = [s.wifi for s in ss if s.wifi is not None]
        cbrs = [s.cbrs for s in ss if s.cbrs is not None]
        rows.append(ThroughputRow(
            dev.device, (b + 0.5) * THROUGHPUT_BIN_M,
            math.fsum(wifi) / len(wifi) if wifi else None, math.fsum(s.wifi_rate for s in ss) / len(ss),
            math.fsum(cbrs) / len(cbrs) if cbrs else None, math.fsum(s.cbrs_rate for s in ss) / len(ss)))
    return rows
