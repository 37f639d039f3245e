"""Static radio environment: nodes, log-distance propagation, rate tables."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .enums import RAT
from .mobility import MobilityTrace, Point, sample_path

MIN_DISTANCE = 0.1  # m
SHADOW_GRID = 1.0  # m

#: sentinel returned by :func:`coverage_edge` when coverage never drops
BEYOND_PATH_END = math.inf


class InvalidArgument(ValueError):
    pass


@dataclass(frozen=True)
class RadioNode:
    id: str
    rat: RAT
    position: Point
    tx_power: float
    center_freq: float = 0.0
    bandwidth: float = 20.0
    channel_label: str = ""
    cell_id: Optional[int] = None
    pci: Optional[int] = None
    network: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rat", RAT(self.rat))
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if not all(map(math.isfinite, (*self.position, self.tx_power))):
            raise InvalidArgument(f"node {self.id}: position and tx_power must be finite")
        if self.rat is RAT.CBRS and round(self.bandwidth / 20.0) not in (1, 2):
            raise InvalidArgument(f"node {self.id}: CBRS carries one or two 20 MHz carriers")
        if self.bandwidth <= 0:
            raise InvalidArgument(f"node {self.id}: bandwidth must be > 0")

    @property
    def carriers(self) -> int:
        return max(1, int(round(self.bandwidth / 20.0)))


@dataclass(frozen=True)
class PathLossModel:
    reference_loss_db: float = 40.0
    exponent: float = 3.0
    shadowing_sigma_db: float = 0.0
    wall_penetration_db: float = 10.0
    seed: int = 0
    buildings: tuple[tuple[Point, ...], ...] = ()

    def __post_init__(self):
        if not 1.5 <= self.exponent <= 6:
            raise InvalidArgument("path-loss exponent must lie in [1.5, 6]")
        if self.shadowing_sigma_db < 0:
            raise InvalidArgument("shadowing_sigma_db must be >= 0")
        for v in (self.reference_loss_db, self.wall_penetration_db, self.shadowing_sigma_db):
            if not math.isfinite(v):
                raise InvalidArgument("path-loss parameters must be finite")
        object.__setattr__(
            self, "buildings",
            tuple(tuple((float(x), float(y)) for x, y in b) for b in self.buildings),
        )


@dataclass(frozen=True, slots=True)
class SignalSample:
    node_id: str
    metric: str  # "RSSI" or "RSRP"
    value: float
    at: Point
    network: str = ""


def metric_for(rat: RAT) -> str:
    return "RSSI" if rat is RAT.WIFI else "RSRP"


def validate_nodes(nodes: Sequence[RadioNode]) -> None:
    """Scenario-level checks: unique ids, pairwise-distinct CBRS PCIs."""
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise InvalidArgument("node ids must be unique")
    pcis = [n.pci for n in nodes if n.rat is RAT.CBRS]
    if None in pcis or len(set(pcis)) != len(pcis):
        raise InvalidArgument("CBRS nodes need pairwise-distinct PCI values")


# -- propagation ------------------------------------------------------------

def _walls_crossed(src: Point, pts: np.ndarray, buildings) -> np.ndarray:
    """Number of building edges strictly crossed by each segment src->pt."""
    count = np.zeros(len(pts), dtype=int)
    sx, sy = src
    px, py = pts[:, 0], pts[:, 1]
    for poly in buildings:
        n = len(poly)
        for i in range(n):
            (ax, ay), (bx, by) = poly[i], poly[(i + 1) % n]
            # orientation of a, b relative to segment src->pt and vice versa
            d1 = (px - sx) * (ay - sy) - (py - sy) * (ax - sx)
            d2 = (px - sx) * (by - sy) - (py - sy) * (bx - sx)
            d3 = (bx - ax) * (sy - ay) - (by - ay) * (sx - ax)
            d4 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            count += ((d1 * d2 < 0) & (d3 * d4 < 0)).astype(int)
    return count


def _unit_normals(keys: Iterable[str]) -> np.ndarray:
    out = []
    for key in keys:
        h = hashlib.blake2b(key.encode(), digest_size=16).digest()
        u1 = (int.from_bytes(h[:8], "big") + 1) / (2**64 + 1)
        u2 = int.from_bytes(h[8:], "big") / 2**64
        out.append(math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2))
    return np.array(out, dtype=float)


def shadow_db(model: PathLossModel, node_id: str, pts: np.ndarray) -> np.ndarray:
    """Spatially quantised lognormal shadowing, a pure function of its inputs."""
    if model.shadowing_sigma_db == 0:
        return np.zeros(len(pts))
    cells = np.floor(pts / SHADOW_GRID).astype(np.int64)
    uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
    keys = (f"{model.seed}|{node_id}|{cx}|{cy}" for cx, cy in uniq)
    return model.shadowing_sigma_db * _unit_normals(keys)[inverse.reshape(-1)]


def signal_values(node: RadioNode, pts, model: PathLossModel) -> np.ndarray:
    """Received level in dBm for each point in ``pts`` (shape ``(n, 2)``)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if not np.all(np.isfinite(pts)):
        raise InvalidArgument("positions must be finite")
    d = np.hypot(pts[:, 0] - node.position[0], pts[:, 1] - node.position[1])
    d = np.maximum(d, MIN_DISTANCE)
    value = node.tx_power - model.reference_loss_db - 10.0 * model.exponent * np.log10(d)
    if model.buildings:
        value = value - model.wall_penetration_db * _walls_crossed(node.position, pts, model.buildings)
    value = value - shadow_db(model, node.id, pts)
    return np.minimum(value, node.tx_power)


def signal_at(node: RadioNode, pos: Point, model: PathLossModel) -> SignalSample:
    if not all(math.isfinite(c) for c in pos):
        raise InvalidArgument("position must be finite")
    value = float(signal_values(node, [pos], model)[0])
    return SignalSample(node.id, metric_for(node.rat), value, (float(pos[0]), float(pos[1])), node.network)


def best_server(nodes: Sequence[RadioNode], pos: Point, rat: RAT, model: PathLossModel):
    """Strongest node of ``rat`` at ``pos`` as ``(node, sample)``; ``None`` if no candidate."""
    best = None
    for node in nodes:
        if node.rat is not rat:
            continue
        sample = signal_at(node, pos, model)
        if best is None or (sample.value, best[0].id) > (best[1].value, node.id):
            best = (node, sample)
    return best


def best_server_arrays(nodes: Sequence[RadioNode], pts: np.ndarray, rat: RAT, model: PathLossModel):
    """Per-point best-server index into the ``rat`` candidates and its level.

    Returns ``(candidates, index, value)``; ``candidates`` is sorted by id so
    that ``argmax`` tie-breaks toward the smallest id.
    """
    cands = sorted((n for n in nodes if n.rat is rat), key=lambda n: n.id)
    if not cands:
        return cands, None, None
    levels = np.vstack([signal_values(n, pts, model) for n in cands])
    idx = np.argmax(levels, axis=0)
    return cands, idx, levels[idx, np.arange(levels.shape[1])]


# -- rates ------------------------------------------------------------------

@dataclass(frozen=True)
class RateTable:
    """Monotone step table: ``(threshold_dbm, mbps)`` per 20 MHz, ascending."""

    steps: tuple[tuple[float, float], ...]
    reference_bandwidth: float = 20.0

    def __post_init__(self):
        steps = tuple((float(a), float(b)) for a, b in self.steps)
        if not steps:
            raise InvalidArgument("rate table needs at least one step")
        thr = [s[0] for s in steps]
        rates = [s[1] for s in steps]
        if thr != sorted(thr) or len(set(thr)) != len(thr):
            raise InvalidArgument("rate table thresholds must be strictly ascending")
        if rates != sorted(rates) or rates[0] < 0:
            raise InvalidArgument("rate table rates must be non-negative and non-decreasing")
        object.__setattr__(self, "steps", steps)

    @property
    def sensitivity(self) -> float:
        return self.steps[0][0]

    def rate(self, value: float, bandwidth: float) -> float:
        r = 0.0
        for thr, mbps in self.steps:
            if value >= thr:
                r = mbps
            else:
                break
        return r * bandwidth / self.reference_bandwidth

    def rates(self, values: np.ndarray, bandwidth: float) -> np.ndarray:
        thr = np.array([s[0] for s in self.steps])
        mbps = np.concatenate([[0.0], [s[1] for s in self.steps]])
        return mbps[np.searchsorted(thr, values, side="right")] * bandwidth / self.reference_bandwidth


# Calibrated defaults. The RSSI -89 dBm and RSRP -104 dBm @ 40 MHz anchors
# land on 0.5 Mbps and 8 Mbps; the remaining steps are implementer choices.
DEFAULT_RATE_TABLES: dict[str, RateTable] = {
    "RSSI": RateTable(((-90, 0.5), (-86, 2.0), (-82, 6.5), (-76, 12.0), (-70, 24.0), (-64, 54.0))),
    "RSRP": RateTable(((-118, 0.5), (-112, 2.0), (-106, 4.0), (-100, 10.0), (-90, 25.0), (-80, 50.0))),
}


def link_rate(sample: SignalSample, bandwidth: float,
              tables: Mapping[str, RateTable] = DEFAULT_RATE_TABLES) -> float:
    """Achievable rate in Mbps for ``sample`` on a link of ``bandwidth`` MHz."""
    return tables[sample.metric].rate(sample.value, bandwidth)


# -- coverage ---------------------------------------------------------------

def coverage_edge(nodes: Sequence[RadioNode], path: MobilityTrace, rat: RAT, threshold: float,
                  model: PathLossModel, step: float = 0.5) -> float:
    """Arclength where best-server level drops below ``threshold`` for good.

    The path is sampled every ``step`` metres (at most 1 m). Returns
    :data:`BEYOND_PATH_END` if the last sample is still covered.
    """
    if path is None or not path.waypoints:
        raise InvalidArgument("empty path")
    if step > 1.0:
        raise InvalidArgument("path must be sampled at <= 1 m spacing")
    s, pts = sample_path(path, step)
    _, idx, value = best_server_arrays(nodes, pts, rat, model)
    if idx is None:
        return 0.0
    covered = value >= threshold
    if covered[-1]:
        return BEYOND_PATH_END
    last_covered = np.flatnonzero(covered)
    if last_covered.size == 0:
        return 0.0
    return float(s[last_covered[-1] + 1])
