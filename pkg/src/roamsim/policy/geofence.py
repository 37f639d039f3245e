"""Campus geofences: planar shapes plus macro-cell radio footprints.

Coordinates share the simulator's planar metre frame. Shapes are closed, so
points on a boundary count as inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

Point = tuple[float, float]

_EPS = 1e-9


class GeofenceError(ValueError):
    pass


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _on_segment(p: Point, a: Point, b: Point) -> bool:
    scale = max(1.0, abs(a[0]), abs(a[1]), abs(b[0]), abs(b[1]))
    if abs(_cross(a, b, p)) > _EPS * scale * max(1.0, math.dist(a, b)):
        return False
    return (min(a[0], b[0]) - _EPS * scale <= p[0] <= max(a[0], b[0]) + _EPS * scale
            and min(a[1], b[1]) - _EPS * scale <= p[1] <= max(a[1], b[1]) + _EPS * scale)


def _edges(vertices: Sequence[Point]):
    n = len(vertices)
    return ((vertices[i], vertices[(i + 1) % n]) for i in range(n))


def on_boundary(p: Point, vertices: Sequence[Point]) -> bool:
    return any(_on_segment(p, a, b) for a, b in _edges(vertices))


def point_in_polygon_ray(p: Point, vertices: Sequence[Point]) -> bool:
    """Even-odd ray casting toward +x; boundary points are inside."""
    if on_boundary(p, vertices):
        return True
    x, y = p
    inside = False
    for (x1, y1), (x2, y2) in _edges(vertices):
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def winding_number(p: Point, vertices: Sequence[Point]) -> int:
    wn = 0
    for a, b in _edges(vertices):
        if a[1] <= p[1]:
            if b[1] > p[1] and _cross(a, b, p) > 0:
                wn += 1
        elif b[1] <= p[1] and _cross(a, b, p) < 0:
            wn -= 1
    return wn


def point_in_polygon_winding(p: Point, vertices: Sequence[Point]) -> bool:
    return on_boundary(p, vertices) or winding_number(p, vertices) != 0


def _segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool:
    d1, d2 = _cross(c, d, a), _cross(c, d, b)
    d3, d4 = _cross(a, b, c), _cross(a, b, d)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return True
    return (_on_segment(a, c, d) or _on_segment(b, c, d) or _on_segment(c, a, b) or _on_segment(d, a, b))


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[Point, ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts = verts[:-1]
        if len(set(verts)) < 3:
            raise GeofenceError("polygon needs at least 3 distinct vertices")
        if not all(math.isfinite(c) for v in verts for c in v):
            raise GeofenceError("polygon vertices must be finite")
        n = len(verts)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_intersect(verts[i], verts[(i + 1) % n], verts[j], verts[(j + 1) % n]):
                    raise GeofenceError(f"polygon self-intersects (edges {i} and {j})")
        object.__setattr__(self, "vertices", verts)

    def contains(self, p: Point) -> bool:
        return point_in_polygon_ray(p, self.vertices)


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GeofenceError("circle radius must be > 0")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def contains(self, p: Point) -> bool:
        return math.dist(p, self.center) <= self.radius * (1 + _EPS)


Shape = Union[Polygon, Circle]


@dataclass(frozen=True)
class FootprintCell:
    cell_id: int
    min_sinr: Optional[float] = None
    min_cqi: Optional[int] = None


@dataclass(frozen=True)
class GeofenceSpec:
    shapes: tuple[Shape, ...] = ()
    footprint_cells: tuple[FootprintCell, ...] = ()
    campus_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        object.__setattr__(self, "footprint_cells", tuple(self.footprint_cells))
        ids = [c.cell_id for c in self.footprint_cells]
        if len(set(ids)) != len(ids):
            raise GeofenceError("footprint cell ids must be unique")


def geofence_contains(spec: GeofenceSpec, pos: Point) -> bool:
    return any(shape.contains(pos) for shape in spec.shapes)


def footprint_trigger(spec: GeofenceSpec, visible_macro: Iterable[tuple[int, float, int]]) -> bool:
    """True when a listed macro cell is visible and meets its optional SINR/CQI minima."""
    wanted = {c.cell_id: c for c in spec.footprint_cells}
    for cell_id, sinr, cqi in visible_macro:
        entry = wanted.get(cell_id)
        if entry is None:
            continue
        if entry.min_sinr is not None and sinr < entry.min_sinr:
            continue
        if entry.min_cqi is not None and cqi < entry.min_cqi:
            continue
        return True
    return False


def shape_from_dict(d: dict) -> Shape:
    if "polygon" in d:
        return Polygon(tuple(tuple(v) for v in d["polygon"]))
    if "circle" in d:
        c = d["circle"]
        return Circle(tuple(c["center"]), float(c["radius"]))
    raise GeofenceError(f"unknown shape {sorted(d)}")


def geofence_from_dict(d: dict) -> GeofenceSpec:
    cells = tuple(FootprintCell(int(c["cell_id"]), c.get("min_sinr"), c.get("min_cqi"))
                  for c in d.get("footprint_cells", ()))
    return GeofenceSpec(tuple(shape_from_dict(s) for s in d.get("shapes", ())), cells, d.get("campus_name", ""))
