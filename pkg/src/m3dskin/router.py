"""Wiring-layer router.

Each tile has two nets: its top electrode (reached through a via column) and
its bottom electrode (which sits directly on the wiring layer).  Nets are
routed one after another, in ascending ``(tile_id, side)`` order, on a
rectilinear grid.  A routed trace blocks every grid node within
``clearance + trace_width`` of its centre line for later nets, so trace
edges of different nets stay at least ``clearance`` apart.  Other tiles are
keep-out areas; a net may cross its own tile.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import LineString, Point as ShapelyPoint, Polygon

from .geometry import Point, polyline_length, to_polygon

# Conductive TPU bulk resistivity (ohm m).  Calibration value, not a measured
# material constant.
DEFAULT_RESISTIVITY = 0.04
DEFAULT_TRACE_WIDTH = 0.8
DEFAULT_CLEARANCE = 0.8
DEFAULT_PITCH = 1.0

# Small per-bend cost so equally short routes prefer fewer corners.
_BEND_COST = 1e-3


class Side(enum.IntEnum):
    TOP = 0
    BOTTOM = 1

    @property
    def label(self) -> str:
        return "TopElectrode" if self is Side.TOP else "BottomElectrode"


@dataclass(frozen=True)
class Net:
    tile_id: int
    side: Side
    via_point: Point
    terminal: Point

    @property
    def key(self) -> tuple[int, int]:
        return (self.tile_id, int(self.side))


@dataclass(frozen=True)
class Trace:
    net: Net
    path: tuple[Point, ...]
    trace_width: float
    thickness: float
    estimated_resistance: float

    @property
    def length(self) -> float:
        return polyline_length(self.path)


class Unroutable(RuntimeError):
    def __init__(self, net: Net, reason: str = "no path at the required clearance"):
        self.net = net
        super().__init__(f"net tile={net.tile_id} side={net.side.label}: {reason}")


def trace_resistance(length: float, cross_section: float, resistivity: float) -> float:
    """Resistance of a uniform conductor, rho * L / A (SI units)."""
    if length <= 0 or cross_section <= 0 or resistivity <= 0:
        raise ValueError("length, cross_section and resistivity must all be > 0")
    return resistivity * length / cross_section


def place_vias(tile, top_terminal: Point, bottom_terminal: Point, *, pitch: float = DEFAULT_PITCH,
               inset: float = 2.0) -> tuple[Point, Point]:
    """Pick grid-aligned via points inside ``tile`` facing the terminals.

    Each via is the grid node nearest to the point of the tile's inset ring
    closest to its terminal; the top via is pushed along the ring when both
    land within three pitches of each other.
    """
    poly = to_polygon(tile)
    inner = poly.buffer(-inset, join_style="mitre")
    if inner.is_empty:
        inner = poly.buffer(-pitch / 2.0, join_style="mitre")
    ring = inner.exterior if inner.geom_type == "Polygon" else max(inner.geoms, key=lambda g: g.area).exterior
    candidates = _grid_nodes_inside(inner if inner.geom_type == "Polygon" else poly, pitch)

    def nearest_node(p: ShapelyPoint, exclude=()) -> Point:
        best = None
        for c in candidates:
            if any(math.hypot(c[0] - e[0], c[1] - e[1]) < 3 * pitch - 1e-9 for e in exclude):
                continue
            d = (c[0] - p.x) ** 2 + (c[1] - p.y) ** 2
            if best is None or d < best[0] - 1e-12:
                best = (d, c)
        if best is None:
            raise ValueError("tile too small to place two vias")
        return best[1]

    bottom_anchor = ring.interpolate(ring.project(ShapelyPoint(bottom_terminal)))
    bottom = nearest_node(bottom_anchor)
    top_anchor = ring.interpolate(ring.project(ShapelyPoint(top_terminal)))
    top = nearest_node(top_anchor, exclude=(bottom,))
    return top, bottom


def _grid_nodes_inside(poly: Polygon, pitch: float) -> list[Point]:
    x0, y0, x1, y1 = poly.bounds
    xs = np.arange(math.ceil(x0 / pitch), math.floor(x1 / pitch) + 1) * pitch
    ys = np.arange(math.ceil(y0 / pitch), math.floor(y1 / pitch) + 1) * pitch
    out = []
    for x in xs:
        for y in ys:
            if poly.contains(ShapelyPoint(x, y)):
                out.append((round(float(x), 9), round(float(y), 9)))
    return out


class _Grid:
    def __init__(self, region: Polygon, pitch: float, margin: float):
        self.pitch = pitch
        x0, y0, x1, y1 = region.bounds
        self.i0 = math.ceil(x0 / pitch)
        self.j0 = math.ceil(y0 / pitch)
        self.nx = math.floor(x1 / pitch) - self.i0 + 1
        self.ny = math.floor(y1 / pitch) - self.j0 + 1
        xs = (self.i0 + np.arange(self.nx)) * pitch
        ys = (self.j0 + np.arange(self.ny)) * pitch
        self.X, self.Y = np.meshgrid(xs, ys, indexing="ij")
        inner = region.buffer(-margin, join_style="mitre")
        self.free = shapely.contains_xy(inner, self.X, self.Y) if not inner.is_empty else np.zeros_like(self.X, bool)

    def xy(self, ij) -> Point:
        i, j = ij
        return (round(float((self.i0 + i) * self.pitch), 9), round(float((self.j0 + j) * self.pitch), 9))

    def near_mask(self, geom, dist: float) -> np.ndarray:
        return shapely.dwithin(geom, shapely.points(self.X, self.Y), dist)

    def inside_mask(self, poly) -> np.ndarray:
        return shapely.contains_xy(poly, self.X, self.Y)

    def nearest(self, p: Point, usable: np.ndarray):
        d2 = (self.X - p[0]) ** 2 + (self.Y - p[1]) ** 2
        d2 = np.where(usable, d2, np.inf)
        flat = int(np.argmin(d2))
        if not np.isfinite(d2.flat[flat]):
            return None
        return np.unravel_index(flat, d2.shape)


_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def _search(usable: np.ndarray, start, goal):
    """A* over 4-connected free cells, cost = steps + bend penalty."""
    if start == goal:
        return [start]
    nx, ny = usable.shape
    counter = itertools.count()
    h = lambda c: abs(c[0] - goal[0]) + abs(c[1] - goal[1])
    open_heap = [(h(start), next(counter), 0.0, start, -1)]
    best: dict = {(start, -1): 0.0}
    parent: dict = {}
    while open_heap:
        f, _, g, cell, d = heapq.heappop(open_heap)
        if cell == goal:
            path = [cell]
            state = (cell, d)
            while state in parent:
                state = parent[state]
                path.append(state[0])
            return path[::-1]
        if g > best.get((cell, d), math.inf):
            continue
        for k, (di, dj) in enumerate(_DIRS):
            n = (cell[0] + di, cell[1] + dj)
            if not (0 <= n[0] < nx and 0 <= n[1] < ny) or not usable[n]:
                continue
            ng = g + 1.0 + (_BEND_COST if d not in (-1, k) else 0.0)
            if ng < best.get((n, k), math.inf) - 1e-12:
                best[(n, k)] = ng
                parent[(n, k)] = (cell, d)
                heapq.heappush(open_heap, (ng + h(n), next(counter), ng, n, k))
    return None


def _simplify(points: list[Point]) -> list[Point]:
    out = [points[0]]
    for p in points[1:]:
        if p == out[-1]:
            continue
        if len(out) >= 2:
            a, b = out[-2], out[-1]
            cross = (b[0] - a[0]) * (p[1] - b[1]) - (b[1] - a[1]) * (p[0] - b[0])
            if abs(cross) < 1e-12:
                out[-1] = p
                continue
        out.append(p)
    return out


def route_nets(
    nets: list[Net],
    wiring_region,
    clearance: float = DEFAULT_CLEARANCE,
    grid_pitch: float = DEFAULT_PITCH,
    *,
    tiles=(),
    trace_width: float = DEFAULT_TRACE_WIDTH,
    thickness: float = 0.4,
    resistivity: float = DEFAULT_RESISTIVITY,
) -> list[Trace]:
    """Route every net; returns traces in ascending (tile_id, side) order.

    ``tiles`` (polygons indexed by tile id) are keep-outs for foreign nets.
    Raises ``ValueError`` when an endpoint lies outside the wiring region and
    ``Unroutable`` when a net cannot be completed.
    """
    region = to_polygon(wiring_region)
    for net in nets:
        for label, p in (("via", net.via_point), ("terminal", net.terminal)):
            if not region.covers(ShapelyPoint(p)):
                raise ValueError(f"{label} {p} of net {net.key} is outside the wiring region")

    spread = clearance + trace_width
    grid = _Grid(region, grid_pitch, trace_width / 2.0)
    tile_polys = [to_polygon(t) for t in tiles]
    tile_masks = [grid.near_mask(t, clearance + trace_width / 2.0) for t in tile_polys]
    blocked = np.zeros_like(grid.free)

    ordered = sorted(nets, key=lambda n: n.key)
    endpoints = {n.key: shapely.multipoints([n.via_point, n.terminal]) for n in ordered}
    # endpoints sit off-grid; a grid segment whose end nodes both clear this
    # radius keeps ``spread`` from the endpoint itself
    endpoint_spread = math.hypot(spread, grid_pitch / 2.0)
    traces = []
    for net in ordered:
        usable = grid.free & ~blocked
        for tid, mask in enumerate(tile_masks):
            if tid != net.tile_id:
                usable &= ~mask
        for other in ordered:
            if other.key != net.key:
                usable &= ~grid.near_mask(endpoints[other.key], endpoint_spread)
        start = grid.nearest(net.via_point, usable)
        goal = grid.nearest(net.terminal, usable)
        if start is None or goal is None:
            raise Unroutable(net, "endpoint has no free grid node")
        cells = _search(usable, start, goal)
        if cells is None:
            raise Unroutable(net)
        pts = [net.via_point] + [grid.xy(c) for c in cells] + [net.terminal]
        path = tuple(_simplify(pts))
        if len(path) == 1:
            path = (net.via_point, net.terminal)
        line = LineString(path)
        for prev in traces:
            gap = line.distance(LineString(prev.path)) - trace_width
            if gap < clearance - 1e-9:
                raise Unroutable(net, f"stub comes {gap:.3f} mm from net {prev.net.key}")
        blocked |= grid.near_mask(line, spread)
        length_m = max(line.length, 1e-6) * 1e-3
        area_m2 = trace_width * thickness * 1e-6
        traces.append(
            Trace(
                net=net,
                path=path,
                trace_width=trace_width,
                thickness=thickness,
                estimated_resistance=trace_resistance(length_m, area_m2, resistivity),
            )
        )
    return traces


def clearance_violations(traces: list[Trace], clearance: float) -> list[tuple[int, int, float]]:
    """Pairs of traces (by index) whose edge-to-edge gap is below ``clearance``."""
    out = []
    lines = [LineString(t.path) for t in traces]
    for i, j in itertools.combinations(range(len(traces)), 2):
        gap = lines[i].distance(lines[j]) - (traces[i].trace_width + traces[j].trace_width) / 2.0
        if gap < clearance - 1e-9:
            out.append((i, j, gap))
    return out


def nets_for_spec(vspec, pitch: float = DEFAULT_PITCH) -> list[Net]:
    """Two nets per tile with vias placed by ``place_vias``."""
    nets = []
    for tid, tile in enumerate(vspec.tiles):
        t_top, t_bot = vspec.terminal_pair(tid)
        via_top, via_bot = place_vias(tile, t_top, t_bot, pitch=pitch)
        nets.append(Net(tid, Side.TOP, via_top, t_top))
        nets.append(Net(tid, Side.BOTTOM, via_bot, t_bot))
    return nets


def route_spec(vspec, *, clearance: float = DEFAULT_CLEARANCE, grid_pitch: float = DEFAULT_PITCH,
               trace_width: float = DEFAULT_TRACE_WIDTH, resistivity: float = DEFAULT_RESISTIVITY) -> list[Trace]:
    return route_nets(
        nets_for_spec(vspec, grid_pitch),
        vspec.footprint,
        clearance,
        grid_pitch,
        tiles=vspec.tiles,
        trace_width=trace_width,
        thickness=vspec.params.wiring_layer_thickness,
        resistivity=resistivity,
    )
