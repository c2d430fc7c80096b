"""Per-layer toolpaths: walls, sparse infill patterns and solid rasters.

Density convention: a family of parallel lines of extrusion width ``w`` at
spacing ``s`` covers ``w / s`` of the plane, so every pattern picks its cell
size such that ``total path length * w / area`` equals the requested density.
Patterns are anchored to the global origin so that identical regions on
different layers line up.

Canonical pattern geometry
--------------------------
Grid
    Lines along x and along y, each family at spacing ``2 w / density``.
Honeycomb
    Regular hexagon walls (pointy-top), printed as zig-zag rows plus the
    vertical wall pieces between them.  Identical on every layer.
ThreeDHoneycomb
    Square grid whose crossings are replaced by 45-degree diamonds of
    half-diagonal ``c(z)``.  ``c`` follows a triangle wave over a vertical
    period equal to the cell size: squares at the start of the period,
    regular octagons + small squares at mid period.
Gyroid
    Zero level set of ``sin x cos y + sin y cos z + sin z cos x`` with all
    coordinates scaled by ``2 pi / period``.
Cubic
    Three line families at 0, 60 and 120 degrees, each shifted by
    ``z / sqrt(2)`` (alternating sign) so the cross-section drifts with height.
ArchimedeanChords
    Archimedean spiral about the region's bounding-box centre, turn spacing
    ``w / density``, approximated by short chords.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import LinearRing, LineString, Polygon
from shapely.geometry.base import BaseGeometry
from shapely.geometry.polygon import orient
from shapely.ops import unary_union
from skimage.measure import find_contours

from .geometry import Point, lines_of, polygons_of, polyline_length, to_polygon
from .spec_model import Material, Pattern

# Fragments shorter than this after clipping are not printable.
MIN_SEGMENT = 0.2

# Mean zero-level-set length per unit area of the trig gyroid, averaged over
# one vertical period, for a unit period.  Verified in tests/test_infill.py.
GYROID_LENGTH_DENSITY = 2.456

# Corner truncation of the 3D honeycomb at mid period; gives regular octagons.
HONEYCOMB3D_MAX_TRUNCATION = 1.0 / (2.0 + math.sqrt(2.0))
_H3D_MEAN_FACTOR = 1.0 + 2.0 * (math.sqrt(2.0) - 1.0) * HONEYCOMB3D_MAX_TRUNCATION / 2.0

Z_VARYING = frozenset({Pattern.THREE_D_HONEYCOMB, Pattern.GYROID, Pattern.CUBIC})


class InfillWarning(UserWarning):
    """Region too small for a single pattern cell; nothing was generated."""


@dataclass(frozen=True)
class Toolpath:
    points: tuple[Point, ...]
    width: float
    material: Material
    closed: bool = False

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("toolpath needs at least 2 points")

    @property
    def length(self) -> float:
        return polyline_length(self.points, closed=self.closed)

    def segments(self) -> list[tuple[Point, Point]]:
        pts = list(self.points)
        if self.closed:
            pts.append(pts[0])
        return list(zip(pts[:-1], pts[1:]))


@dataclass(frozen=True)
class InfillRequest:
    pattern: Pattern
    density: float
    layer_index: int
    z: float
    region: object  # vertex list or shapely polygon
    width: float
    material: Material = Material.CONDUCTIVE
    period_hint: float | None = None
    wall_thickness: float = 0.0

    def __post_init__(self):
        if not 0 < self.density <= 1:
            raise ValueError(f"density must be in (0, 1], got {self.density}")
        if not self.width > 0:
            raise ValueError(f"width must be > 0, got {self.width}")


def line_spacing(density: float, width: float) -> float:
    if not 0 < density <= 1:
        raise ValueError(f"density must be in (0, 1], got {density}")
    return width / density


def _as_geometry(region) -> BaseGeometry:
    if isinstance(region, BaseGeometry):
        return region
    if isinstance(region, (list, tuple)) and region and isinstance(region[0], Polygon):
        return unary_union(region)
    return to_polygon(region)


def offset_region(region, distance: float) -> list[Polygon]:
    """Offset a region; positive ``distance`` shrinks it (inset).

    Mitred joins keep rectilinear shapes rectilinear.  Returns the resulting
    polygons (CCW, possibly with holes), or an empty list once it vanishes.
    """
    geom = _as_geometry(region)
    if distance == 0:
        out = polygons_of(geom)
    else:
        out = polygons_of(geom.buffer(-distance, join_style="mitre", mitre_limit=10.0))
    return [orient(p, 1.0) for p in out if p.area > 1e-12]


def _clean(points: Iterable[Sequence[float]]) -> tuple[Point, ...]:
    out: list[Point] = []
    for x, y in points:
        p = (float(x), float(y))
        if out and math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) <= 1e-9:
            continue
        out.append(p)
    return tuple(out)


def _to_toolpaths(geoms: Iterable[BaseGeometry], width: float, material: Material,
                  min_length: float = MIN_SEGMENT) -> list[Toolpath]:
    paths = []
    for g in geoms:
        if isinstance(g, LinearRing):
            pts = _clean(g.coords[:-1])
            if len(pts) >= 3 and polyline_length(pts, closed=True) >= min_length:
                paths.append(Toolpath(pts, width, material, closed=True))
            continue
        for line in lines_of(g):
            pts = _clean(line.coords)
            closed = len(pts) > 3 and pts[0] == pts[-1]
            if closed:
                pts = pts[:-1]
            if len(pts) >= 2 and polyline_length(pts, closed=closed) >= min_length:
                paths.append(Toolpath(pts, width, material, closed=closed))
    return paths


def _clip(lines: Sequence[BaseGeometry], region: BaseGeometry) -> list[BaseGeometry]:
    """Clip open lines and closed rings against ``region``."""
    out: list[BaseGeometry] = []
    open_lines = []
    for g in lines:
        if isinstance(g, LinearRing):
            if region.covers(g):
                out.append(g)
            else:
                open_lines.append(LineString(g.coords))
        else:
            open_lines.append(g)
    # one line at a time: clipping a collection would node it at crossings
    if not open_lines:
        return out
    edge = region.boundary.buffer(1e-7)
    for clipped in shapely.intersection(np.array(open_lines, dtype=object), region):
        for part in lines_of(clipped):
            # pieces running along the boundary are the wall's job
            if not edge.covers(part):
                out.append(part)
    return out


# --- walls and solid ----------------------------------------------------

def generate_walls(region, wall_thickness: float, width: float,
                   material: Material = Material.CONDUCTIVE) -> list[Toolpath]:
    """Concentric closed loops at insets width/2, 3 width/2, ..."""
    loops = wall_thickness / width
    k = int(round(loops))
    if wall_thickness < 0 or abs(loops - k) > 1e-9 * max(1.0, loops):
        raise ValueError(
            f"wall thickness {wall_thickness} is not a whole number of {width} mm lines"
        )
    paths = []
    for i in range(k):
        for poly in offset_region(region, width / 2 + i * width):
            rings = [poly.exterior, *poly.interiors]
            for ring in rings:
                pts = _clean(ring.coords[:-1])
                if len(pts) >= 3:
                    paths.append(Toolpath(pts, width, material, closed=True))
    return paths


def solid_angle(layer_index: int) -> float:
    """Raster direction alternates 0 / 90 degrees by layer parity."""
    return 0.0 if layer_index % 2 == 0 else 90.0


def _rotate(xy: np.ndarray, angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    return xy @ np.array([[c, s], [-s, c]])


def generate_solid(region, width: float, angle: float = 0.0,
                   material: Material = Material.NON_CONDUCTIVE) -> list[Toolpath]:
    """Parallel raster at spacing ``width`` covering the region.

    Lines run along ``angle`` (degrees from +x) and alternate direction.
    """
    geom = _as_geometry(region)
    if geom.is_empty or geom.area <= 0:
        return []
    # work in a frame where the raster runs along +x
    from shapely import affinity

    local = affinity.rotate(geom, -angle, origin=(0.0, 0.0))
    x0, y0, x1, y1 = local.bounds
    n = int(math.ceil((y1 - y0) / width - 1e-9))
    lines = []
    for j in range(n):
        y = y0 + (j + 0.5) * width
        seg = LineString([(x0 - 1.0, y), (x1 + 1.0, y)]).intersection(local)
        parts = sorted(lines_of(seg), key=lambda ls: ls.coords[0][0])
        if j % 2:
            parts = [LineString(list(p.coords)[::-1]) for p in reversed(parts)]
        lines.extend(parts)
    paths = []
    for line in lines:
        pts = np.asarray(line.coords)
        back = np.round(_rotate(pts, angle), 9) if angle else pts
        clean = _clean(back)
        if len(clean) >= 2 and polyline_length(clean) >= MIN_SEGMENT:
            paths.append(Toolpath(clean, width, material))
    return paths


# --- sparse patterns ----------------------------------------------------

def _family(bounds, angle_deg: float, spacing: float, offset: float) -> list[LineString]:
    """Parallel lines at ``angle_deg`` covering ``bounds``; line m sits at
    signed distance ``offset + (m + 1/2) spacing`` from the origin."""
    x0, y0, x1, y1 = bounds
    a = math.radians(angle_deg)
    d = np.array([math.cos(a), math.sin(a)])
    nrm = np.array([-d[1], d[0]])
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    proj_n = corners @ nrm
    proj_d = corners @ d
    lo = math.floor((proj_n.min() - offset) / spacing - 0.5) - 1
    hi = math.ceil((proj_n.max() - offset) / spacing - 0.5) + 1
    t0, t1 = proj_d.min() - 1.0, proj_d.max() + 1.0
    out = []
    for m in range(lo, hi + 1):
        c = offset + (m + 0.5) * spacing
        base = c * nrm
        out.append(LineString([tuple(base + t0 * d), tuple(base + t1 * d)]))
    return out


def _grid(bounds, density, width, z, period):
    spacing = period or 2.0 * width / density
    return _family(bounds, 0.0, spacing, 0.0) + _family(bounds, 90.0, spacing, 0.0)


def honeycomb_side(density: float, width: float) -> float:
    return 2.0 * width / (math.sqrt(3.0) * density)


def _honeycomb(bounds, density, width, z, period):
    a = period or honeycomb_side(density, width)
    hw = math.sqrt(3.0) * a / 2.0  # half hexagon width
    x0, y0, x1, y1 = bounds
    # lattice shifted half a cell off the origin, away from typical boundaries
    ox = hw / 2.0
    m0, m1 = math.floor(x0 / hw) - 2, math.ceil(x1 / hw) + 2
    j0, j1 = math.floor(y0 / (1.5 * a)) - 2, math.ceil(y1 / (1.5 * a)) + 2
    out: list[BaseGeometry] = []
    for j in range(j0, j1 + 1):
        y_low = 1.5 * a * j + a / 2.0
        y_high = 1.5 * a * j + a
        pts = []
        for m in range(m0, m1 + 1):
            up = (m - (j % 2)) % 2 == 0
            pts.append((ox + m * hw, y_high if up else y_low))
        out.append(LineString(pts))
        # vertical walls of row j sit where the zig-zag below/above is low
        for m in range(m0, m1 + 1):
            if (m - (j % 2)) % 2 == 1:
                x = ox + m * hw
                out.append(LineString([(x, 1.5 * a * j - a / 2.0), (x, y_low)]))
    return out


def honeycomb3d_cell(density: float, width: float) -> float:
    return 2.0 * width * _H3D_MEAN_FACTOR / density


def honeycomb3d_truncation(z: float, cell: float) -> float:
    """Diamond half-diagonal at height z (triangle wave over one cell)."""
    u = (z / cell) % 1.0
    tri = 1.0 - abs(2.0 * u - 1.0)
    return HONEYCOMB3D_MAX_TRUNCATION * cell * tri


def _honeycomb3d(bounds, density, width, z, period):
    d = period or honeycomb3d_cell(density, width)
    c = honeycomb3d_truncation(z, d)
    x0, y0, x1, y1 = bounds
    i0, i1 = math.floor(x0 / d) - 1, math.ceil(x1 / d) + 1
    j0, j1 = math.floor(y0 / d) - 1, math.ceil(y1 / d) + 1
    out: list[BaseGeometry] = []
    o = d / 2.0  # crossings at half-cell offsets
    if c < 1e-9:
        for i in range(i0, i1 + 1):
            out.append(LineString([(o + i * d, o + j0 * d), (o + i * d, o + j1 * d)]))
        for j in range(j0, j1 + 1):
            out.append(LineString([(o + i0 * d, o + j * d), (o + i1 * d, o + j * d)]))
        return out
    for j in range(j0, j1 + 1):
        for i in range(i0, i1 + 1):
            x, y = o + i * d, o + j * d
            out.append(LineString([(x + c, y), (x + d - c, y)]))
            out.append(LineString([(x, y + c), (x, y + d - c)]))
            out.append(LinearRing([(x + c, y), (x, y + c), (x - c, y), (x, y - c)]))
    return out


def gyroid_period(density: float, width: float) -> float:
    return GYROID_LENGTH_DENSITY * width / density


def gyroid_value(x, y, z, period: float):
    k = 2.0 * math.pi / period
    x, y, z = k * np.asarray(x), k * np.asarray(y), k * np.asarray(z)
    return np.sin(x) * np.cos(y) + np.sin(y) * np.cos(z) + np.sin(z) * np.cos(x)


def _gyroid_grad(x, y, z, k):
    gx = k * (np.cos(k * x) * np.cos(k * y) - np.sin(k * z) * np.sin(k * x))
    gy = k * (-np.sin(k * x) * np.sin(k * y) + np.cos(k * y) * np.cos(k * z))
    return gx, gy


def _gyroid(bounds, density, width, z, period):
    L = period or gyroid_period(density, width)
    k = 2.0 * math.pi / L
    x0, y0, x1, y1 = bounds
    h = L / 48.0
    # sample lattice anchored at the origin so layers align
    xs = np.arange(math.floor(x0 / h) - 2, math.ceil(x1 / h) + 3) * h
    ys = np.arange(math.floor(y0 / h) - 2, math.ceil(y1 / h) + 3) * h
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    g = gyroid_value(X, Y, z, L)
    out: list[BaseGeometry] = []
    for c in find_contours(g, 0.0):
        px = xs[0] + c[:, 0] * h
        py = ys[0] + c[:, 1] * h
        # Newton projection back onto the level set
        for _ in range(3):
            val = gyroid_value(px, py, z, L)
            gx, gy = _gyroid_grad(px, py, z, k)
            n2 = gx * gx + gy * gy
            step = np.where(n2 > 1e-12, val / np.maximum(n2, 1e-12), 0.0)
            px = px - step * gx
            py = py - step * gy
        pts = list(zip(px.tolist(), py.tolist()))
        if len(pts) > 3 and np.allclose(c[0], c[-1]):
            out.append(LinearRing(pts[:-1]))
        elif len(pts) >= 2:
            out.append(LineString(pts))
    return out


CUBIC_SHIFT_SIGNS = (1.0, -1.0, 1.0)


def _cubic(bounds, density, width, z, period):
    spacing = period or 3.0 * width / density
    shift = z / math.sqrt(2.0)
    out = []
    for angle, sign in zip((0.0, 60.0, 120.0), CUBIC_SHIFT_SIGNS):
        out.extend(_family(bounds, angle, spacing, (sign * shift) % spacing))
    return out


def _chords(bounds, density, width, z, period):
    spacing = period or width / density
    x0, y0, x1, y1 = bounds
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    r_max = math.hypot(x1 - x0, y1 - y0) / 2.0 + spacing
    b = spacing / (2.0 * math.pi)
    chord = max(2.0 * width, 1.0)
    pts = [(cx, cy)]
    theta = 0.0
    while b * theta < r_max:
        r = b * theta
        theta += min(math.pi / 6.0, chord / max(r, 1e-9))
        r = b * theta
        pts.append((cx + r * math.cos(theta), cy + r * math.sin(theta)))
    return [LineString(pts)]


_GENERATORS = {
    Pattern.GRID: _grid,
    Pattern.HONEYCOMB: _honeycomb,
    Pattern.THREE_D_HONEYCOMB: _honeycomb3d,
    Pattern.GYROID: _gyroid,
    Pattern.CUBIC: _cubic,
    Pattern.ARCHIMEDEAN_CHORDS: _chords,
}


def cell_size(pattern: Pattern, density: float, width: float, period_hint=None) -> float:
    """Characteristic in-plane cell size of a pattern."""
    if period_hint:
        return period_hint
    if pattern is Pattern.GRID:
        return 2.0 * width / density
    if pattern is Pattern.HONEYCOMB:
        return math.sqrt(3.0) * honeycomb_side(density, width)
    if pattern is Pattern.THREE_D_HONEYCOMB:
        return honeycomb3d_cell(density, width)
    if pattern is Pattern.GYROID:
        return gyroid_period(density, width)
    if pattern is Pattern.CUBIC:
        return 3.0 * width / density
    return width / density


def vertical_period(pattern: Pattern, density: float, width: float, period_hint=None) -> float | None:
    """Height after which a z-varying pattern repeats (None when z-independent)."""
    cell = cell_size(pattern, density, width, period_hint)
    if pattern in (Pattern.THREE_D_HONEYCOMB, Pattern.GYROID):
        return cell
    if pattern is Pattern.CUBIC:
        return cell * math.sqrt(2.0)
    return None


def generate_infill(req: InfillRequest) -> list[Toolpath]:
    """Sparse infill for one layer, clipped to the region minus its walls.

    A density of 1.0 degenerates to a solid raster for every pattern.  A
    region smaller than one pattern cell yields no paths and an
    ``InfillWarning``.
    """
    parts = offset_region(req.region, req.wall_thickness)
    if not parts:
        return []
    clip = unary_union(parts)
    if req.density >= 1.0:
        return generate_solid(clip, req.width, solid_angle(req.layer_index), req.material)
    cell = cell_size(req.pattern, req.density, req.width, req.period_hint)
    if clip.area < cell * cell:
        warnings.warn(
            f"region area {clip.area:.3g} mm^2 is smaller than one {req.pattern.value} "
            f"cell ({cell:.3g} mm)",
            InfillWarning,
            stacklevel=2,
        )
        return []
    x0, y0, x1, y1 = clip.bounds
    margin = cell
    bounds = (x0 - margin, y0 - margin, x1 + margin, y1 + margin)
    raw = _GENERATORS[req.pattern](bounds, req.density, req.width, req.z, req.period_hint)
    return _to_toolpaths(_clip(raw, clip), req.width, req.material)


def areal_density(paths: Sequence[Toolpath], area: float) -> float:
    """Total extruded footprint (length x width) over region area."""
    return sum(p.length * p.width for p in paths) / area
