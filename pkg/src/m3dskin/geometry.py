"""Small planar-geometry helpers shared by the design modules.

Polygons travel through the public API as tuples of ``(x, y)`` pairs in mm;
shapely is used internally for the boolean and offset work.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import GeometryCollection, LineString, MultiPolygon, Polygon
from shapely.geometry.base import BaseGeometry
from shapely.geometry.polygon import orient

Point = tuple[float, float]

# Coordinates are rounded to this many decimals before hashing/serialising.
COORD_DECIMALS = 9


def as_points(points: Iterable[Sequence[float]]) -> tuple[Point, ...]:
    return tuple((float(x), float(y)) for x, y in points)


def to_polygon(poly) -> Polygon:
    """Build a shapely polygon from a vertex list (or pass one through)."""
    if isinstance(poly, Polygon):
        return poly
    pts = as_points(poly)
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    return Polygon(pts)


def polygon_points(poly: Polygon) -> tuple[Point, ...]:
    """Exterior ring of ``poly`` as CCW vertices without the closing repeat."""
    ring = orient(poly, 1.0).exterior.coords[:-1]
    return as_points(ring)


def shoelace_area(points: Sequence[Point]) -> float:
    """Signed area of a vertex loop; positive for CCW."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygons_of(geom: BaseGeometry) -> list[Polygon]:
    """Flatten any shapely result into its non-empty polygon parts."""
    if geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        return [geom]
    if isinstance(geom, (MultiPolygon, GeometryCollection)):
        out = []
        for g in geom.geoms:
            out.extend(polygons_of(g))
        return out
    return []


def lines_of(geom: BaseGeometry) -> list[LineString]:
    if geom.is_empty:
        return []
    if isinstance(geom, LineString):
        return [geom]
    if hasattr(geom, "geoms"):
        out = []
        for g in geom.geoms:
            out.extend(lines_of(g))
        return out
    return []


def bbox(points: Iterable[Point]) -> tuple[float, float, float, float]:
    p = np.asarray(list(points), dtype=float)
    return float(p[:, 0].min()), float(p[:, 1].min()), float(p[:, 0].max()), float(p[:, 1].max())


def polyline_length(points: Sequence[Point], closed: bool = False) -> float:
    p = np.asarray(points, dtype=float)
    if closed:
        p = np.vstack([p, p[:1]])
    return float(np.sum(np.hypot(*np.diff(p, axis=0).T)))


def is_simple(poly: Polygon) -> bool:
    return bool(poly.is_valid and shapely.is_simple(poly.exterior))
