import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point as ShapelyPoint
from shapely.geometry import Polygon, box

from m3dskin.geometry import shoelace_area
from m3dskin.infill import (
    GYROID_LENGTH_DENSITY,
    MIN_SEGMENT,
    InfillRequest,
    InfillWarning,
    Toolpath,
    areal_density,
    generate_infill,
    generate_solid,
    generate_walls,
    gyroid_value,
    line_spacing,
    offset_region,
    solid_angle,
    vertical_period,
)
from m3dskin.spec_model import Material, Pattern

SQUARE40 = box(0.0, 0.0, 40.0, 40.0)
W = 0.4


def infill(pattern, density, z=0.0, layer=0, region=SQUARE40, **kw):
    return generate_infill(InfillRequest(pattern, density, layer, z, region, W, **kw))


def mean_density(pattern, density, region=SQUARE40, samples=8):
    """Areal density averaged over one vertical period (single layer if none)."""
    period = vertical_period(pattern, density, W)
    zs = [0.0] if period is None else [period * (k + 0.5) / samples for k in range(samples)]
    return float(np.mean([areal_density(infill(pattern, density, z), region.area) for z in zs]))


# --- spacing and offsets -------------------------------------------------

def test_line_spacing():
    assert line_spacing(0.10, 0.4) == pytest.approx(4.0)
    assert line_spacing(1.0, 0.4) == pytest.approx(0.4)
    assert line_spacing(0.15, 0.4) == pytest.approx(2.6666667)
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            line_spacing(bad, 0.4)


def test_offset_square():
    (poly,) = offset_region(SQUARE40, 0.8)
    x0, y0, x1, y1 = poly.bounds
    assert (x1 - x0, y1 - y0) == (pytest.approx(38.4), pytest.approx(38.4))
    assert poly.area == pytest.approx(38.4 ** 2)


def test_offset_collapses_to_empty():
    assert offset_region(box(0, 0, 1, 1), 0.8) == []


def test_offset_l_shape_shrinks():
    ell = [(0, 0), (20, 0), (20, 8), (8, 8), (8, 20), (0, 20)]
    out = offset_region(Polygon(ell), 0.4)
    assert out
    before = shoelace_area(ell)
    after = sum(shoelace_area(list(p.exterior.coords)[:-1]) for p in out)
    assert 0 < after < before
    expected = [(0.4, 0.4), (19.6, 0.4), (19.6, 7.6), (7.6, 7.6), (7.6, 19.6), (0.4, 19.6)]
    assert after == pytest.approx(shoelace_area(expected), rel=1e-9)


def test_offset_pieces_disjoint():
    dumbbell = Polygon([(0, 0), (10, 0), (10, 4), (12, 4), (12, 0), (22, 0), (22, 10), (12, 10),
                        (12, 6), (10, 6), (10, 10), (0, 10)])
    out = offset_region(dumbbell, 1.2)
    assert len(out) == 2
    assert out[0].intersection(out[1]).area == 0
    assert all(p.is_valid and p.exterior.is_ccw for p in out)


# --- walls ------------------------------------------------------------

def test_two_wall_loops():
    loops = generate_walls(SQUARE40, 0.8, W)
    assert len(loops) == 2
    assert all(p.closed for p in loops)
    lengths = sorted(p.length for p in loops)
    assert lengths[0] == pytest.approx(4 * (40 - 3 * W))
    assert lengths[1] == pytest.approx(4 * (40 - W))


def test_zero_walls():
    assert generate_walls(SQUARE40, 0.0, W) == []


def test_wall_thickness_not_multiple():
    with pytest.raises(ValueError):
        generate_walls(SQUARE40, 0.6, W)


# --- solid ------------------------------------------------------------

def test_solid_raster_line_count():
    paths = generate_solid(box(0, 0, 10, 10), W, 0.0)
    assert len(paths) == 25
    assert areal_density(paths, 100.0) >= 0.98


def test_solid_empty_region():
    assert generate_solid(Polygon(), W, 0.0) == []


def _direction(path: Toolpath):
    (x0, y0), (x1, y1) = path.points[0], path.points[1]
    return np.array([x1 - x0, y1 - y0]) / math.hypot(x1 - x0, y1 - y0)


def test_solid_alternates_by_layer():
    a = generate_solid(SQUARE40, W, solid_angle(0))
    b = generate_solid(SQUARE40, W, solid_angle(1))
    assert abs(float(np.dot(_direction(a[0]), _direction(b[0])))) < 1e-9
    assert solid_angle(0) == solid_angle(2)


# --- sparse patterns --------------------------------------------------

def test_grid_lines_per_direction():
    paths = infill(Pattern.GRID, 0.10)
    horiz = [p for p in paths if abs(_direction(p)[1]) < 1e-9]
    vert = [p for p in paths if abs(_direction(p)[0]) < 1e-9]
    assert len(horiz) + len(vert) == len(paths)
    # two families share the density budget: 40 mm / (2 * 4 mm) per direction
    assert len(horiz) == 5 and len(vert) == 5


@pytest.mark.parametrize("pattern", list(Pattern))
@pytest.mark.parametrize("density", [0.10, 0.15])
def test_areal_density_within_ten_percent(pattern, density):
    measured = mean_density(pattern, density)
    assert abs(measured / density - 1.0) <= 0.10


@pytest.mark.parametrize("pattern", list(Pattern))
def test_full_density_is_solid(pattern):
    paths = infill(pattern, 1.0)
    assert areal_density(paths, SQUARE40.area) >= 0.98


@pytest.mark.parametrize("pattern", [Pattern.THREE_D_HONEYCOMB, Pattern.GYROID, Pattern.CUBIC])
def test_z_varying_patterns_change(pattern):
    period = vertical_period(pattern, 0.10, W)
    assert period is not None
    a = infill(pattern, 0.10, z=0.0)
    b = infill(pattern, 0.10, z=period / 4)
    assert [p.points for p in a] != [p.points for p in b]


@pytest.mark.parametrize("pattern", [Pattern.GRID, Pattern.HONEYCOMB])
def test_planar_patterns_repeat(pattern):
    a = infill(pattern, 0.10, z=0.2, layer=1)
    b = infill(pattern, 0.10, z=1.4, layer=7)
    assert [p.points for p in a] == [p.points for p in b]
    assert vertical_period(pattern, 0.10, W) is None


def test_gyroid_points_on_level_set():
    period = 8.0
    paths = infill(Pattern.GYROID, 0.10, z=1.0, period_hint=period)
    pts = np.array([p for path in paths for p in path.points])
    assert len(pts) > 100
    residual = np.abs(gyroid_value(pts[:, 0], pts[:, 1], 1.0, period))
    assert residual.max() < 0.05


def test_gyroid_length_constant_matches_crossing_count():
    """Cauchy-Crofton: length per area = pi/2 * crossings per unit test-line
    length, averaged over directions and over one period in z."""
    rng = np.random.default_rng(11)
    s = np.linspace(0.0, 10.0, 10001)
    crossings, length = 0, 0.0
    for z in (np.arange(32) + 0.5) / 32:
        th = (np.arange(48) + rng.random()) * np.pi / 48
        off = rng.random((48, 2))
        x = off[:, :1] + np.outer(np.cos(th), s)
        y = off[:, 1:] + np.outer(np.sin(th), s)
        v = gyroid_value(x, y, z, 1.0)
        crossings += np.count_nonzero(np.signbit(v[:, 1:]) != np.signbit(v[:, :-1]))
        length += 48 * 10.0
    estimate = math.pi / 2 * crossings / length
    assert estimate == pytest.approx(GYROID_LENGTH_DENSITY, rel=0.015)


def test_small_region_warns_and_is_empty():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        paths = infill(Pattern.HONEYCOMB, 0.10, region=box(0, 0, 3, 3))
    assert paths == []
    assert any(issubclass(w.category, InfillWarning) for w in caught)


def test_walls_reduce_clip_region():
    paths = infill(Pattern.GRID, 0.10, wall_thickness=0.8)
    inner = SQUARE40.buffer(-0.8, join_style="mitre")
    for p in paths:
        for x, y in p.points:
            assert inner.buffer(1e-6).covers(ShapelyPoint(x, y))


def test_infill_is_deterministic():
    for pattern in Pattern:
        a = infill(pattern, 0.15, z=0.6, layer=3)
        b = infill(pattern, 0.15, z=0.6, layer=3)
        assert a == b


def test_fragments_respect_minimum_length():
    region = Polygon([(0, 0), (30, 0), (30, 3), (17, 17), (0, 25)])
    for pattern in Pattern:
        for p in infill(pattern, 0.15, z=0.4, region=region):
            assert p.length >= MIN_SEGMENT - 1e-9


def test_toolpath_invariants():
    with pytest.raises(ValueError):
        Toolpath(((0.0, 0.0),), W, Material.CONDUCTIVE)
    for pattern in Pattern:
        for p in infill(pattern, 0.10, z=0.6):
            pts = np.array(p.points)
            steps = np.hypot(*np.diff(pts, axis=0).T)
            assert np.all(steps > 1e-9)


regions = st.builds(
    lambda x, y, w, h, rot: Polygon(
        [(x + math.cos(rot) * u - math.sin(rot) * v, y + math.sin(rot) * u + math.cos(rot) * v)
         for u, v in [(0, 0), (w, 0), (w, h), (0.3 * w, 1.4 * h)]]
    ),
    st.floats(0, 50), st.floats(0, 50), st.floats(12, 40), st.floats(12, 40), st.floats(0, math.pi),
)


@settings(max_examples=25, deadline=None)
@given(region=regions, pattern=st.sampled_from(list(Pattern)), density=st.sampled_from([0.1, 0.15, 0.3]),
       z=st.floats(0, 5))
def test_points_stay_inside_region(region, pattern, density, z):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InfillWarning)
        paths = generate_infill(InfillRequest(pattern, density, 0, z, region, W))
    grown = region.buffer(1e-6)
    for p in paths:
        for x, y in p.points:
            assert grown.covers(ShapelyPoint(x, y))


def test_request_validation():
    with pytest.raises(ValueError):
        InfillRequest(Pattern.GRID, 0.0, 0, 0.0, SQUARE40, W)
    with pytest.raises(ValueError):
        InfillRequest(Pattern.GRID, 0.1, 0, 0.0, SQUARE40, 0.0)
