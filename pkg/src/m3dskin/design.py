"""Assemble a printable job from a validated spec.

Per band role, each print layer gets:

* covers: solid insulating raster over the whole footprint;
* wiring: the routed traces as parallel conductive beads, insulating solid
  everywhere else;
* bottom electrode / sparse bands: the tile region (minus the top-via
  keep-out) filled solid (electrode) or with walls + sparse infill in the
  band's material; a conductive via column surrounded by an insulating ring
  carries the top net down to the wiring layer; the rest of the footprint is
  insulating fill;
* top electrode: solid conductive over each tile (this closes the via).
"""

from __future__ import annotations

from dataclasses import dataclass

from shapely.geometry import LineString, Polygon, box
from shapely.ops import unary_union

from .geometry import bbox, lines_of
from .export import Layer, PrintJob
from .infill import (
    InfillRequest,
    Toolpath,
    _clean,
    generate_infill,
    generate_solid,
    generate_walls,
    solid_angle,
)
from .router import (
    DEFAULT_CLEARANCE,
    DEFAULT_PITCH,
    DEFAULT_RESISTIVITY,
    DEFAULT_TRACE_WIDTH,
    Side,
    Trace,
    route_spec,
)
from .spec_model import BandPlan, BandRole, Material, ValidatedSpec, compile_bands, tile_regions

C = Material.CONDUCTIVE
NC = Material.NON_CONDUCTIVE


@dataclass(frozen=True)
class WiringOptions:
    trace_width: float = DEFAULT_TRACE_WIDTH
    clearance: float = DEFAULT_CLEARANCE
    grid_pitch: float = DEFAULT_PITCH
    resistivity: float = DEFAULT_RESISTIVITY


def _fill(region, width, layer_index, material, density=1.0, pattern=None, z=0.0):
    if region.is_empty:
        return []
    if density >= 1.0 or pattern is None:
        return generate_solid(region, width, solid_angle(layer_index), material)
    return generate_infill(InfillRequest(pattern, density, layer_index, z, region, width, material))


def _trace_beads(trace: Trace, width: float) -> list[Toolpath]:
    k = max(1, int(round(trace.trace_width / width)))
    line = LineString(trace.path)
    paths = []
    for i in range(k):
        off = (i - (k - 1) / 2.0) * width
        geom = line if abs(off) < 1e-12 else line.offset_curve(off, join_style="mitre")
        for part in lines_of(geom):
            pts = _clean(part.coords)
            if len(pts) >= 2:
                paths.append(Toolpath(pts, width, C))
    return paths


def via_keepouts(vspec: ValidatedSpec, traces: list[Trace], opts: WiringOptions):
    """(via pad, insulating ring) polygons per tile for the top net."""
    out = {}
    for t in traces:
        if t.net.side is not Side.TOP:
            continue
        tile = vspec.tiles[t.net.tile_id]
        vx, vy = t.net.via_point
        half = opts.trace_width
        pad = box(vx - half, vy - half, vx + half, vy + half)
        under = LineString(t.path).intersection(tile)
        keep = pad.buffer(opts.clearance, join_style="mitre")
        if not under.is_empty:
            keep = keep.union(under.buffer(opts.trace_width / 2.0 + opts.clearance, join_style="mitre"))
        keep = keep.intersection(tile)
        out[t.net.tile_id] = (pad, keep.difference(pad))
    return out


def build_print_job(vspec: ValidatedSpec, opts: WiringOptions | None = None,
                    traces: list[Trace] | None = None) -> PrintJob:
    opts = opts or WiringOptions()
    p = vspec.params
    plan: BandPlan = compile_bands(vspec)
    if traces is None:
        traces = route_spec(vspec, clearance=opts.clearance, grid_pitch=opts.grid_pitch,
                            trace_width=opts.trace_width, resistivity=opts.resistivity)
    w = p.extrusion_width
    footprint = vspec.footprint
    regions = tile_regions(vspec)
    outside = unary_union(regions.outside) if regions.outside else Polygon()
    keepouts = via_keepouts(vspec, traces, opts)

    trace_area = unary_union(
        [LineString(t.path).buffer(t.trace_width / 2.0, cap_style="square", join_style="mitre")
         for t in traces]
    ) if traces else Polygon()
    wiring_fill = footprint.difference(trace_area)
    beads = [b for t in traces for b in _trace_beads(t, w)]

    layers = []
    for band in plan.bands:
        for li in band.print_layer_indices:
            z = round((li + 1) * p.layer_height, 9)
            paths: list[Toolpath] = []
            role = band.role
            if role in (BandRole.COVER_BOTTOM, BandRole.COVER_TOP):
                paths += _fill(footprint, w, li, NC)
            elif role is BandRole.WIRING:
                paths += beads
                paths += _fill(wiring_fill, w, li, NC)
            else:
                for tid, tile in enumerate(regions.tiles):
                    pad, ring = keepouts.get(tid, (Polygon(), Polygon()))
                    if role is BandRole.ELECTRODE_TOP:
                        paths += _fill(tile, w, li, C)
                        continue
                    active = tile.difference(pad.union(ring))
                    if role is BandRole.ELECTRODE_BOTTOM:
                        paths += _fill(active, w, li, C)
                    else:
                        mat = band.material
                        paths += generate_walls(active, p.sensor_wall_thickness, w, mat)
                        paths += generate_infill(InfillRequest(
                            p.sensor_infill_pattern, p.sensor_infill_density, li, z, active, w,
                            mat, wall_thickness=p.sensor_wall_thickness))
                    paths += _fill(ring, w, li, NC)
                    paths += _fill(pad, w, li, C)
                paths += _fill(outside, w, li, NC, p.outside_infill_density,
                               p.sensor_infill_pattern, z)
            layers.append(Layer(index=li, z=z, height=p.layer_height, role=role, paths=tuple(paths)))

    return PrintJob(
        name=vspec.spec.name,
        band_plan=plan,
        layers=tuple(layers),
        printer=vspec.spec.printer,
        bounds=bbox(vspec.spec.footprint),
        traces=tuple(traces),
    )
