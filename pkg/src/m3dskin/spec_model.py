"""Declarative sensor description, validation and the vertical band plan.

A sensor is described by a planar footprint, one or more sensing tiles, two
terminal pads per tile and a handful of stack parameters.  ``compile_bands``
turns a validated description into the ordered list of material bands that
make up the printed stack::

    CoverBottom, Wiring, ElectrodeBottom,
    [SparseConductive, SparseNonConductive] * (N - 1), SparseConductive,
    ElectrodeTop, CoverTop

Spec files are YAML documents; see ``load_spec`` / ``dump_spec`` and the
schema notes in the README.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import yaml
from shapely.geometry import Point as ShapelyPoint
from shapely.geometry import Polygon
from shapely.geometry.polygon import orient

from .geometry import Point, as_points, is_simple, polygon_points, polygons_of, to_polygon

SPEC_VERSION = 1

# Relative slack used when checking that a thickness is a layer multiple.
_MULTIPLE_TOL = 1e-9


class Material(str, enum.Enum):
    CONDUCTIVE = "ConductiveTPU"
    NON_CONDUCTIVE = "NonConductiveTPU"


class Pattern(str, enum.Enum):
    GRID = "Grid"
    HONEYCOMB = "Honeycomb"
    THREE_D_HONEYCOMB = "ThreeDHoneycomb"
    GYROID = "Gyroid"
    CUBIC = "Cubic"
    ARCHIMEDEAN_CHORDS = "ArchimedeanChords"


class BandRole(str, enum.Enum):
    COVER_BOTTOM = "CoverBottom"
    WIRING = "Wiring"
    ELECTRODE_BOTTOM = "ElectrodeBottom"
    SPARSE_CONDUCTIVE = "SparseConductive"
    SPARSE_NON_CONDUCTIVE = "SparseNonConductive"
    ELECTRODE_TOP = "ElectrodeTop"
    COVER_TOP = "CoverTop"


BAND_MATERIAL = {
    BandRole.COVER_BOTTOM: Material.NON_CONDUCTIVE,
    BandRole.WIRING: Material.CONDUCTIVE,
    BandRole.ELECTRODE_BOTTOM: Material.CONDUCTIVE,
    BandRole.SPARSE_CONDUCTIVE: Material.CONDUCTIVE,
    BandRole.SPARSE_NON_CONDUCTIVE: Material.NON_CONDUCTIVE,
    BandRole.ELECTRODE_TOP: Material.CONDUCTIVE,
    BandRole.COVER_TOP: Material.NON_CONDUCTIVE,
}

# Materials a print layer of each band may contain.  Bands whose primary
# material is conductive still carry insulating fill outside the tiles and
# around vias.
ALLOWED_MATERIALS = {
    role: (
        frozenset({Material.NON_CONDUCTIVE})
        if role in (BandRole.COVER_BOTTOM, BandRole.COVER_TOP)
        else frozenset({Material.CONDUCTIVE, Material.NON_CONDUCTIVE})
    )
    for role in BandRole
}


@dataclass(frozen=True)
class DesignParams:
    """Stack parameters.  Defaults are the baseline sensor (4 patterned
    layers, 0.4 mm bands, 0.2 mm layers, 10 % 3D honeycomb, 0.8 mm walls)."""

    conductive_band_thickness: float = 0.4
    nonconductive_band_thickness: float = 0.4
    patterned_conductive_layers: int = 4
    wiring_layer_thickness: float = 0.4
    cover_layer_thickness: float = 0.4
    electrode_thickness: float = 0.4
    layer_height: float = 0.2
    nozzle_diameter: float = 0.4
    sensor_infill_density: float = 0.10
    sensor_infill_pattern: Pattern = Pattern.THREE_D_HONEYCOMB
    sensor_wall_thickness: float = 0.8
    outside_infill_density: float = 1.0

    @property
    def extrusion_width(self) -> float:
        return self.nozzle_diameter

    @property
    def wall_loops(self) -> int:
        return int(round(self.sensor_wall_thickness / self.nozzle_diameter))

    def layers_in(self, thickness: float) -> int:
        return int(round(thickness / self.layer_height))


@dataclass(frozen=True)
class PrinterProfile:
    name: str = "Prusa XL 5T"
    bed_size: tuple[float, float] = (360.0, 360.0)
    tool_count: int = 5
    nozzle_temp: int = 225
    bed_temp: int = 50
    filament_diameter: float = 1.75
    print_feed: float = 1200.0
    travel_feed: float = 6000.0
    tool_map: tuple[tuple[Material, int], ...] = (
        (Material.NON_CONDUCTIVE, 0),
        (Material.CONDUCTIVE, 1),
    )

    def tool_for(self, material: Material) -> int:
        return dict(self.tool_map)[material]


@dataclass(frozen=True)
class SensorSpec:
    footprint: tuple[Point, ...]
    tiles: tuple[tuple[Point, ...], ...]
    terminals: tuple[Point, ...]
    params: DesignParams = field(default_factory=DesignParams)
    printer: PrinterProfile = field(default_factory=PrinterProfile)
    clearance: float = 1.0
    name: str = "sensor"
    version: int = SPEC_VERSION


@dataclass(frozen=True)
class ValidatedSpec:
    """A spec that passed ``validate_spec``; polygons are CCW-normalised."""

    spec: SensorSpec

    @property
    def params(self) -> DesignParams:
        return self.spec.params

    @property
    def footprint(self) -> Polygon:
        return to_polygon(self.spec.footprint)

    @property
    def tiles(self) -> list[Polygon]:
        return [to_polygon(t) for t in self.spec.tiles]

    def terminal_pair(self, tile_id: int) -> tuple[Point, Point]:
        """(top-net, bottom-net) terminal positions of a tile."""
        return self.spec.terminals[2 * tile_id], self.spec.terminals[2 * tile_id + 1]


class SpecError(ValueError):
    """Raised by ``validate_spec``; ``violations`` lists every problem found."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class Band:
    role: BandRole
    material: Material
    z_start: float
    z_end: float
    first_layer: int
    layer_count: int

    @property
    def thickness(self) -> float:
        return self.z_end - self.z_start

    @property
    def print_layer_indices(self) -> range:
        return range(self.first_layer, self.first_layer + self.layer_count)


@dataclass(frozen=True)
class BandPlan:
    bands: tuple[Band, ...]
    layer_height: float

    @property
    def layer_count(self) -> int:
        return sum(b.layer_count for b in self.bands)

    @property
    def height(self) -> float:
        return self.bands[-1].z_end if self.bands else 0.0

    def count(self, role: BandRole) -> int:
        return sum(1 for b in self.bands if b.role is role)

    def band_of_layer(self, layer: int) -> Band:
        for b in self.bands:
            if layer in b.print_layer_indices:
                return b
        raise IndexError(layer)

    def sparse_bands(self) -> list[Band]:
        return [
            b
            for b in self.bands
            if b.role in (BandRole.SPARSE_CONDUCTIVE, BandRole.SPARSE_NON_CONDUCTIVE)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "layer_height": self.layer_height,
            "bands": [
                {
                    "role": b.role.value,
                    "material": b.material.value,
                    "z_start": b.z_start,
                    "z_end": b.z_end,
                    "first_layer": b.first_layer,
                    "layer_count": b.layer_count,
                }
                for b in self.bands
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BandPlan":
        bands = tuple(
            Band(
                role=BandRole(b["role"]),
                material=Material(b["material"]),
                z_start=float(b["z_start"]),
                z_end=float(b["z_end"]),
                first_layer=int(b["first_layer"]),
                layer_count=int(b["layer_count"]),
            )
            for b in d["bands"]
        )
        return cls(bands=bands, layer_height=float(d["layer_height"]))


def _is_multiple(value: float, unit: float) -> bool:
    ratio = value / unit
    return abs(ratio - round(ratio)) <= _MULTIPLE_TOL * max(1.0, abs(ratio))


def _check_params(p: DesignParams) -> list[str]:
    out = []
    if not p.layer_height > 0:
        out.append(f"layer_height must be > 0 (got {p.layer_height})")
        return out
    thicknesses = {
        "conductive_band_thickness": p.conductive_band_thickness,
        "nonconductive_band_thickness": p.nonconductive_band_thickness,
        "wiring_layer_thickness": p.wiring_layer_thickness,
        "cover_layer_thickness": p.cover_layer_thickness,
        "electrode_thickness": p.electrode_thickness,
    }
    for name, t in thicknesses.items():
        if not t > 0:
            out.append(f"{name} must be > 0 (got {t})")
        elif not _is_multiple(t, p.layer_height):
            out.append(
                f"{name} {t} mm is not a multiple of layer_height {p.layer_height} mm"
            )
    if not p.nozzle_diameter > 0:
        out.append(f"nozzle_diameter must be > 0 (got {p.nozzle_diameter})")
    if isinstance(p.patterned_conductive_layers, bool) or not isinstance(
        p.patterned_conductive_layers, int
    ):
        out.append("patterned_conductive_layers must be an integer")
    elif p.patterned_conductive_layers < 1:
        out.append(
            f"patterned_conductive_layers must be >= 1 (got {p.patterned_conductive_layers})"
        )
    if not 0 < p.sensor_infill_density <= 1:
        out.append(f"sensor_infill_density must be in (0, 1] (got {p.sensor_infill_density})")
    if not 0 < p.outside_infill_density <= 1:
        out.append(f"outside_infill_density must be in (0, 1] (got {p.outside_infill_density})")
    if not isinstance(p.sensor_infill_pattern, Pattern):
        out.append(f"unknown infill pattern {p.sensor_infill_pattern!r}")
    if p.sensor_wall_thickness < 0:
        out.append(f"sensor_wall_thickness must be >= 0 (got {p.sensor_wall_thickness})")
    elif p.nozzle_diameter > 0 and not _is_multiple(p.sensor_wall_thickness, p.nozzle_diameter):
        out.append(
            f"sensor_wall_thickness {p.sensor_wall_thickness} mm is not a multiple of "
            f"the extrusion width {p.nozzle_diameter} mm"
        )
    return out


def check_spec(spec: SensorSpec) -> list[str]:
    """Every invariant violation of ``spec`` (empty list when valid)."""
    out: list[str] = []
    if spec.version != SPEC_VERSION:
        out.append(f"unsupported spec version {spec.version!r}")
    out.extend(_check_params(spec.params))
    if spec.clearance < 0:
        out.append(f"clearance must be >= 0 (got {spec.clearance})")
    if spec.printer.tool_count < 2:
        out.append("printer needs at least 2 tools for conductive + non-conductive filament")

    footprint = None
    if len(spec.footprint) < 3:
        out.append("footprint needs at least 3 vertices")
    else:
        fp = to_polygon(spec.footprint)
        if not is_simple(fp):
            out.append("footprint is not a simple polygon")
        elif not fp.area > 0:
            out.append("footprint area must be > 0")
        else:
            footprint = fp

    if len(spec.tiles) < 1:
        out.append("tile count must be >= 1")
    tiles: list[Polygon | None] = []
    for i, t in enumerate(spec.tiles):
        if len(t) < 3:
            out.append(f"tile {i} needs at least 3 vertices")
            tiles.append(None)
            continue
        poly = to_polygon(t)
        if not is_simple(poly) or not poly.area > 0:
            out.append(f"tile {i} is not a simple polygon with positive area")
            tiles.append(None)
            continue
        tiles.append(poly)
        if footprint is not None:
            inner = footprint.buffer(-spec.clearance + 1e-9, join_style="mitre")
            if not inner.covers(poly):
                out.append(
                    f"tile {i} is outside the footprint or closer than "
                    f"{spec.clearance} mm to its boundary"
                )
    for (i, a), (j, b) in itertools.combinations(enumerate(tiles), 2):
        if a is None or b is None:
            continue
        if a.intersection(b).area > 0:
            out.append(f"tiles {i} and {j} overlap")
        elif a.distance(b) < spec.clearance - 1e-9:
            out.append(f"tiles {i} and {j} are closer than {spec.clearance} mm")

    if len(spec.terminals) != 2 * len(spec.tiles):
        out.append(
            f"terminal count {len(spec.terminals)} != 2 x tile count {len(spec.tiles)}"
        )
    seen: dict[Point, int] = {}
    for k, term in enumerate(spec.terminals):
        if term in seen:
            out.append(f"duplicate terminal position {term} (terminals {seen[term]} and {k})")
        else:
            seen[term] = k
        if footprint is not None and not footprint.covers(ShapelyPoint(term)):
            out.append(f"terminal {k} at {term} is outside the footprint")
    return out


def validate_spec(spec: SensorSpec) -> ValidatedSpec:
    """Check every invariant; raise ``SpecError`` listing all violations."""
    violations = check_spec(spec)
    if violations:
        raise SpecError(violations)
    norm = replace(
        spec,
        footprint=polygon_points(orient(to_polygon(spec.footprint), 1.0)),
        tiles=tuple(polygon_points(to_polygon(t)) for t in spec.tiles),
    )
    return ValidatedSpec(norm)


def compile_bands(vspec: ValidatedSpec) -> BandPlan:
    p = vspec.params
    n = p.patterned_conductive_layers
    roles: list[tuple[BandRole, float]] = [
        (BandRole.COVER_BOTTOM, p.cover_layer_thickness),
        (BandRole.WIRING, p.wiring_layer_thickness),
        (BandRole.ELECTRODE_BOTTOM, p.electrode_thickness),
    ]
    for k in range(n):
        roles.append((BandRole.SPARSE_CONDUCTIVE, p.conductive_band_thickness))
        if k < n - 1:
            roles.append((BandRole.SPARSE_NON_CONDUCTIVE, p.nonconductive_band_thickness))
    roles.append((BandRole.ELECTRODE_TOP, p.electrode_thickness))
    roles.append((BandRole.COVER_TOP, p.cover_layer_thickness))

    bands = []
    layer = 0
    for role, thickness in roles:
        count = p.layers_in(thickness)
        bands.append(
            Band(
                role=role,
                material=BAND_MATERIAL[role],
                # z from integer layer indices so band edges never drift.
                z_start=round(layer * p.layer_height, 9),
                z_end=round((layer + count) * p.layer_height, 9),
                first_layer=layer,
                layer_count=count,
            )
        )
        layer += count
    return BandPlan(bands=tuple(bands), layer_height=p.layer_height)


@dataclass(frozen=True)
class TileRegions:
    tiles: list[Polygon]
    outside: list[Polygon]


def tile_regions(vspec: ValidatedSpec) -> TileRegions:
    """Sensing polygons (verbatim) plus the footprint minus all tiles."""
    tiles = vspec.tiles
    rest = vspec.footprint
    for t in tiles:
        rest = rest.difference(t)
    return TileRegions(tiles=tiles, outside=[orient(p, 1.0) for p in polygons_of(rest)])


# --- spec files ----------------------------------------------------------

def spec_to_dict(spec: SensorSpec) -> dict[str, Any]:
    params = asdict(spec.params)
    params["sensor_infill_pattern"] = spec.params.sensor_infill_pattern.value
    pr = spec.printer
    return {
        "version": spec.version,
        "name": spec.name,
        "clearance": spec.clearance,
        "footprint": [list(p) for p in spec.footprint],
        "tiles": [[list(p) for p in t] for t in spec.tiles],
        "terminals": [list(p) for p in spec.terminals],
        "params": params,
        "printer": {
            "name": pr.name,
            "bed_size": list(pr.bed_size),
            "tool_count": pr.tool_count,
            "nozzle_temp": pr.nozzle_temp,
            "bed_temp": pr.bed_temp,
            "filament_diameter": pr.filament_diameter,
            "print_feed": pr.print_feed,
            "travel_feed": pr.travel_feed,
            "tools": {m.value: t for m, t in pr.tool_map},
        },
    }


class SpecFormatError(ValueError):
    pass


def spec_from_dict(d: dict[str, Any]) -> SensorSpec:
    if "version" not in d:
        raise SpecFormatError("spec file has no 'version' field")
    try:
        raw_params = dict(d.get("params", {}))
        if "sensor_infill_pattern" in raw_params:
            raw_params["sensor_infill_pattern"] = Pattern(raw_params["sensor_infill_pattern"])
        params = DesignParams(**raw_params)
        pr = dict(d.get("printer", {}))
        tools = pr.pop("tools", None)
        if "bed_size" in pr:
            pr["bed_size"] = tuple(float(v) for v in pr["bed_size"])
        if tools is not None:
            pr["tool_map"] = tuple(
                sorted(((Material(m), int(t)) for m, t in tools.items()), key=lambda mt: mt[1])
            )
        printer = PrinterProfile(**pr)
        return SensorSpec(
            footprint=as_points(d["footprint"]),
            tiles=tuple(as_points(t) for t in d.get("tiles", [])),
            terminals=as_points(d.get("terminals", [])),
            params=params,
            printer=printer,
            clearance=float(d.get("clearance", 1.0)),
            name=str(d.get("name", "sensor")),
            version=d["version"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecFormatError(f"malformed spec: {exc}") from exc


def dump_spec(spec: SensorSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False, default_flow_style=None)


def load_spec(source: str | Path) -> SensorSpec:
    """Parse a spec from a YAML path or YAML text."""
    text = Path(source).read_text() if isinstance(source, Path) else source
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecFormatError(f"spec is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise SpecFormatError("spec document must be a mapping")
    return spec_from_dict(data)


def rect(x0: float, y0: float, x1: float, y1: float) -> tuple[Point, ...]:
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def baseline_spec(size: float = 40.0, inset: float = 2.0) -> SensorSpec:
    """Single centred tile on a square footprint with baseline parameters."""
    return SensorSpec(
        footprint=rect(0.0, 0.0, size, size),
        tiles=(rect(inset + 4.0, inset + 4.0, size - inset, size - inset),),
        terminals=((size / 2 - 5.0, 1.5), (size / 2 + 5.0, 1.5)),
        name="baseline",
    )


def four_tile_spec() -> SensorSpec:
    """2 x 2 tiles with all eight terminal pads along the bottom edge.

    The left column routes down the left margin and under its lower tile,
    the right column down the centre channel, so the upper tiles carry
    markedly longer wiring than the lower ones.
    """
    s = 14.0
    tiles = (
        rect(8.0, 34.0, 8.0 + s, 34.0 + s),    # upper left
        rect(38.0, 34.0, 38.0 + s, 34.0 + s),  # upper right
        rect(8.0, 12.0, 8.0 + s, 12.0 + s),    # lower left
        rect(38.0, 12.0, 38.0 + s, 12.0 + s),  # lower right
    )
    terminals = (
        (2.0, 2.0), (5.0, 2.0),
        (27.0, 2.0), (32.0, 2.0),
        (12.0, 2.0), (17.0, 2.0),
        (43.0, 2.0), (48.0, 2.0),
    )
    return SensorSpec(
        footprint=rect(0.0, 0.0, 60.0, 56.0),
        tiles=tiles,
        terminals=terminals,
        name="four_tile",
    )


def sole_spec() -> SensorSpec:
    """Six tiles inside a simplified insole outline (toe to heel along +y)."""
    outline = (
        (20.0, 0.0), (44.0, 2.0), (56.0, 14.0), (60.0, 40.0), (62.0, 80.0),
        (68.0, 130.0), (72.0, 180.0), (66.0, 220.0), (50.0, 244.0), (30.0, 246.0),
        (12.0, 232.0), (6.0, 200.0), (8.0, 150.0), (10.0, 100.0), (6.0, 50.0),
        (8.0, 16.0),
    )
    tiles = (
        rect(24.0, 200.0, 44.0, 222.0),   # toe
        rect(14.0, 150.0, 30.0, 176.0),   # medial forefoot
        rect(44.0, 150.0, 60.0, 176.0),   # lateral forefoot
        rect(22.0, 96.0, 44.0, 118.0),    # midfoot
        rect(14.0, 22.0, 30.0, 50.0),     # heel, medial
        rect(36.0, 22.0, 50.0, 50.0),     # heel, lateral
    )
    # each tile's pad pair sits just below the tile
    terminals = []
    for t in tiles:
        x0, y0 = t[0]
        x1 = t[1][0]
        mid = (x0 + x1) / 2.0
        terminals += [(mid - 3.0, y0 - 4.0), (mid + 3.0, y0 - 4.0)]
    terminals = tuple(terminals)
    return SensorSpec(
        footprint=outline,
        tiles=tiles,
        terminals=terminals,
        name="sole",
    )
