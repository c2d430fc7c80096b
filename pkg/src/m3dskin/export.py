"""Deterministic artifacts: multi-material G-code, SVG layer previews and
a JSON job document.

G-code dialect is a small Marlin/Prusa subset: ``G21 G90 M83`` header,
``M104``/``M140`` temperatures from the printer profile, ``T<n>`` tool
selects exactly where the material changes, ``G0`` travel and ``G1``
extrusion moves.  XY/Z are written with 3 decimals and E with 5, so equal
jobs give byte-identical files.

File naming inside an output directory::

    <name>.gcode
    job.json
    layers/layer_0000.svg ... layer_NNNN.svg
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .geometry import polyline_length
from .infill import Toolpath
from .router import Net, Side, Trace
from .spec_model import (
    ALLOWED_MATERIALS,
    BandPlan,
    BandRole,
    Material,
    PrinterProfile,
)

JOB_DOC_VERSION = 1

STROKE = {
    Material.CONDUCTIVE: "#1a1a1a",
    Material.NON_CONDUCTIVE: "#3d8fd6",
}


class BedOverflow(ValueError):
    pass


class UnsupportedVersion(ValueError):
    pass


@dataclass(frozen=True)
class Layer:
    index: int
    z: float
    height: float
    role: BandRole
    paths: tuple[Toolpath, ...]

    def materials(self) -> list[Material]:
        seen: list[Material] = []
        for p in self.paths:
            if p.material not in seen:
                seen.append(p.material)
        return seen


@dataclass(frozen=True)
class PrintJob:
    name: str
    band_plan: BandPlan
    layers: tuple[Layer, ...]
    printer: PrinterProfile
    bounds: tuple[float, float, float, float]
    traces: tuple[Trace, ...] = ()

    def check(self) -> list[str]:
        """Structural problems: unsorted layers or disallowed materials."""
        problems = []
        zs = [layer.z for layer in self.layers]
        if zs != sorted(zs):
            problems.append("layers are not sorted by z")
        for layer in self.layers:
            bad = set(layer.materials()) - ALLOWED_MATERIALS[layer.role]
            if bad:
                problems.append(
                    f"layer {layer.index} ({layer.role.value}) uses {sorted(m.value for m in bad)}"
                )
        return problems


def _f3(v: float) -> str:
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


def _f5(v: float) -> str:
    s = f"{v:.5f}"
    return "0.00000" if s == "-0.00000" else s


def ordered_paths(layer: Layer, active: Material | None) -> list[Toolpath]:
    """Group a layer's paths by material, continuing with the active one."""
    mats = layer.materials()
    if active in mats:
        mats.remove(active)
        mats.insert(0, active)
    out = []
    for m in mats:
        out.extend(p for p in layer.paths if p.material is m)
    return out


def material_sequence(job: PrintJob) -> list[Material]:
    """Materials in the order the G-code prints them (one entry per group)."""
    seq: list[Material] = []
    active = None
    for layer in job.layers:
        for p in ordered_paths(layer, active):
            if p.material is not active:
                seq.append(p.material)
                active = p.material
    return seq


def extrusion_length(length: float, width: float, height: float, filament_diameter: float) -> float:
    """Filament length feeding a bead of ``length x width x height`` (mm)."""
    return length * width * height / (math.pi * (filament_diameter / 2.0) ** 2)


def _check_bed(job: PrintJob) -> None:
    bx, by = job.printer.bed_size
    for layer in job.layers:
        for p in layer.paths:
            for x, y in p.points:
                if not (-1e-6 <= x <= bx + 1e-6 and -1e-6 <= y <= by + 1e-6):
                    raise BedOverflow(
                        f"layer {layer.index}: point ({x:.3f}, {y:.3f}) outside the "
                        f"{bx} x {by} mm bed"
                    )


def emit_gcode(job: PrintJob) -> str:
    _check_bed(job)
    pr = job.printer
    out = [
        "; m3dskin multi-material G-code",
        f"; job: {job.name}",
        f"; printer: {pr.name}",
        f"; layers: {len(job.layers)}",
        "G21 ; millimetres",
        "G90 ; absolute XY",
        "M83 ; relative extrusion",
        f"M140 S{pr.bed_temp}",
        f"M104 S{pr.nozzle_temp}",
        "G28",
    ]
    active: Material | None = None
    pf, tf = _f3(pr.print_feed).rstrip("0").rstrip("."), _f3(pr.travel_feed).rstrip("0").rstrip(".")
    for layer in job.layers:
        out.append(f"; LAYER {layer.index} Z={_f3(layer.z)} {layer.role.value}")
        out.append(f"G0 Z{_f3(layer.z)} F{tf}")
        for path in ordered_paths(layer, active):
            if path.material is not active:
                out.append(f"T{pr.tool_for(path.material)} ; {path.material.value}")
                active = path.material
            pts = list(path.points) + ([path.points[0]] if path.closed else [])
            out.append(f"G0 X{_f3(pts[0][0])} Y{_f3(pts[0][1])} F{tf}")
            first = True
            for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
                e = extrusion_length(math.hypot(x1 - x0, y1 - y0), path.width, layer.height,
                                     pr.filament_diameter)
                feed = f" F{pf}" if first else ""
                out.append(f"G1 X{_f3(x1)} Y{_f3(y1)} E{_f5(e)}{feed}")
                first = False
    out += ["; END", "M104 S0", "M140 S0", "M84", ""]
    return "\n".join(out)


def emit_svg(paths: Sequence[Toolpath], bounds: tuple[float, float, float, float],
             title: str = "") -> str:
    """One ``<path>`` per toolpath; y points up as on the bed."""
    x0, y0, x1, y1 = bounds
    w, h = x1 - x0, y1 - y0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_f3(x0)} {_f3(y0)} {_f3(w)} {_f3(h)}" '
        f'width="{_f3(w)}mm" height="{_f3(h)}mm">',
    ]
    if title:
        out.append(f"<title>{title}</title>")
    out.append(
        f'<g fill="none" stroke-linecap="round" stroke-linejoin="round" '
        f'transform="matrix(1 0 0 -1 0 {_f3(y0 + y1)})">'
    )
    for p in paths:
        d = "M " + " L ".join(f"{_f3(x)} {_f3(y)}" for x, y in p.points)
        if p.closed:
            d += " Z"
        out.append(
            f'<path d="{d}" stroke="{STROKE[p.material]}" stroke-width="{_f3(p.width)}" '
            f'data-material="{p.material.value}"/>'
        )
    out += ["</g>", "</svg>", ""]
    return "\n".join(out)


def svg_name(index: int) -> str:
    return f"layer_{index:04d}.svg"


# --- job document -------------------------------------------------------

def _path_dict(p: Toolpath) -> dict[str, Any]:
    return {
        "material": p.material.value,
        "width": p.width,
        "closed": p.closed,
        "points": [[x, y] for x, y in p.points],
    }


def _trace_dict(t: Trace) -> dict[str, Any]:
    return {
        "tile_id": t.net.tile_id,
        "side": t.net.side.label,
        "via_point": list(t.net.via_point),
        "terminal": list(t.net.terminal),
        "path": [[x, y] for x, y in t.path],
        "trace_width": t.trace_width,
        "thickness": t.thickness,
        "estimated_resistance": t.estimated_resistance,
    }


def job_to_dict(job: PrintJob) -> dict[str, Any]:
    pr = job.printer
    return {
        "version": JOB_DOC_VERSION,
        "name": job.name,
        "bounds": list(job.bounds),
        "printer": {
            "name": pr.name,
            "bed_size": list(pr.bed_size),
            "tool_count": pr.tool_count,
            "nozzle_temp": pr.nozzle_temp,
            "bed_temp": pr.bed_temp,
            "filament_diameter": pr.filament_diameter,
            "print_feed": pr.print_feed,
            "travel_feed": pr.travel_feed,
            "tools": [[m.value, t] for m, t in pr.tool_map],
        },
        "band_plan": job.band_plan.to_dict(),
        "traces": [_trace_dict(t) for t in job.traces],
        "layers": [
            {
                "index": layer.index,
                "z": layer.z,
                "height": layer.height,
                "role": layer.role.value,
                "paths": [_path_dict(p) for p in layer.paths],
            }
            for layer in job.layers
        ],
    }


def _pts(seq: Iterable) -> tuple:
    return tuple((float(x), float(y)) for x, y in seq)


def job_from_dict(d: dict[str, Any]) -> PrintJob:
    version = d.get("version")
    if version != JOB_DOC_VERSION:
        raise UnsupportedVersion(f"job document version {version!r} is not supported")
    p = d["printer"]
    printer = PrinterProfile(
        name=p["name"],
        bed_size=tuple(float(v) for v in p["bed_size"]),
        tool_count=int(p["tool_count"]),
        nozzle_temp=p["nozzle_temp"],
        bed_temp=p["bed_temp"],
        filament_diameter=float(p["filament_diameter"]),
        print_feed=float(p["print_feed"]),
        travel_feed=float(p["travel_feed"]),
        tool_map=tuple((Material(m), int(t)) for m, t in p["tools"]),
    )
    traces = tuple(
        Trace(
            net=Net(
                tile_id=int(t["tile_id"]),
                side=Side.TOP if t["side"] == "TopElectrode" else Side.BOTTOM,
                via_point=tuple(float(v) for v in t["via_point"]),
                terminal=tuple(float(v) for v in t["terminal"]),
            ),
            path=_pts(t["path"]),
            trace_width=float(t["trace_width"]),
            thickness=float(t["thickness"]),
            estimated_resistance=float(t["estimated_resistance"]),
        )
        for t in d.get("traces", [])
    )
    layers = tuple(
        Layer(
            index=int(layer["index"]),
            z=float(layer["z"]),
            height=float(layer["height"]),
            role=BandRole(layer["role"]),
            paths=tuple(
                Toolpath(
                    points=_pts(pp["points"]),
                    width=float(pp["width"]),
                    material=Material(pp["material"]),
                    closed=bool(pp["closed"]),
                )
                for pp in layer["paths"]
            ),
        )
        for layer in d["layers"]
    )
    return PrintJob(
        name=d["name"],
        band_plan=BandPlan.from_dict(d["band_plan"]),
        layers=layers,
        printer=printer,
        bounds=tuple(float(v) for v in d["bounds"]),
        traces=traces,
    )


def emit_job_doc(job: PrintJob) -> str:
    return json.dumps(job_to_dict(job), indent=1) + "\n"


def parse_job_doc(text: str) -> PrintJob:
    return job_from_dict(json.loads(text))


def write_artifacts(job: PrintJob, out_dir: Path, formats: Iterable[str] = ("gcode", "svg", "job")) -> list[Path]:
    """Write the selected artifacts under ``out_dir``; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = set(formats)
    written = []
    if "gcode" in formats:
        p = out_dir / f"{job.name}.gcode"
        p.write_text(emit_gcode(job))
        written.append(p)
    if "svg" in formats:
        layer_dir = out_dir / "layers"
        layer_dir.mkdir(exist_ok=True)
        for layer in job.layers:
            p = layer_dir / svg_name(layer.index)
            p.write_text(emit_svg(layer.paths, job.bounds,
                                  title=f"layer {layer.index} z={_f3(layer.z)} {layer.role.value}"))
            written.append(p)
    if "job" in formats:
        p = out_dir / "job.json"
        p.write_text(emit_job_doc(job))
        written.append(p)
    return written


def layer_volume(layer: Layer) -> float:
    """Planned bead volume of a layer, sum of length x width x height (mm^3)."""
    return sum(polyline_length(p.points, p.closed) * p.width * layer.height for p in layer.paths)
