import json
import math
import re

import pytest
from shapely.geometry import LineString, Point as ShapelyPoint

from m3dskin.design import build_print_job
from m3dskin.export import (
    JOB_DOC_VERSION,
    STROKE,
    BedOverflow,
    Layer,
    PrintJob,
    UnsupportedVersion,
    emit_gcode,
    emit_job_doc,
    emit_svg,
    extrusion_length,
    layer_volume,
    material_sequence,
    parse_job_doc,
    svg_name,
    write_artifacts,
)
from m3dskin.infill import Toolpath
from m3dskin.router import Side
from m3dskin.spec_model import (
    ALLOWED_MATERIALS,
    BandPlan,
    BandRole,
    Material,
    PrinterProfile,
    baseline_spec,
    validate_spec,
)

C, NC = Material.CONDUCTIVE, Material.NON_CONDUCTIVE
G1 = re.compile(r"^G1 X(-?\d+\.\d{3}) Y(-?\d+\.\d{3}) E(\d+\.\d{5})")


@pytest.fixture(scope="module")
def baseline_job():
    return build_print_job(validate_spec(baseline_spec()))


def tiny_job(paths, bed=(360.0, 360.0)):
    layer = Layer(0, 0.2, 0.2, BandRole.ELECTRODE_BOTTOM, tuple(paths))
    return PrintJob("tiny", BandPlan((), 0.2), (layer,), PrinterProfile(bed_size=bed), (0, 0, 10, 10))


def test_empty_job_has_no_extrusion():
    job = PrintJob("empty", BandPlan((), 0.2), (), PrinterProfile(), (0, 0, 1, 1))
    text = emit_gcode(job)
    assert text.startswith("; m3dskin")
    for line in ("G21 ; millimetres", "G90 ; absolute XY", "M83 ; relative extrusion"):
        assert line in text
    assert not any(line.startswith("G1 ") for line in text.splitlines())
    assert "; END" in text


def test_single_path_single_tool_select():
    job = tiny_job([Toolpath(((1.0, 1.0), (5.0, 1.0)), 0.4, C)])
    lines = emit_gcode(job).splitlines()
    tools = [i for i, l in enumerate(lines) if re.match(r"^T\d", l)]
    first_g1 = next(i for i, l in enumerate(lines) if l.startswith("G1 "))
    assert len(tools) == 1 and tools[0] < first_g1
    assert lines[tools[0]].startswith("T1")


def test_extrusion_formula():
    e = extrusion_length(10.0, 0.4, 0.2, 1.75)
    assert e == pytest.approx(10 * 0.4 * 0.2 / (math.pi * 0.875 ** 2))
    text = emit_gcode(tiny_job([Toolpath(((0.0, 0.0), (10.0, 0.0)), 0.4, C)]))
    (g1,) = [l for l in text.splitlines() if l.startswith("G1 ")]
    assert f"E{e:.5f}" in g1


def test_bed_overflow():
    job = tiny_job([Toolpath(((1.0, 1.0), (50.0, 1.0)), 0.4, C)], bed=(40.0, 40.0))
    with pytest.raises(BedOverflow):
        emit_gcode(job)


def test_layers_use_allowed_materials(baseline_job):
    assert baseline_job.check() == []
    for layer in baseline_job.layers:
        assert set(layer.materials()) <= ALLOWED_MATERIALS[layer.role]
    zs = [l.z for l in baseline_job.layers]
    assert zs == sorted(zs)


def test_tool_changes_match_material_switches(baseline_job):
    # independent count: walk the layers, keep the active material across
    # layer boundaries, count every change of the group being printed
    switches, active = 0, None
    for layer in baseline_job.layers:
        mats = []
        for p in layer.paths:
            if p.material not in mats:
                mats.append(p.material)
        if active in mats:
            mats.remove(active)
            mats.insert(0, active)
        for m in mats:
            if m is not active:
                switches += 1
                active = m
    text = emit_gcode(baseline_job)
    tool_lines = [l for l in text.splitlines() if re.match(r"^T\d", l)]
    assert len(tool_lines) == switches == len(material_sequence(baseline_job))


def _fmt(v):
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


def test_gcode_geometry_is_planned(baseline_job):
    planned = set()
    for layer in baseline_job.layers:
        for p in layer.paths:
            planned.update((_fmt(x), _fmt(y)) for x, y in p.points)
    text = emit_gcode(baseline_job)
    for line in text.splitlines():
        m = G1.match(line)
        if m:
            assert (m.group(1), m.group(2)) in planned


def test_extruded_volume_per_layer(baseline_job):
    pr = baseline_job.printer
    area = math.pi * (pr.filament_diameter / 2) ** 2
    text = emit_gcode(baseline_job)
    per_layer, current = {}, None
    for line in text.splitlines():
        if line.startswith("; LAYER"):
            current = int(line.split()[2])
            per_layer[current] = 0.0
        m = G1.match(line)
        if m:
            per_layer[current] += float(m.group(3)) * area
    for layer in baseline_job.layers:
        expected = layer_volume(layer)
        assert per_layer[layer.index] == pytest.approx(expected, rel=1e-3)


def test_gcode_is_deterministic(baseline_job):
    again = build_print_job(validate_spec(baseline_spec()))
    assert emit_gcode(again) == emit_gcode(baseline_job)
    for a, b in zip(again.layers, baseline_job.layers):
        assert emit_svg(a.paths, again.bounds) == emit_svg(b.paths, baseline_job.bounds)


def test_svg_one_path_per_toolpath(baseline_job):
    layer = baseline_job.layers[2]
    svg = emit_svg(layer.paths, baseline_job.bounds)
    assert svg.count("<path ") == len(layer.paths)
    assert 'viewBox="0.000 0.000 40.000 40.000"' in svg


def test_svg_empty_layer():
    svg = emit_svg([], (0, 0, 10, 10))
    assert svg.count("<path ") == 0
    assert svg.rstrip().endswith("</svg>")


def test_svg_two_materials_two_strokes():
    paths = [Toolpath(((0, 0), (1, 0)), 0.4, C), Toolpath(((0, 1), (1, 1)), 0.4, NC)]
    svg = emit_svg(paths, (0, 0, 2, 2))
    assert STROKE[C] in svg and STROKE[NC] in svg and STROKE[C] != STROKE[NC]


def test_svg_names_are_zero_padded():
    assert svg_name(423) == "layer_0423.svg"
    assert svg_name(7) == "layer_0007.svg"


def test_job_doc_round_trip(baseline_job):
    text = emit_job_doc(baseline_job)
    assert json.loads(text)["version"] == JOB_DOC_VERSION
    again = parse_job_doc(text)
    assert again == baseline_job
    assert emit_job_doc(again) == text


def test_job_doc_unknown_version(baseline_job):
    doc = json.loads(emit_job_doc(baseline_job))
    doc["version"] = 99
    with pytest.raises(UnsupportedVersion):
        parse_job_doc(json.dumps(doc))
    del doc["version"]
    with pytest.raises(UnsupportedVersion):
        parse_job_doc(json.dumps(doc))


def test_write_artifacts(tmp_path, baseline_job):
    written = write_artifacts(baseline_job, tmp_path)
    assert (tmp_path / "baseline.gcode").is_file()
    assert (tmp_path / "job.json").is_file()
    svgs = sorted((tmp_path / "layers").glob("layer_*.svg"))
    assert len(svgs) == len(baseline_job.layers)
    assert len(written) == len(svgs) + 2


def test_top_via_column_is_conductive_and_insulated(baseline_job):
    top = next(t for t in baseline_job.traces if t.net.side is Side.TOP)
    via = ShapelyPoint(top.net.via_point)
    for layer in baseline_job.layers:
        if layer.role in (BandRole.COVER_BOTTOM, BandRole.COVER_TOP):
            continue
        conductive = [LineString(p.points) for p in layer.paths if p.material is C]
        # a conductive bead passes within one width of the via on every layer
        assert min(g.distance(via) for g in conductive) <= 0.4
        if layer.role in (BandRole.SPARSE_CONDUCTIVE, BandRole.ELECTRODE_BOTTOM):
            # nothing conductive in the insulating ring between pad and sensing area
            ring_mid = ShapelyPoint(via.x + 0.8 + 0.4, via.y + 0.8 + 0.4)
            assert min(g.distance(ring_mid) for g in conductive) > 0.2 - 1e-9


def test_wiring_layer_contains_trace_beads(baseline_job):
    wiring = [l for l in baseline_job.layers if l.role is BandRole.WIRING]
    assert len(wiring) == 2
    for t in baseline_job.traces:
        line = LineString(t.path)
        beads = [p for p in wiring[0].paths if p.material is C]
        covered = sum(LineString(b.points).length for b in beads if LineString(b.points).distance(line) < 0.5)
        assert covered >= 2 * t.length - 1e-6
