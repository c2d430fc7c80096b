"""Command-line entry point.

    m3dskin design   --spec SPEC.yaml [--out DIR] [--format gcode --format svg]
    m3dskin simulate --spec SPEC.yaml --seed N [--forces 0:160:10] [--tile 0] [--out DIR]
    m3dskin fit      --anchors ANCHORS.csv [--out DIR]
    m3dskin readout  (--params PARAMS.yaml | --preset NAME) --forces F [--out DIR]
    m3dskin classify --session SESSION.csv --layout LAYOUT.yaml --mode {gait,grasp} [--out DIR]

Every command prints a JSON summary on stdout.  Artifacts are staged in a
temporary directory next to ``--out`` and moved in only when the command
succeeds.  ``--out`` defaults to ``$M3DSKIN_OUT`` or ``./m3dskin-out``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import apps, export, resistnet, response
from .design import build_print_job
from .router import Side, route_spec
from .spec_model import SpecError, SpecFormatError, compile_bands, load_spec, validate_spec

OUT_ENV = "M3DSKIN_OUT"
DEFAULT_OUT = "m3dskin-out"

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class InvalidInput(ValueError):
    """Bad arguments or unreadable input files (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def parse_forces(text: str) -> list[float]:
    """``a,b,c`` list, ``start:stop:step`` range (stop included) or a CSV
    file with a ``force_N`` column."""
    p = Path(text)
    if p.suffix == ".csv" or p.is_file():
        if not p.is_file():
            raise InvalidInput(f"forces file {text} not found")
        with open(p, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "force_N" not in rows[0]:
            raise InvalidInput("forces CSV needs a force_N column")
        return [float(r["force_N"]) for r in rows]
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise InvalidInput("range step must be > 0")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 9) for i in range(n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidInput(f"cannot parse forces {text!r}: {exc}") from None


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise InvalidInput(f"{what} is required")
    p = Path(path)
    if not p.is_file():
        raise InvalidInput(f"{what} {path} not found")
    return p


class Staging:
    """Collects artifacts in a temp dir; ``commit`` moves them into place."""

    def __init__(self, out: Path):
        self.out = out
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))

    def path(self, rel: str) -> Path:
        p = self.tmp / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def commit(self) -> list[str]:
        self.out.mkdir(parents=True, exist_ok=True)
        written = []
        for src in sorted(q for q in self.tmp.rglob("*") if q.is_file()):
            rel = src.relative_to(self.tmp)
            dst = self.out / rel
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dst)
            written.append(str(dst))
        shutil.rmtree(self.tmp, ignore_errors=True)
        return written

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def _load_valid_spec(path: str):
    p = _require_file(path, "--spec")
    return validate_spec(load_spec(p))


# --- commands -----------------------------------------------------------

def cmd_design(args, stage: Staging) -> dict:
    vspec = _load_valid_spec(args.spec)
    job = build_print_job(vspec)
    formats = set(args.format or ("gcode", "svg"))
    if "csv" in formats:
        raise InvalidInput("design writes gcode and svg; csv applies to simulate/readout")
    export.write_artifacts(job, stage.tmp, formats | {"job"})
    plan = job.band_plan
    return {
        "name": job.name,
        "layers": len(job.layers),
        "sparse_print_layers": sum(b.layer_count for b in plan.sparse_bands()),
        "tool_changes": len(export.material_sequence(job)) - 1,
        "traces": [
            {"tile": t.net.tile_id, "side": t.net.side.label, "length_mm": round(t.length, 3),
             "resistance_ohm": round(t.estimated_resistance, 3)}
            for t in job.traces
        ],
    }


def cmd_simulate(args, stage: Staging) -> dict:
    if args.seed is None:
        raise InvalidInput("--seed is required for simulate")
    vspec = _load_valid_spec(args.spec)
    forces = parse_forces(args.forces)
    if any(f < 0 for f in forces) or forces != sorted(forces):
        raise InvalidInput("forces must be non-negative and ascending")
    if not 0 <= args.tile < len(vspec.tiles):
        raise InvalidInput(f"tile {args.tile} not in spec")
    traces = [] if args.ideal_wiring else [
        t for t in route_spec(vspec) if t.net.tile_id == args.tile
    ]
    model = resistnet.build_stack_model(
        vspec.params, seed=args.seed, tile_area=vspec.tiles[args.tile].area, plan=compile_bands(vspec)
    )
    rows = resistnet.sweep_force(model, traces, forces)
    with open(stage.path("sweep.csv"), "w", newline="") as fh:
        resistnet.write_sweep_csv(rows, model, fh)
    return {
        "seed": args.seed,
        "model_hash": model.param_hash(),
        "tile": args.tile,
        "points": len(rows),
        "r_min_ohm": min(r for _, r in rows),
        "r_max_ohm": max(r for _, r in rows),
        "wiring_ohm": {Side(t.net.side).label: t.estimated_resistance for t in traces},
    }


def cmd_fit(args, stage: Staging) -> dict:
    anchors = response.read_anchors_csv(_require_file(args.anchors, "--anchors"))
    t0 = time.perf_counter()
    params = response.fit_rf(anchors, r_wire=args.r_wire)
    elapsed = time.perf_counter() - t0
    stage.path("params.yaml").write_text(response.dump_params(params))
    resid = [response.rf_eval(params, f) / r - 1.0 for f, r in anchors]
    return {
        "params": response.params_to_dict(params),
        "max_rel_residual": max(abs(x) for x in resid),
        "peak_force_N": response.peak_force(params),
        "fit_seconds": round(elapsed, 3),
    }


def cmd_readout(args, stage: Staging) -> dict:
    if bool(args.params) == bool(args.preset):
        raise InvalidInput("give exactly one of --params or --preset")
    if args.params:
        params = response.load_params(_require_file(args.params, "--params"))
    else:
        try:
            params = response.preset(args.preset)
        except KeyError as exc:
            raise InvalidInput(str(exc)) from None
    forces = parse_forces(args.forces)
    cfg = response.ReadoutConfig(v_cc=args.vcc, r_ref=args.rref, adc_bits=args.bits)
    rows = response.readout(params, forces, cfg)
    with open(stage.path("readout.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["force_N", "resistance_ohm", "voltage_V", "adc_counts", "pressure_Pa"])
        for f, r, v, c in rows:
            w.writerow([f"{f:.6g}", f"{r:.3f}", f"{v:.6f}", c,
                        f"{response.force_to_pressure(f, args.tip_mm):.1f}"])
    return {"points": len(rows), "r_ref_ohm": cfg.r_ref, "adc_bits": cfg.adc_bits}


def cmd_classify(args, stage: Staging) -> dict:
    session = apps.read_session_csv(_require_file(args.session, "--session"))
    layout = apps.load_layout(_require_file(args.layout, "--layout"))
    if args.mode == "gait":
        if "gait" not in layout:
            raise InvalidInput("layout has no gait section")
        report = apps.classify_gait(session, apps.GaitLayout.from_dict(layout["gait"]))
        result = {
            "mode": "gait",
            "label": report.label.value,
            "tie_rule": report.tie_rule,
            "channels": [
                {"channel": a.channel, "active": bool(a.active), "period_s": a.period,
                 "variance": a.variance, "threshold": a.threshold}
                for a in report.channels
            ],
        }
    else:
        if "grasp" not in layout:
            raise InvalidInput("layout has no grasp section")
        zones = {int(k): apps.Zone(v) for k, v in layout["grasp"]["tiles"].items()}
        before = {k: session.data[0, k] for k in zones}
        after = {k: session.data[-1, k] for k in zones}
        decision = apps.localize_grasp(before, after, args.threshold, zones)
        result = {"mode": "grasp", "label": decision.value,
                  "delta_ohm": {k: after[k] - before[k] for k in zones}}
    stage.path("classification.json").write_text(json.dumps(result, indent=1, default=float) + "\n")
    return result


COMMANDS = {
    "design": cmd_design,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "readout": cmd_readout,
    "classify": cmd_classify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="m3dskin", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, fmt=False):
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        if fmt:
            p.add_argument("--format", action="append", choices=("gcode", "svg", "csv"),
                           help="artifact format; repeat for several")

    p = sub.add_parser("design", help="validate, route and slice a spec into G-code/SVG/job doc")
    p.add_argument("--spec", required=True, help="sensor spec YAML")
    common(p, fmt=True)

    p = sub.add_parser("simulate", help="resistor-network force sweep for one tile")
    p.add_argument("--spec", required=True, help="sensor spec YAML")
    p.add_argument("--seed", type=int, help="contact-threshold seed (required)")
    p.add_argument("--forces", default="0:160:10", help="list a,b,c | range start:stop:step | CSV")
    p.add_argument("--tile", type=int, default=0, help="tile index")
    p.add_argument("--ideal-wiring", action="store_true", help="leave out the routed traces")
    common(p)

    p = sub.add_parser("fit", help="fit the response curve to force/resistance anchors")
    p.add_argument("--anchors", required=True, help="CSV with force_N,resistance_ohm")
    p.add_argument("--r-wire", type=float, default=0.0, help="fixed wiring resistance (ohm)")
    common(p)

    p = sub.add_parser("readout", help="force -> resistance -> divider -> ADC counts")
    p.add_argument("--params", help="response params YAML (from fit)")
    p.add_argument("--preset", help="named preset from the shipped table")
    p.add_argument("--forces", required=True, help="list a,b,c | range start:stop:step | CSV")
    p.add_argument("--vcc", type=float, default=5.0)
    p.add_argument("--rref", type=float, default=5600.0)
    p.add_argument("--bits", type=int, default=10)
    p.add_argument("--tip-mm", type=float, default=15.0, help="indenter tip diameter")
    common(p)

    p = sub.add_parser("classify", help="gait or grasp analysis of a session CSV")
    p.add_argument("--session", required=True, help="CSV with t_s,ch0,...")
    p.add_argument("--layout", required=True, help="zone map YAML")
    p.add_argument("--mode", choices=("gait", "grasp"), default="gait")
    p.add_argument("--threshold", type=float, default=500.0, help="grasp |dR| threshold (ohm)")
    common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help (0) or a usage error (1)
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    summary: dict = {"command": args.command, "out": str(out)}
    stage = Staging(out)
    try:
        summary.update(COMMANDS[args.command](args, stage))
        summary["artifacts"] = stage.commit()
        code = EXIT_OK
    except (InvalidInput, SpecError, SpecFormatError, response.InsufficientAnchors,
            apps.LayoutError, apps.TooShort, response.OutOfBranch, ValueError, KeyError) as exc:
        stage.discard()
        summary["error"] = str(exc)
        if isinstance(exc, SpecError):
            summary["violations"] = list(exc.violations)
        code = EXIT_INVALID
    except Exception as exc:  # Unroutable, NoConvergence, Disconnected, I/O and anything unforeseen
        stage.discard()
        summary["error"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_RUNTIME
    summary["exit_code"] = code
    print(json.dumps(summary, indent=1, default=float))
    return code


if __name__ == "__main__":
    sys.exit(main())
