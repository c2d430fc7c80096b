import csv
import filecmp
import json
from dataclasses import replace
from importlib.resources import files

import pytest
import yaml

from m3dskin.apps import Gait, Session, synthetic_gait, synthetic_grasp, write_session_csv
from m3dskin.cli import InvalidInput, build_parser, main, parse_forces
from m3dskin.response import fit_rf, load_params, rf_eval
from m3dskin.spec_model import baseline_spec, dump_spec, rect

DATA = files("m3dskin") / "data"
BASELINE = str(DATA / "baseline.yaml")
ANCHORS = str(DATA / "anchors_baseline.csv")
LAYOUTS = str(DATA / "layouts.yaml")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip().startswith("{") else out


def leftovers(parent, name):
    return [p for p in parent.iterdir() if p.name.startswith(f".{name}.")]


# --- parsing ---------------------------------------------------------------

def test_parse_forces(tmp_path):
    assert parse_forces("0,25,100") == [0.0, 25.0, 100.0]
    assert parse_forces("0:160:40") == [0.0, 40.0, 80.0, 120.0, 160.0]
    path = tmp_path / "f.csv"
    path.write_text("force_N\n1\n2.5\n")
    assert parse_forces(str(path)) == [1.0, 2.5]
    for bad in ("a,b", "0:10:0", str(tmp_path / "missing.csv")):
        with pytest.raises(InvalidInput):
            parse_forces(bad)


def test_help_lists_every_flag(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)
    assert main(["design", "--help"]) == 0
    capsys.readouterr()


def test_unknown_flag_is_an_error(tmp_path, capsys):
    assert main(["design", "--spec", BASELINE, "--out", str(tmp_path / "o"), "--bogus"]) == 1
    assert main(["frobnicate"]) == 1
    capsys.readouterr()


# --- design ----------------------------------------------------------------

def test_design_happy_path_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    code, summary = run(capsys, "design", "--spec", BASELINE, "--out", str(a))
    assert code == 0, summary
    assert summary["sparse_print_layers"] == 14
    assert (a / "baseline.gcode").is_file() and (a / "job.json").is_file()
    svgs = sorted((a / "layers").glob("*.svg"))
    assert len(svgs) == summary["layers"]
    assert run(capsys, "design", "--spec", BASELINE, "--out", str(b))[0] == 0
    cmp = filecmp.dircmp(a, b)
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for svg in svgs:
        assert svg.read_bytes() == (b / "layers" / svg.name).read_bytes()
    assert leftovers(tmp_path, "a") == [] and leftovers(tmp_path, "b") == []


def test_design_gcode_only(tmp_path, capsys):
    code, _ = run(capsys, "design", "--spec", BASELINE, "--out", str(tmp_path / "o"), "--format", "gcode")
    assert code == 0
    assert not (tmp_path / "o" / "layers").exists()


def test_design_invalid_spec(tmp_path, capsys):
    spec = replace(baseline_spec(), tiles=(rect(30.0, 30.0, 60.0, 60.0),))
    path = tmp_path / "bad.yaml"
    path.write_text(dump_spec(spec))
    out = tmp_path / "out"
    code, summary = run(capsys, "design", "--spec", str(path), "--out", str(out))
    assert code == 1
    assert any("outside the footprint" in v for v in summary["violations"])
    assert not out.exists()
    assert leftovers(tmp_path, "out") == []


def test_design_missing_or_garbled_spec(tmp_path, capsys):
    assert run(capsys, "design", "--spec", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o"))[0] == 1
    garbled = tmp_path / "g.yaml"
    garbled.write_text("footprint: [1, 2\n")
    assert run(capsys, "design", "--spec", str(garbled), "--out", str(tmp_path / "o"))[0] == 1
    assert not (tmp_path / "o").exists()


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("M3DSKIN_OUT", str(tmp_path / "env-out"))
    code, summary = run(capsys, "fit", "--anchors", ANCHORS)
    assert code == 0
    assert (tmp_path / "env-out" / "params.yaml").is_file()


# --- simulate / fit / readout ----------------------------------------------------

def test_simulate_records_seed(tmp_path, capsys):
    out = tmp_path / "sim"
    code, summary = run(capsys, "simulate", "--spec", BASELINE, "--seed", "7", "--forces", "0:160:40",
                        "--out", str(out))
    assert code == 0, summary
    assert summary["seed"] == 7
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert [float(r["force_N"]) for r in rows] == [0, 40, 80, 120, 160]
    assert {r["seed"] for r in rows} == {"7"}
    assert {r["model_hash"] for r in rows} == {summary["model_hash"]}
    r = [float(x["resistance_ohm"]) for x in rows]
    assert all(b <= a for a, b in zip(r, r[1:]))
    again = tmp_path / "sim2"
    run(capsys, "simulate", "--spec", BASELINE, "--seed", "7", "--forces", "0:160:40", "--out", str(again))
    assert (out / "sweep.csv").read_bytes() == (again / "sweep.csv").read_bytes()


def test_simulate_needs_seed(tmp_path, capsys):
    code, summary = run(capsys, "simulate", "--spec", BASELINE, "--out", str(tmp_path / "o"))
    assert code == 1 and "seed" in summary["error"]


def test_fit_reproduces_anchors(tmp_path, capsys):
    code, summary = run(capsys, "fit", "--anchors", ANCHORS, "--out", str(tmp_path))
    assert code == 0
    params = load_params(tmp_path / "params.yaml")
    for f, r in ((0, 5900), (25, 6100), (100, 5450), (160, 5400)):
        assert abs(rf_eval(params, f) / r - 1) < 0.01
    assert 15 <= summary["peak_force_N"] <= 35


def test_fit_with_too_few_anchors(tmp_path, capsys):
    path = tmp_path / "a.csv"
    path.write_text("force_N,resistance_ohm\n0,5900\n25,6100\n160,5400\n")
    code, _ = run(capsys, "fit", "--anchors", str(path), "--out", str(tmp_path / "o"))
    assert code == 1
    assert not (tmp_path / "o").exists()


def test_readout_preset_and_params(tmp_path, capsys):
    code, _ = run(capsys, "readout", "--preset", "baseline", "--forces", "0,100", "--out", str(tmp_path / "p"))
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "p" / "readout.csv")))
    assert list(rows[0]) == ["force_N", "resistance_ohm", "voltage_V", "adc_counts", "pressure_Pa"]
    assert float(rows[1]["pressure_Pa"]) == pytest.approx(565884.2, rel=1e-6)
    params = tmp_path / "params.yaml"
    from m3dskin.response import dump_params
    params.write_text(dump_params(fit_rf([(0, 5900), (25, 6100), (100, 5450), (160, 5400)])))
    code, _ = run(capsys, "readout", "--params", str(params), "--forces", "0,100", "--out", str(tmp_path / "q"))
    assert code == 0
    assert (tmp_path / "p" / "readout.csv").read_text() == (tmp_path / "q" / "readout.csv").read_text()


def test_readout_needs_exactly_one_source(tmp_path, capsys):
    assert run(capsys, "readout", "--forces", "0", "--out", str(tmp_path / "o"))[0] == 1
    assert run(capsys, "readout", "--preset", "nope", "--forces", "0", "--out", str(tmp_path / "o"))[0] == 1


# --- classify ---------------------------------------------------------------

@pytest.mark.parametrize("kind", list(Gait))
def test_classify_gait(tmp_path, capsys, kind):
    path = tmp_path / "s.csv"
    write_session_csv(synthetic_gait(kind, seed=1), path)
    code, summary = run(capsys, "classify", "--session", str(path), "--layout", LAYOUTS, "--mode", "gait",
                        "--out", str(tmp_path / "o"))
    assert code == 0
    assert summary["label"] == kind.value
    assert json.loads((tmp_path / "o" / "classification.json").read_text())["label"] == kind.value


def test_classify_grasp(tmp_path, capsys):
    layout = yaml.safe_load(open(LAYOUTS))
    tiles = sorted(layout["grasp"]["tiles"])
    for active, expected in ((2, "Fingertip"), (4, "Deep")):
        before, after = synthetic_grasp(active, seed=3)
        rows = [[before[k] for k in sorted(before)], [after[k] for k in sorted(after)]]
        path = tmp_path / f"g{active}.csv"
        write_session_csv(Session([0.0, 1.0], rows), path)
        code, summary = run(capsys, "classify", "--session", str(path), "--layout", LAYOUTS, "--mode", "grasp",
                            "--out", str(tmp_path / f"o{active}"))
        assert code == 0 and len(tiles) == 4
        assert summary["label"] == expected


def test_classify_short_session(tmp_path, capsys):
    s = synthetic_gait(Gait.WALKING, seed=0, duration_s=2.0)
    path = tmp_path / "s.csv"
    write_session_csv(s, path)
    code, summary = run(capsys, "classify", "--session", str(path), "--layout", LAYOUTS,
                        "--out", str(tmp_path / "o"))
    assert code == 1 and "need" in summary["error"]
