from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np
import pytest

from mscorr.cli import build_parser, main
from mscorr.spectral import SpectralImage, WavelengthAxis, save_cube, write_spectrum

from conftest import AXIS_10NM, random_cube

GOLDEN = Path(__file__).parent / "golden"
SCHEMA = json.loads((GOLDEN / "report_schema.json").read_text())
AXIS_4 = WavelengthAxis(400, 10, 4)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _cube(path, samples, axis):
    save_cube(SpectralImage(np.asarray(samples, dtype=np.uint8), axis), path)
    return path


@pytest.fixture
def hand_pair(tmp_path):
    # the 4.0 hand example in every pixel of a 2x2 cube
    a = np.tile([10, 20, 30, 40], (2, 2, 1))
    b = np.tile([14, 16, 34, 36], (2, 2, 1))
    return _cube(tmp_path / "a.msc", a, AXIS_4), _cube(tmp_path / "b.msc", b, AXIS_4)


def _report(path):
    doc = json.loads(Path(path).read_text())
    assert sorted(doc) == SCHEMA["top"]
    assert doc["schema_version"] == SCHEMA["schema_version"]
    assert sorted(doc["results"]) == SCHEMA["results"][doc["command"]]
    return doc


# --- help ------------------------------------------------------------------


SPEC_FLAGS = {
    "project": ["--in", "--space", "--sens", "--white", "--flat-white", "--out"],
    "distance": ["--ref", "--cand", "--metric", "--weights", "--sens", "--white", "--pixels", "--workers", "--out"],
    "authenticate": ["--store", "--ref-id", "--cand", "--metric", "--precision", "--margin", "--schedule", "--out"],
    "cost": ["--metric", "--bands", "--source", "--sqrt-cycles", "--out"],
    "fxp-compare": ["--metric", "--trials", "--seed"],
    "add-reference": ["--store", "--id", "--cube", "--white"],
    "list-references": ["--store"],
}


@pytest.mark.parametrize("command", list(SPEC_FLAGS))
def test_help_lists_every_flag(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in SPEC_FLAGS[command]:
        assert re.search(rf"(?<![\w-]){re.escape(flag)}(?![\w-])", text), flag


def test_top_level_help_lists_commands(capsys):
    text = build_parser().format_help()
    for command in SPEC_FLAGS:
        assert command in text


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["distance", "--ref", "x"])
    assert exc.value.code == 2


# --- distance --------------------------------------------------------------


def test_distance_hand_pair(tmp_path, hand_pair, capsys):
    out = tmp_path / "r.json"
    pixels = tmp_path / "p.csv"
    code, stdout, _ = run(capsys, "distance", "--ref", hand_pair[0], "--cand", hand_pair[1],
                          "--metric", "rms", "--out", out, "--pixels", pixels)
    assert code == 0
    doc = _report(out)
    assert doc["results"]["aggregate"] == 4.0
    assert doc["inputs"]["ref"]["sha256"] and doc["inputs"]["cand"]["sha256"]
    rows = list(csv.DictReader(pixels.open()))
    assert len(rows) == 4 and {float(r["value"]) for r in rows} == {4.0}
    assert "rms: 4.0" in stdout


def test_distance_identical_is_zero(tmp_path, hand_pair, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "distance", "--ref", hand_pair[0], "--cand", hand_pair[0],
                     "--metric", "rms", "--out", out)
    assert code == 0 and _report(out)["results"]["aggregate"] == 0.0


def test_wrms_without_weights(hand_pair, capsys):
    code, _, err = run(capsys, "distance", "--ref", hand_pair[0], "--cand", hand_pair[1], "--metric", "wrms")
    assert code == 2
    assert err.strip() == "MissingConfig: --weights"


def test_wrms_uniform_weights_equal_rms(tmp_path, hand_pair, capsys):
    w = tmp_path / "w.csv"
    write_spectrum(w, AXIS_4, [1, 1, 1, 1])  # normalized on load
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "distance", "--ref", hand_pair[0], "--cand", hand_pair[1],
                     "--metric", "wrms", "--weights", w, "--out", out)
    assert code == 0 and _report(out)["results"]["aggregate"] == 4.0


def test_missing_sens_and_white(tmp_path, capsys, rng):
    a = tmp_path / "a.msc"
    save_cube(random_cube(rng, 2, 2, AXIS_10NM), a)
    code, _, err = run(capsys, "distance", "--ref", a, "--cand", a, "--metric", "de-lab")
    assert code == 2 and err.strip() == "MissingConfig: --sens"
    code, _, err = run(capsys, "distance", "--ref", a, "--cand", a, "--metric", "mv", "--sens", "builtin:cie1931")
    assert code == 2 and err.strip() == "MissingConfig: --white"
    code, _, _ = run(capsys, "distance", "--ref", a, "--cand", a, "--metric", "mv",
                     "--sens", "builtin:cie1931", "--flat-white")
    assert code == 0


def test_dimension_mismatch_reports_error_name(tmp_path, hand_pair, capsys, rng):
    other = tmp_path / "o.msc"
    save_cube(random_cube(rng, 3, 2, AXIS_4), other)
    code, _, err = run(capsys, "distance", "--ref", hand_pair[0], "--cand", other, "--metric", "rms")
    assert code == 2 and err.startswith("DimensionMismatch:")


def test_missing_file_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "distance", "--ref", tmp_path / "no.msc", "--cand", tmp_path / "no.msc",
                       "--metric", "rms")
    assert code == 2 and err


def test_distance_workers_do_not_change_report(tmp_path, capsys, rng):
    a, b = tmp_path / "a.msc", tmp_path / "b.msc"
    save_cube(random_cube(rng, 9, 7, AXIS_10NM, low=1), a)
    save_cube(random_cube(rng, 9, 7, AXIS_10NM, low=1), b)
    aggregates = set()
    for w in (1, 3):
        out = tmp_path / f"r{w}.json"
        run(capsys, "distance", "--ref", a, "--cand", b, "--metric", "de-lab", "--sens", "builtin:cie1931",
            "--flat-white", "--workers", w, "--out", out)
        aggregates.add(_report(out)["results"]["aggregate"])
    assert len(aggregates) == 1


# --- project ---------------------------------------------------------------


def _read_tri(path):
    return [[float(r[k]) for k in ("c1", "c2", "c3")] for r in csv.DictReader(Path(path).open())]


def test_project_zero_cube(tmp_path, capsys):
    cube = _cube(tmp_path / "z.msc", np.zeros((2, 3, 41)), AXIS_10NM)
    for space in ("rgb", "xyz", "lab"):
        sens = "builtin:camera-rgb" if space == "rgb" else "builtin:cie1931"
        out = tmp_path / f"{space}.csv"
        code, _, _ = run(capsys, "project", "--in", cube, "--space", space, "--sens", sens,
                         "--flat-white", "--out", out)
        assert code == 0
        rows = _read_tri(out)
        assert len(rows) == 6 and all(v == 0.0 for r in rows for v in r)


def test_project_white_pixel_y_is_100(tmp_path, capsys, rng):
    white = rng.integers(40, 256, size=41)
    cube = _cube(tmp_path / "w.msc", white.reshape(1, 1, 41), AXIS_10NM)
    wcsv = tmp_path / "white.csv"
    write_spectrum(wcsv, AXIS_10NM, white.astype(float))
    out, rep = tmp_path / "xyz.csv", tmp_path / "r.json"
    code, _, _ = run(capsys, "project", "--in", cube, "--space", "xyz", "--sens", "builtin:cie1931",
                     "--white", wcsv, "--out", out, "--report", rep)
    assert code == 0
    assert _read_tri(out)[0][1] == 100.0
    assert _report(rep)["inputs"]["white"]["sha256"]


def test_project_lab_needs_white(tmp_path, capsys):
    cube = _cube(tmp_path / "z.msc", np.zeros((1, 1, 41)), AXIS_10NM)
    code, _, err = run(capsys, "project", "--in", cube, "--space", "lab", "--sens", "builtin:cie1931",
                       "--out", tmp_path / "o.csv")
    assert code == 2 and err.strip() == "MissingConfig: --white"


def test_project_wrong_table_kind(tmp_path, capsys):
    cube = _cube(tmp_path / "z.msc", np.zeros((1, 1, 41)), AXIS_10NM)
    code, _, err = run(capsys, "project", "--in", cube, "--space", "rgb", "--sens", "builtin:cie1931",
                       "--out", tmp_path / "o.csv")
    assert code == 2 and err.startswith("UsageError:")


def test_project_golden_csv(tmp_path, capsys):
    out = tmp_path / "xyz.csv"
    code, _, _ = run(capsys, "project", "--in", GOLDEN / "fixture_4x3.msc", "--space", "xyz",
                     "--sens", "builtin:cie1931", "--out", out)
    assert code == 0
    assert out.read_text() == (GOLDEN / "fixture_4x3_xyz.csv").read_text()


# --- authenticate ----------------------------------------------------------


@pytest.fixture
def store(tmp_path, rng, capsys):
    axis = WavelengthAxis(400, 5, 64)
    ref = random_cube(rng, 3, 3, axis)
    paths = {
        "ref": _cube(tmp_path / "ref.msc", ref.samples, axis),
        "inv": _cube(tmp_path / "inv.msc", 255 - ref.samples, axis),
    }
    base = np.full((2, 2, 64), 100)
    cand = base.copy()
    cand[:, :, ::4] += 2  # 16-band picks of 64 are every fourth band
    paths["flat"] = _cube(tmp_path / "flat.msc", base, axis)
    paths["straddle"] = _cube(tmp_path / "straddle.msc", cand, axis)
    root = tmp_path / "store"
    for rid in ("ref", "flat"):
        code, _, _ = run(capsys, "add-reference", "--store", root, "--id", rid, "--cube", paths[rid],
                         "--meta", f"name={rid}")
        assert code == 0
    return root, paths


def test_authenticate_exit_codes(tmp_path, store, capsys):
    root, p = store
    out = tmp_path / "v.json"
    code, stdout, _ = run(capsys, "authenticate", "--store", root, "--ref-id", "ref", "--cand", p["ref"],
                          "--metric", "rms", "--precision", 1.0, "--margin", 0.1, "--out", out)
    assert code == 0 and "AUTHENTIC after 1 iteration" in stdout
    doc = _report(out)
    assert doc["results"]["iterations"] == [{"bands": 16, "R": 0.0}]
    assert sorted(doc["results"]["iterations"][0]) == SCHEMA["iteration"]

    code, _, _ = run(capsys, "authenticate", "--store", root, "--ref-id", "ref", "--cand", p["inv"],
                     "--metric", "rms", "--precision", 1.0)
    assert code == 3

    code, _, _ = run(capsys, "authenticate", "--store", root, "--ref-id", "flat", "--cand", p["straddle"],
                     "--metric", "rms", "--precision", 1.5, "--margin", 1.0, "--schedule", "16,64")
    assert code == 4


def test_authenticate_straddle_two_iterations(tmp_path, store, capsys):
    root, p = store
    out = tmp_path / "v.json"
    code, _, _ = run(capsys, "authenticate", "--store", root, "--ref-id", "flat", "--cand", p["straddle"],
                     "--metric", "rms", "--precision", 1.8, "--margin", 0.5, "--out", out)
    assert code == 0
    assert _report(out)["results"]["iterations"] == [{"bands": 16, "R": 2.0}, {"bands": 64, "R": 1.0}]


def test_authenticate_config_errors(store, capsys):
    root, p = store
    code, _, err = run(capsys, "authenticate", "--store", root, "--ref-id", "ref", "--cand", p["ref"],
                       "--metric", "rms", "--precision", 1.0, "--schedule", "16,48")
    assert code == 2 and err.startswith("ScheduleInvalid:")
    code, _, err = run(capsys, "authenticate", "--store", root, "--ref-id", "nope", "--cand", p["ref"],
                       "--metric", "rms", "--precision", 1.0)
    assert code == 2 and err.startswith("UnknownReference:")
    code, _, err = run(capsys, "authenticate", "--store", root, "--ref-id", "ref", "--cand", p["ref"],
                       "--metric", "rms", "--precision", 1.0, "--schedule", "16,x")
    assert code == 2 and err.startswith("UsageError:")


def test_store_commands(tmp_path, store, capsys):
    root, p = store
    out = tmp_path / "l.json"
    code, stdout, _ = run(capsys, "list-references", "--store", root, "--out", out)
    assert code == 0
    refs = _report(out)["results"]["references"]
    assert [r["id"] for r in refs] == ["flat", "ref"]
    assert refs[1] == {"id": "ref", "width": 3, "height": 3, "bands": 64, "meta": {"name": "ref"}}
    code, _, err = run(capsys, "add-reference", "--store", root, "--id", "ref", "--cube", p["ref"])
    assert code == 2 and err.startswith("DuplicateId:")
    add_out = tmp_path / "a.json"
    code, _, _ = run(capsys, "add-reference", "--store", root, "--id", "inv", "--cube", p["inv"], "--out", add_out)
    assert code == 0 and _report(add_out)["results"]["id"] == "inv"


# --- cost ------------------------------------------------------------------


def test_cost_published_de_rgb(tmp_path, capsys):
    out = tmp_path / "c.json"
    code, stdout, _ = run(capsys, "cost", "--metric", "de-rgb", "--bands", 400, "--source", "paper", "--out", out)
    assert code == 0
    cost = _report(out)["results"]["cost"]
    assert sorted(cost) == SCHEMA["cost"]
    assert sorted(cost["projection"][0]) == SCHEMA["stage"]
    assert [(s["op"], s["count"]) for s in cost["projection"]] == [("MUL", 1200), ("ADD", 1200)]
    assert cost["source"] == "PAPER_TABLE3"
    assert "XC4VLX15" in stdout  # published constants are echoed, not recomputed


def test_cost_measured_rms(tmp_path, capsys):
    out = tmp_path / "c.json"
    code, _, _ = run(capsys, "cost", "--metric", "rms", "--bands", 4, "--source", "measured", "--out", out)
    assert code == 0
    cost = _report(out)["results"]["cost"]
    assert cost["source"] == "DERIVED_COUNTER"
    assert cost["totals"] == {"SUB": 4, "MUL": 4, "ADD": 3, "SHIFT_DIV": 1, "SQRT": 1}


def test_cost_serial_stage_latency(tmp_path, capsys):
    out = tmp_path / "c.json"
    code, stdout, _ = run(capsys, "cost", "--serial-ops", "add:400", "--out", out)
    assert code == 0
    assert _report(out)["results"]["cost"]["latency_us"] == 8.0
    assert "latency: 8.0 us" in stdout


def test_cost_sqrt_cycles_flag(tmp_path, capsys):
    cycles = []
    for k in (16, 40):
        out = tmp_path / f"c{k}.json"
        run(capsys, "cost", "--metric", "wrms", "--bands", 64, "--sqrt-cycles", k, "--out", out)
        cycles.append(_report(out)["results"]["cost"]["cycles"])
    assert cycles[1] - cycles[0] == 24


def test_cost_usage_errors(capsys):
    code, _, err = run(capsys, "cost", "--metric", "rms")
    assert code == 2 and err.startswith("UsageError:")
    code, _, _ = run(capsys, "cost", "--metric", "rms", "--bands", 401)
    assert code == 2


# --- fxp-compare -----------------------------------------------------------


@pytest.mark.parametrize("metric", ["rms", "de-rgb"])
def test_fxp_compare_identical_has_zero_error(tmp_path, metric, capsys):
    out = tmp_path / "f.json"
    code, _, _ = run(capsys, "fxp-compare", "--metric", metric, "--trials", 1, "--seed", 3, "--identical",
                     "--out", out)
    assert code == 0
    res = _report(out)["results"]
    assert res["max_rel_error"] == 0.0 and res["mean_rel_error"] == 0.0


@pytest.mark.parametrize("metric", ["rms", "de-rgb"])
def test_fxp_compare_ten_thousand_trials(tmp_path, metric, capsys):
    out = tmp_path / "f.json"
    code, _, err = run(capsys, "fxp-compare", "--metric", metric, "--trials", 10000, "--seed", 42, "--out", out)
    assert code == 0, err
    assert _report(out)["results"]["max_rel_error"] <= 2.0**-8


def test_fxp_compare_rejects_gfc(capsys):
    code, _, err = run(capsys, "fxp-compare", "--metric", "gfc", "--trials", 5)
    assert code == 2 and "no fixed-point variant" in err


def test_fxp_compare_tolerance_breach_exit_5(monkeypatch, capsys):
    import mscorr.cli as cli

    monkeypatch.setattr(cli, "fxp_trials", lambda *a, **k: np.array([0.0, 0.01]))
    code, _, err = run(capsys, "fxp-compare", "--metric", "rms", "--trials", 2)
    assert code == 5 and "exceeds" in err


def test_fxp_compare_rms_needs_power_of_two(capsys):
    code, _, err = run(capsys, "fxp-compare", "--metric", "rms", "--trials", 1, "--bands", 10)
    assert code == 2 and err.startswith("NotPowerOfTwo:")
