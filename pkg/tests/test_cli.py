import json

import numpy as np
import pytest

from freebound import GridDensity, hard_core, power_law
from freebound.cli import clean, main


@pytest.fixture
def files(tmp_path):
    d1 = tmp_path / "d.json"
    d1.write_text(json.dumps(GridDensity.uniform(0.5, 0.0, 4.0, 16).to_json()))
    d2 = tmp_path / "d2.json"
    d2.write_text(json.dumps(GridDensity.uniform(0.5, [0, 0], [2, 2], [4, 4]).to_json()))
    rods = tmp_path / "rods.csv"
    x = (np.arange(64) + 0.5) * 10 / 64
    rods.write_text("x,rho\n" + "\n".join(f"{a},0.4" for a in x))
    w = tmp_path / "w.json"
    w.write_text(json.dumps(power_law(1.0, 1.0, 2.0, 3.0).to_json()))
    hc = tmp_path / "hc.json"
    hc.write_text(json.dumps(hard_core(1.0, 1.0, 3.0, tail=False).to_json()))
    return {"d": str(d1), "d2": str(d2), "rods": str(rods), "w": str(w), "hc": str(hc),
            "dir": tmp_path}


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_clean_formats():
    assert clean([float("inf"), -float("inf"), 1 / 3]) == ["inf", "-inf", 0.333333333333]


def test_bounds_gc(files, capsys):
    code, out, _ = run(["bounds", "--density", files["d"], "--potential", files["w"],
                        "--T", "1.0", "--ensemble", "gc"], capsys)
    assert code == 0
    reps = json.loads(out)
    assert isinstance(reps, list) and {r["name"] for r in reps} >= {"lower_bound", "gc_strong_upper"}


def test_bounds_writes_csv(files, capsys):
    csv = files["dir"] / "b.csv"
    out_json = files["dir"] / "b.json"
    code, _, _ = run(["bounds", "--density", files["d"], "--potential", files["w"], "--T", "1",
                      "--csv", str(csv), "--out", str(out_json)], capsys)
    assert code == 0
    assert csv.read_text().startswith("name,kind,value,exact")
    assert json.loads(out_json.read_text())[0]["name"] == "lower_bound"


def test_percus_csv(files, capsys):
    code, out, _ = run(["percus", "--density", files["rods"], "--r0", "1", "--T", "1"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["exact"] is True and rep["name"] == "percus_exact_1d"


def test_not_applicable_exit_code(files, capsys):
    code, _, err = run(["percus", "--density", files["d2"], "--r0", "1", "--T", "1"], capsys)
    assert code == 2 and "not applicable" in err


def test_usage_errors(files, capsys):
    code, _, err = run(["bounds", "--potential", files["w"]], capsys)
    assert code == 1 and "--density" in err
    code, _, err = run(["bounds", "--density", files["d"], "--potential", files["w"],
                        "--ensemble", "weird"], capsys)
    assert code == 1 and "ensemble" in err


def test_construct_oracle_cover_represent(files, capsys):
    code, out, _ = run(["construct", "--density", files["d"], "--potential", files["w"],
                        "--construction", "trial_1d", "--T", "1"], capsys)
    assert code == 0 and json.loads(out)["densityError"] <= 1e-12
    code, out, _ = run(["oracle", "--density", files["d"], "--potential", files["w"]], capsys)
    assert code == 0 and json.loads(out)["method"]
    code, out, _ = run(["cover", "--density", files["d"]], capsys)
    assert code == 0 and json.loads(out)["kind"] == "cubes"
    code, out, _ = run(["cover", "--density", files["d"], "--epsilon", "0.05"], capsys)
    assert code == 0 and json.loads(out)["kind"] == "balls"
    code, out, _ = run(["represent", "--density", files["d"], "--r0", "1"], capsys)
    assert code == 0 and json.loads(out)["exact1D"] is True


def test_verify_suite(capsys):
    code, out, _ = run(["verify", "--suite", "desk1d", "--count", "1"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["ok"] and len(rep["cases"]) == 8
