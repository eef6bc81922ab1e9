import json
import shutil
import subprocess
import sys

import pytest

import oracles
from rauzyinv.cli import EXIT_BUDGET, EXIT_INPUT, EXIT_NEGATIVE, EXIT_OK, main

ROW = oracles.FIG2


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def _manifest_line(text):
    first = text.splitlines()[0]
    assert first.startswith(("# manifest ", "// manifest "))
    return json.loads(first.split("manifest ", 1)[1])


def test_class_json(tmp_path):
    code, text = run(tmp_path, "class", "--row", ROW, "--format", "json")
    assert code == EXIT_OK
    data = json.loads(text)
    assert data["summary"]["vertices"] == 8256 and data["summary"]["arrows"] == 13056
    assert data["manifest"]["class_hash"] == "4728c1863c234dcf"
    assert data["manifest"]["command"] == "class"


def test_class_dot_manifest(tmp_path):
    code, text = run(tmp_path, "class", "--row", ROW)
    assert code == EXIT_OK
    assert _manifest_line(text)["seed"] == 0
    assert "digraph" in text


def test_row_from_file(tmp_path):
    f = tmp_path / "row.txt"
    f.write_text(ROW + "\n")
    code, text = run(tmp_path, "measure", "--row", "@" + str(f))
    assert code == EXIT_OK and json.loads(text)["nu"] == "1/48"


@pytest.mark.parametrize("row, needle", [
    ("A B * iA", "malformed"),
    ("A iA * B iB", "not irreducible"),
])
def test_bad_rows(tmp_path, capsys, row, needle):
    code, _ = run(tmp_path, "class", "--row", row)
    assert code == EXIT_INPUT
    assert needle in capsys.readouterr().err


def test_subset_condition_message(tmp_path, capsys):
    code, _ = run(tmp_path, "class", "--row", "A B * iA iB")
    assert code == EXIT_INPUT
    assert "subset condition" in capsys.readouterr().err


def test_unknown_flag():
    assert main(["class", "--nope"]) == EXIT_INPUT


def test_certify_canonical_and_verify(tmp_path, section):
    code, text = run(tmp_path, "certify", "--row", str(section.base), "--loop", section.word, name="c.json")
    assert code == EXIT_OK
    data = json.loads(text)
    assert data["neat"] and data["certificate"]["strongly_positive"]
    cert = tmp_path / "cert.json"
    cert.write_text(json.dumps(data["certificate"]))
    code, text = run(tmp_path, "certify", "--row", ROW, "--verify", str(cert), name="v.json")
    assert code == EXIT_OK and json.loads(text)["verified"]


def test_certify_negative(tmp_path):
    code, text = run(tmp_path, "certify", "--row", ROW, "--loop", "LR")
    assert code == EXIT_NEGATIVE
    assert not json.loads(text)["certificate"]["strongly_positive"]


def test_certify_bad_word(tmp_path):
    code, _ = run(tmp_path, "certify", "--row", ROW, "--loop", "LXQ")
    assert code == EXIT_INPUT


def test_measure_budget(tmp_path):
    code, _ = run(tmp_path, "measure", "--row", "F E D iB iD C iC * A iA B iE iF")
    assert code == EXIT_BUDGET


def test_measure_q_validation(tmp_path):
    assert run(tmp_path, "measure", "--row", ROW, "--q", "1,2")[0] == EXIT_INPUT
    assert run(tmp_path, "measure", "--row", ROW, "--q", "1,0,1,1")[0] == EXIT_INPUT


def test_measure_probabilities(tmp_path):
    code, text = run(tmp_path, "measure", "--row", ROW)
    data = json.loads(text)
    assert data["arrow_probabilities"] == {"left": "1/3", "right": "2/3"}


def test_flow_csv(tmp_path):
    code, text = run(tmp_path, "flow", "--row", ROW, "--t", "3", "--samples", "12", "--seed", "5")
    assert code == EXIT_OK
    lines = text.splitlines()
    assert _manifest_line(text)["t"] == 3.0
    assert lines[1] == "t,n_steps,norm,min_h,area"
    areas = [float(line.split(",")[-1]) for line in lines[2:]]
    assert len(areas) == 13
    assert max(areas) - min(areas) < 1e-12 * max(areas)
    assert all(float(line.split(",")[3]) > 0 for line in lines[2:])


def test_flow_json(tmp_path):
    code, text = run(tmp_path, "flow", "--row", ROW, "--t", "1", "--samples", "4", "--format", "json")
    assert code == EXIT_OK
    assert len(json.loads(text)["trajectory"]) == 5


def test_surface(tmp_path, capsys):
    code, text = run(tmp_path, "surface", "--row", ROW, "--seed", "2")
    assert code == EXIT_OK
    data = json.loads(text)
    assert data["check"]["sum_multiplicities"] == data["check"]["four_g_minus_four"] == 4
    assert "= 4g-4 = 4" in capsys.readouterr().err


def test_format_not_available(tmp_path):
    assert run(tmp_path, "surface", "--row", ROW, "--format", "dot")[0] == EXIT_INPUT


def test_mixing_constant(tmp_path):
    code, text = run(tmp_path, "mixing", "--row", ROW, "--observable", "constant", "--samples", "100",
                     "--times", "0,1,2")
    assert code == EXIT_OK
    rows = text.splitlines()[2:]
    assert [float(r.split(",")[1]) for r in rows] == [0.0, 0.0, 0.0]


def test_byte_identical(tmp_path):
    argv = ["mixing", "--row", ROW, "--experiment", "tail", "--samples", "60", "--seed", "7"]
    assert run(tmp_path, *argv, name="a")[1] == run(tmp_path, *argv, name="b")[1]
    argv = ["flow", "--row", ROW, "--seed", "3", "--t", "2"]
    assert run(tmp_path, *argv, name="c")[1] == run(tmp_path, *argv, name="d")[1]


def test_out_env(tmp_path, monkeypatch):
    monkeypatch.setenv("RAUZYINV_OUT", str(tmp_path / "res"))
    assert main(["measure", "--row", ROW]) == EXIT_OK
    assert json.loads((tmp_path / "res" / "measure.json").read_text())["nu"] == "1/48"


def test_console_script():
    exe = shutil.which("rauzyinv")
    cmd = [exe] if exe else [sys.executable, "-m", "rauzyinv.cli"]
    res = subprocess.run(cmd + ["measure", "--row", ROW], capture_output=True, text=True, timeout=120)
    assert res.returncode == 0
    assert json.loads(res.stdout)["nu"] == "1/48"
    assert "measure: nu = 1/48" in res.stderr
