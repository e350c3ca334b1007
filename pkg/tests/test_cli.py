from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from symflow.cli import EXIT_INTEGRATION, EXIT_OK, EXIT_PARSE, EXIT_THRESHOLD, main

GOOD = """\
[scenario]
kind = neumann
n = 3
eps = 1
t_end = 0.5
dt = 1e-3
seed = 7
A = diag 1 2 3 4

[thresholds]
default = 1e-9
"""


def _write(tmp_path: Path, name: str, text: str) -> Path:
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_run_writes_csv_and_json(tmp_path, capsys):
    cfg = _write(tmp_path, "good.ini", GOOD)
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == EXIT_OK
    assert "ok" in capsys.readouterr().out
    csv = (tmp_path / "out" / "good.csv").read_text().splitlines()
    assert csv[0].startswith("t,") and len(csv) == 1 + 501
    report = json.loads((tmp_path / "out" / "good.json").read_text())
    assert report["pass"] is True and report["kind"] == "neumann"
    assert set(report["invariants"]) >= {"H", "F1", "F2", "F3", "F4"}


def test_run_is_deterministic(tmp_path):
    cfg = _write(tmp_path, "good.ini", GOOD)
    main(["run", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", str(cfg), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "good.csv").read_bytes() == (tmp_path / "b" / "good.csv").read_bytes()


def test_overrides(tmp_path):
    cfg = _write(tmp_path, "good.ini", GOOD)
    main(["run", str(cfg), "--out", str(tmp_path / "o"), "--dt", "0.01", "--t-end", "0.2", "--seed", "3"])
    report = json.loads((tmp_path / "o" / "good.json").read_text())
    assert (report["dt"], report["t_end"], report["seed"]) == (0.01, 0.2, 3)
    rows = (tmp_path / "o" / "good.csv").read_text().splitlines()
    assert len(rows) == 1 + 21


def test_threshold_exit(tmp_path, capsys):
    cfg = _write(tmp_path, "tight.ini", GOOD.replace("default = 1e-9", "default = 1e-20"))
    assert main(["run", str(cfg), "--out", str(tmp_path / "t")]) == EXIT_THRESHOLD
    assert "threshold exceeded" in capsys.readouterr().err
    # outputs are still written
    assert (tmp_path / "t" / "tight.json").exists()


def test_parse_exit_names_line_and_field(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.ini", GOOD.replace("dt = 1e-3", "dt = fast"))
    assert main(["run", str(cfg), "--out", str(tmp_path / "p")]) == EXIT_PARSE
    err = capsys.readouterr().err
    assert f"{cfg}:6:" in err and "[dt]" in err
    assert not (tmp_path / "p").exists()


def test_missing_file_is_parse_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "m")]) == EXIT_PARSE


def test_integration_exit(tmp_path, capsys):
    # an absurd initial scale overflows on the first step
    cfg = _write(tmp_path, "blow.ini", GOOD.replace("seed = 7", "seed = 7\nscale = 1e200"))
    assert main(["run", str(cfg), "--out", str(tmp_path / "e")]) == EXIT_INTEGRATION
    assert "integration failed" in capsys.readouterr().err


def test_largest_code_wins(tmp_path):
    good = _write(tmp_path, "good.ini", GOOD)
    bad = _write(tmp_path, "bad.ini", "[scenario]\nkind = none\n")
    tight = _write(tmp_path, "tight.ini", GOOD.replace("default = 1e-9", "default = 1e-20"))
    assert main(["run", str(good), str(tight), "--out", str(tmp_path / "x")]) == EXIT_THRESHOLD
    assert main(["run", str(good), str(bad), str(tight), "--out", str(tmp_path / "y")]) == EXIT_PARSE


def test_parallel_jobs_match_serial(tmp_path):
    a = _write(tmp_path, "a.ini", GOOD)
    b = _write(tmp_path, "b.ini", GOOD.replace("seed = 7", "seed = 8"))
    assert main(["run", str(a), str(b), "--out", str(tmp_path / "s")]) == EXIT_OK
    assert main(["run", str(a), str(b), "--out", str(tmp_path / "j"), "--jobs", "2"]) == EXIT_OK
    for name in ("a.csv", "b.csv"):
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "j" / name).read_bytes()


@pytest.mark.parametrize(
    "kind, expected",
    [("jacobi-geodesic", "joachimsthal"), ("kepler-transport", "eccentricity_identity"), ("neumann", "F4")],
)
def test_list_invariants(kind, expected, capsys):
    assert main(["list-invariants", kind]) == EXIT_OK
    assert expected in capsys.readouterr().out.split()


def test_list_invariants_affine_lambda_names(capsys):
    assert main(["list-invariants", "affine", "--n", "2"]) == EXIT_OK
    names = capsys.readouterr().out.split()
    assert any(n.startswith("cp[") and n.endswith("_c3") for n in names)


def test_list_invariants_unknown_kind(capsys):
    assert main(["list-invariants", "lorenz"]) == EXIT_PARSE
    assert "unknown kind" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "symflow.cli", "list-invariants", "elastic"], capture_output=True, text=True, check=True
    )
    assert out.stdout.split() == ["H", "I1", "I2"]
