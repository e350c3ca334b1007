from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from symflow.cartan import EpsForm
from symflow.affine_flow import space_form_generator
from symflow.neumann import block_canonical_matrix
from symflow.scenario import (
    KINDS,
    Scenario,
    ScenarioError,
    format_csv,
    list_invariants,
    load_scenario,
    parse_A,
    parse_scenario,
    run_scenario,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

NEUMANN = """\
[scenario]
kind = neumann
n = 3
eps = 1
t_end = 10
dt = 1e-3
seed = 7
A = diag 1 2 3 4

[thresholds]
default = 1e-9
"""


# ---------------------------------------------------------------- parsing


def test_parse_defaults():
    sc = parse_scenario(NEUMANN)
    assert (sc.kind, sc.n, sc.eps, sc.s, sc.seed) == ("neumann", 3, 1, 0, 7)
    assert sc.t_end == 10.0 and sc.dt == 1e-3
    assert sc.default_threshold == 1e-9 and sc.thresholds == {}
    assert sc.form == EpsForm(3, 1)
    assert sc.initial == {}


def test_with_overrides():
    sc = parse_scenario(NEUMANN)
    o = sc.with_overrides(dt=0.01, seed=3)
    assert (o.dt, o.t_end, o.seed) == (0.01, 10.0, 3)
    assert sc.dt == 1e-3
    assert sc.with_overrides() == sc


def test_initial_and_thresholds():
    text = NEUMANN + "H = 1e-11\n\n[initial]\nx = 1 0 0 0\ny = 0 0.5 0 0\n"
    sc = parse_scenario(text)
    assert np.array_equal(sc.initial["x"], [1, 0, 0, 0])
    assert sc.thresholds == {"H": 1e-11}


def test_matrix_initial():
    text = """\
[scenario]
kind = pendulum
n = 3
t_end = 1
dt = 1e-2

[initial]
R = 1 0 0; 0 1 0; 0 0 1
Q = 0 0.3 0; -0.3 0 0; 0 0 0
"""
    sc = parse_scenario(text)
    assert sc.initial["R"].shape == (3, 3)
    assert sc.initial["Q"][0, 1] == 0.3


@pytest.mark.parametrize(
    "text, line, field",
    [
        (NEUMANN.replace("t_end = 10", "t_end = ten"), 5, "t_end"),
        (NEUMANN.replace("seed = 7", "seed = 7\nbogus = 1"), 8, "bogus"),
        (NEUMANN.replace("eps = 1", "eps = 2"), 4, "eps"),
        (NEUMANN.replace("dt = 1e-3", "dt = -1"), 6, "dt"),
        (NEUMANN.replace("n = 3", "n = 2.5"), 3, "n"),
        (NEUMANN.replace("kind = neumann", "kind = lorenz"), 2, "kind"),
        (NEUMANN + "H2 = 1e-3\n", 12, "H2"),
        (NEUMANN + "H = -1\n", 12, "H"),
        (NEUMANN + "\n[initial]\nz = 1 2 3 4\n", 14, "z"),
    ],
)
def test_malformed_reports_location(text, line, field):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text, "case.ini")
    assert info.value.line == line and info.value.field == field
    assert str(info.value).startswith(f"case.ini:{line}:")


def test_structural_errors():
    with pytest.raises(ScenarioError, match="missing \\[scenario\\]"):
        parse_scenario("[initial]\nx = 1\n")
    with pytest.raises(ScenarioError, match="unknown section"):
        parse_scenario(NEUMANN + "[extra]\na = 1\n")
    with pytest.raises(ScenarioError, match="missing required field 'dt'"):
        parse_scenario(NEUMANN.replace("dt = 1e-3\n", ""))
    with pytest.raises(ScenarioError, match="missing initial"):
        parse_scenario(NEUMANN + "\n[initial]\nx = 1 0 0 0\n")
    with pytest.raises(ScenarioError):
        parse_scenario("not an ini file")


def test_setup_errors_are_scenario_errors():
    # wrong A size and off-sphere initial data surface at parse time
    with pytest.raises(ScenarioError, match="diag needs 4"):
        parse_scenario(NEUMANN.replace("diag 1 2 3 4", "diag 1 2 3"))
    with pytest.raises(ScenarioError):
        parse_scenario(NEUMANN + "\n[initial]\nx = 1 1 0 0\ny = 0 0.5 0 0\n")


def test_parse_A_forms():
    form = EpsForm(3, -1)
    assert np.array_equal(parse_A("diag 1 2 3 4", form), np.diag([1.0, 2, 3, 4]))
    assert np.array_equal(parse_A("block 0.5 0.3 0.7", form), block_canonical_matrix(0.5, [0.3, 0.7]))
    assert np.array_equal(parse_A("E1", form), space_form_generator(form))
    M = parse_A("matrix 1 0 0 0; 0 2 0 0; 0 0 3 0; 0 0 0 4", form)
    assert np.array_equal(M, np.diag([1.0, 2, 3, 4]))
    for bad in ("diag 1 2", "block 1", "matrix 1 2; 3 4", "spiral 1", ""):
        with pytest.raises(ValueError):
            parse_A(bad, form)


def test_shipped_scenarios_parse():
    paths = sorted(SCENARIOS.glob("*.ini"))
    assert {load_scenario(p).kind for p in paths} == set(KINDS)


# ---------------------------------------------------------------- invariant names


def test_list_invariants_names():
    assert "joachimsthal" in list_invariants("jacobi-geodesic")
    assert "eccentricity_identity" in list_invariants("kepler-transport")
    affine = list_invariants("affine")
    assert {"H", "casimir"} <= set(affine)
    assert any(name.startswith("cp[") and name.endswith("_c2") for name in affine)
    assert {"F1", "F2", "F3", "F4"} <= set(list_invariants("neumann"))
    assert list_invariants("elastic") == ["H", "I1", "I2"]
    with pytest.raises(ValueError):
        list_invariants("lorenz")


def test_list_invariants_follows_lambdas():
    text = """\
[scenario]
kind = affine
n = 2
t_end = 1
dt = 0.01
A = diag 1 2 3
lambdas = 0.5 2
"""
    sc = parse_scenario(text)
    names = list_invariants("affine", 2, 1, sc)
    assert [k for k in names if k.startswith("cp[")] == [f"cp[{lam}]_c{i}" for lam in ("0.5", "2") for i in (1, 2, 3)]


# ---------------------------------------------------------------- running


def test_neumann_run_conserves():
    res = run_scenario(parse_scenario(NEUMANN))
    inv = res.report["invariants"]
    for name in ("H", "F1", "F2", "F3", "F4"):
        assert inv[name]["max_rel_drift"] < 1e-9, name
        assert inv[name]["pass"]
    assert res.passed
    assert res.header[0] == "t" and res.rows.shape[1] == len(res.header)
    assert res.rows[-1, 0] == 10.0


def test_kepler_run():
    res = run_scenario(load_scenario(SCENARIOS / "kepler.ini"))
    assert res.report["extras"]["target_energy"] == -0.5
    assert res.report["extras"]["conic"] == "ellipse"
    E = res.rows[:, res.header.index("E")]
    assert np.max(np.abs(E + 0.5)) < 1e-10
    assert res.passed


def test_threshold_failure_marks_report():
    res = run_scenario(parse_scenario(NEUMANN.replace("default = 1e-9", "default = 1e-18")))
    assert not res.passed and not res.report["pass"]


def test_csv_is_deterministic():
    sc = parse_scenario(NEUMANN).with_overrides(t_end=0.5)
    a, b = run_scenario(sc), run_scenario(sc)
    assert format_csv(a.header, a.rows) == format_csv(b.header, b.rows)


def test_seed_changes_data():
    sc = parse_scenario(NEUMANN).with_overrides(t_end=0.1)
    a = run_scenario(sc)
    b = run_scenario(sc.with_overrides(seed=8))
    assert not np.array_equal(a.rows[0], b.rows[0])


def test_format_csv_round_trip():
    rows = np.array([[0.1, 1 / 3], [2e-300, -np.pi]])
    text = format_csv(["a", "b"], rows)
    lines = text.splitlines()
    assert lines[0] == "a,b"
    back = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    assert np.array_equal(back, rows)


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIOS.glob("*.ini")))
def test_shipped_scenarios_pass(name):
    sc = load_scenario(SCENARIOS / name)
    res = run_scenario(sc.with_overrides(t_end=min(sc.t_end, 1.0)))
    assert res.passed, {k: v for k, v in {**res.report["invariants"], **res.report["checks"]}.items() if not v["pass"]}


def test_scenario_dataclass_direct():
    sc = Scenario(kind="elastic", n=3, eps=1, t_end=0.5, dt=1e-2, s=1, A_spec="E1")
    res = run_scenario(sc)
    assert set(res.report["invariants"]) == {"H", "I1", "I2"}
