import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from mcgla import cli, hyperbolic as H
from mcgla.gla import bracket, get_algebra

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main([*map(str, argv), "--out", str(out)])
    return code, out


def load(path):
    return json.loads(Path(path).read_text())


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return p


# -- exact commands ------------------------------------------------------------------------


def test_mc_check_kasner_is_exact_zero(tmp_path):
    code, out = run(tmp_path, "mc-check", "--element", CONFIGS / "kasner.json")
    assert code == 0
    assert load(out / "residual.json") == {"status": "exact zero", "components": []}


def test_mc_check_off_shell(tmp_path):
    code, out = run(tmp_path, "mc-check", "--element", CONFIGS / "kasner_off_shell.json")
    rep = load(out / "residual.json")
    assert code == 0 and rep["status"] == "nonzero" and rep["components"]


def test_bracket_matches_engine(tmp_path):
    code, out = run(tmp_path, "bracket", "--x", CONFIGS / "frame_terms.json", "--y", CONFIGS / "sigma_terms.json")
    assert code == 0
    alg = get_algebra()
    x = alg.element("t0*d0") + alg.element("t1*L1", 2) + alg.element("t0", Fraction(1, 2), kind="P")
    y = alg.element("t0*s0+t2*s2", 3) + alg.element("t2*L2")
    z = bracket(x, y)
    got = {c["basis_id"]: Fraction(c["coefficient"]) for c in load(out / "bracket_report.json")["components"]}
    assert got == {b: Fraction(str(c)) for b, c in z.coeffs.items()} and got


def test_grade_report(tmp_path):
    code, out = run(tmp_path, "grade", "--element", CONFIGS / "kasner.json", "--alpha", "1,1,1")
    rep = load(out / "grades.json")
    frame = {c["label"]: tuple(c["grade"]) for c in rep["components"]}
    assert frame["θ1L1"] == (0, 1, 1) and frame["θ0(∂0)"] == (0, 0, 0)
    assert rep["in_filtration"] is True
    _, out = run(tmp_path, "grade", "--element", CONFIGS / "kasner.json", "--alpha", "0,0,0", name="low")
    assert load(out / "grades.json")["in_filtration"] is False


def test_formal_solve_outputs(tmp_path):
    code, out = run(tmp_path, "formal-solve", "--tuple", CONFIGS / "hom.json", "--order", 2)
    assert code == 0
    audit = load(out / "audit.json")
    assert audit["residual_zero_through_order"] and audit["odd_defects"] == []
    assert load(out / "series.json")
    assert (out / "solve_log.csv").read_text().startswith("n1,n2,n3")


def test_formal_solve_precondition(tmp_path):
    code, out = run(tmp_path, "formal-solve", "--tuple", CONFIGS / "hom_violating.json", "--order", 2)
    assert code == cli.EXIT_PRECONDITION
    assert load(out / "manifest.json")["exit_status"] == 3


# -- numerical commands --------------------------------------------------------------------


def test_constraints_outputs(tmp_path):
    code, out = run(tmp_path, "constraints", "--kmax", 2, "--epsilon", "1e-3")
    assert code == 0
    rows = (out / "convergence.csv").read_text().splitlines()
    assert rows[0] == "iteration,residual" and float(rows[-1].split(",")[1]) < 1e-10
    sig = load(out / "signature.json")
    assert sig["B_at_zero"] == 0 and sig["cross_block_max"] < 1e-8
    assert all(b["dimension"] == 22 and b["indefinite"] for b in sig["blocks"].values())


def test_constraints_smallness_is_precondition(tmp_path):
    code, _ = run(tmp_path, "constraints", "--kmax", 1, "--epsilon", "1")
    assert code == cli.EXIT_PRECONDITION


def test_ode_flrw(tmp_path):
    code, out = run(tmp_path, "ode", "--c", "1,1,1", "--init", CONFIGS / "ode_flrw.json", "--tau", "0:4",
                    "--samples", 41)
    assert code == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0].split(",")[:4] == ["tau", "t", "log_A", "e1"] and len(lines) == 42
    assert load(out / "summary.json")["max_mc_norm"] < 1e-8


def test_ode_kasner_fit(tmp_path):
    code, out = run(tmp_path, "ode", "--init", CONFIGS / "ode_kasner.json", "--tau", "0:40")
    fit = load(out / "summary.json")["kasner_exponents"]
    assert np.allclose(fit["P"], [1 / 6, 1 / 3, 1 / 2], atol=1e-3)


def test_ode_constraint_violation(tmp_path):
    init = write(tmp_path, "bad.json", {"state": {"e1": 1, "e2": 1, "e3": 1, "a1": 1, "a2": 1, "a3": 1,
                                                  "b1": 0, "b2": 0, "b3": 0, "phi": 5}})
    code, _ = run(tmp_path, "ode", "--init", init, "--tau", "0:1")
    assert code == cli.EXIT_PRECONDITION


def test_evolve_decay_and_state_file(tmp_path):
    code, out = run(tmp_path, "evolve", "--system", CONFIGS / "decay.json", "--grid", 32, "--tau", "16:0",
                    "--order", 1, "--save-every", 10)
    assert code == 0
    data = np.genfromtxt(out / "history.csv", delimiter=",", names=True)
    assert set(data.dtype.names) == {"tau", "sup_u", "E_0", "E_1"}
    m = (data["tau"] >= 1) & (data["tau"] <= 10)
    rate, _ = H.fit_rate(data["tau"][m], data["sup_u"][m])
    assert rate >= 2.7
    u, tau = cli.read_state(out / "final_state.bin")
    assert u.shape == (2, 32) and tau == 0.0
    assert np.max(np.abs(u)) == pytest.approx(data["sup_u"][-1], rel=0, abs=0)


def test_evolve_phi_sector(tmp_path):
    code, out = run(tmp_path, "evolve", "--system", CONFIGS / "phi_kasner.json", "--grid", 16, "--tau", "0:0.5")
    data = np.genfromtxt(out / "history.csv", delimiter=",", names=True)
    assert code == 0 and "uprime_norm" in data.dtype.names
    # data with only a u_0 component satisfy the constraints, which then stay at discretization level
    assert np.max(data["uprime_norm"]) < 1e-3


def test_evolve_backward_without_cutoff(tmp_path):
    cfg = load(CONFIGS / "decay.json")
    del cfg["cutoff"]
    code, _ = run(tmp_path, "evolve", "--system", write(tmp_path, "s.json", cfg), "--grid", 16, "--tau", "5:0")
    assert code == cli.EXIT_PRECONDITION


def test_evolve_numerical_failure(tmp_path):
    cfg = {"type": "square", "n": 1, "a": [[[1]], [[0]]], "L": [[-0.1]], "A": [[[[1]]], [[[0]]]],
            "constants": {"q": 1.1, "Q": 1.3, "z": 0.1, "Z": 1.0},
            "data": {"modes": [{"component": 0, "k": [0], "kind": "cos", "amplitude": 0.2}]}}
    code, out = run(tmp_path, "evolve", "--system", write(tmp_path, "s.json", cfg), "--grid", 8,
                    "--tau", "0:30", "--dt", "0.05")
    assert code == cli.EXIT_NUMERICAL
    assert load(out / "manifest.json")["exit_status"] == 4


def test_gauge_verify_phi(tmp_path):
    code, out = run(tmp_path, "gauge-verify")
    rep = load(out / "report.json")
    assert code == 0 and rep["ok"] and rep["ranks"] == [0, 4, 3, 1, 0]


def test_gauge_verify_file_with_violation(tmp_path):
    code, out = run(tmp_path, "gauge-verify", name="a")
    g = load(out / "gauge.json")
    g["R"]["2"][0][0] = "1/7"
    code, out = run(tmp_path, "gauge-verify", "--gauge", write(tmp_path, "g.json", g), name="b")
    assert code == cli.EXIT_PRECONDITION
    assert any("S_1 R_2" in v for v in load(out / "report.json")["violations"])


def test_gauge_search_failure_is_a_result(tmp_path):
    code, out = run(tmp_path, "gauge-verify", "--search", "E", "--budget", 1)
    rep = load(out / "report.json")
    assert code == 0 and rep["found"] is False and "budget" in rep["message"]


# -- configuration errors and reproducibility ------------------------------------------------


@pytest.mark.parametrize("argv", [
    ["nonsense"],
    ["mc-check"],
    ["ode", "--init", "missing.json"],
    ["evolve", "--system", "CONFIG", "--tau", "abc"],
    ["constraints", "--p", "1,2"],
    ["formal-solve", "--tuple", "BADJSON"],
])
def test_invalid_configuration(tmp_path, argv):
    bad = write(tmp_path, "bad.json", "{not json")
    argv = [str(CONFIGS / "decay.json") if a == "CONFIG" else str(bad) if a == "BADJSON" else a for a in argv]
    assert cli.main(argv + ["--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_invalid_constants(tmp_path):
    cfg = load(CONFIGS / "decay.json")
    cfg["constants"]["z"] = 5.0  # Q z > Z
    code, _ = run(tmp_path, "evolve", "--system", write(tmp_path, "s.json", cfg), "--tau", "16:0")
    assert code == cli.EXIT_CONFIG


def test_rerun_is_byte_identical(tmp_path):
    argv = ["evolve", "--system", CONFIGS / "decay.json", "--grid", 16, "--tau", "16:0", "--save-every", 20]
    _, out = run(tmp_path, *argv)
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    _, out = run(tmp_path, *argv)
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second
    man = json.loads(first["manifest.json"])
    assert set(man["outputs"]) == {"history.csv", "final_state.bin", "run.json"}
    assert man["config"]["grid"] == 16 and man["versions"]["numpy"] == np.__version__
    assert str(CONFIGS / "decay.json") in man["inputs"]


def test_figures_written(tmp_path):
    pytest.importorskip("matplotlib")
    code, out = run(tmp_path, "ode", "--init", CONFIGS / "ode_kasner.json", "--tau", "0:5", "--figures")
    assert code == 0 and (out / "scale_factors.png").stat().st_size > 0
    assert "scale_factors.png" in load(out / "manifest.json")["figures"]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "mcgla.cli", "mc-check", "--element", str(CONFIGS / "kasner.json"),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0 and "exact zero" in res.stdout
