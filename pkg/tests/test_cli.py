import json

import pytest
from click.testing import CliRunner

from torikam.cli import main
from torikam.cohomology import random_coboundary
from torikam.fourier import single_mode, to_json
from torikam.intmat import CAT


@pytest.fixture
def runner():
    return CliRunner()


def test_version_and_help(runner):
    assert runner.invoke(main, ["--version"]).exit_code == 0
    res = runner.invoke(main, ["--help"])
    assert res.exit_code == 0 and "verify" in res.output


def test_analyze_matrix(runner, tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps([[2, 1], [1, 1]]))
    res = runner.invoke(main, ["analyze", "--input", str(p)])
    assert res.exit_code == 0
    out = json.loads(res.output)
    assert out["generators"]["A"]["ergodic"] and out["generators"]["A"]["char_poly"] == "x^2 - 3x + 1"


def test_analyze_input_errors(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    res = runner.invoke(main, ["analyze", "--input", str(bad)])
    assert res.exit_code == 2 and "line 1" in res.output
    sing = tmp_path / "sing.json"
    sing.write_text(json.dumps([[2, 0], [0, 1]]))
    assert runner.invoke(main, ["analyze", "--input", str(sing)]).exit_code == 2
    assert runner.invoke(main, ["analyze", "--input", str(tmp_path / "missing.json")]).exit_code == 2
    assert runner.invoke(main, ["analyze"]).exit_code == 2


def test_solve_and_obstruction(runner, tmp_path):
    theta, _ = random_coboundary(1, CAT, CAT, exact=True)
    p = tmp_path / "in.json"
    p.write_text(json.dumps({"theta": to_json(theta), "p": CAT.to_json(), "q": CAT.to_json()}))
    res = runner.invoke(main, ["solve", "--input", str(p)])
    assert res.exit_code == 0 and json.loads(res.output)["status"] == "solved"
    bad = theta + single_mode((1, 0), [1, 0], exact=True)
    p.write_text(json.dumps({"theta": to_json(bad), "p": CAT.to_json(), "q": CAT.to_json()}))
    res = runner.invoke(main, ["solve", "--input", str(p)])
    assert res.exit_code == 1 and json.loads(res.output)["status"] == "obstructed"


def test_search_degree_two_is_empty_and_odd_degree_rejected(runner):
    res = runner.invoke(main, ["search", "--degree", "2", "--bound", "3"])
    assert res.exit_code == 0 and json.loads(res.output)["results"] == []
    assert runner.invoke(main, ["search", "--degree", "3"]).exit_code == 2


def test_verify_suite_exit_codes(runner, tmp_path):
    out = tmp_path / "rep.json"
    res = runner.invoke(main, ["verify", "displacement", "--output", str(out)])
    assert res.exit_code == 0 and "PASS" in res.output
    assert json.loads(out.read_text())["passed"]
    inp = tmp_path / "pair.json"
    inp.write_text(json.dumps({"a": [[2, 1], [1, 1]], "b": [[5, 3], [3, 2]]}))
    res = runner.invoke(main, ["verify", "growth", "--input", str(inp)])
    assert res.exit_code == 1 and "FAIL" in res.output
    assert runner.invoke(main, ["verify", "nonsense"]).exit_code == 2


def test_kam_t2_run_is_reproducible(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"family": "t2", "eps": 1e-3, "trunc_radius": 16, "max_iters": 6, "target": 1e-13}))
    outs = []
    for i in range(2):
        d = tmp_path / f"o{i}"
        res = runner.invoke(main, ["kam", "--input", str(cfg), "--output", str(d)])
        assert res.exit_code == 0, res.output
        assert "status=converged" in res.output
        outs.append((d / "kam.csv").read_text().splitlines())
        conj = json.loads((d / "conjugacy.json").read_text())
        assert conj["propagation"]["precondition_ok"]
        assert json.loads((d / "config.json").read_text())["schema"] == "torikam.run-config/1"
    assert outs[0][0] == outs[1][0] and outs[0][2:] == outs[1][2:]


def test_kam_gate_exit_code(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"family": "t2", "eps": 5e-2, "trunc_radius": 6}))
    res = runner.invoke(main, ["kam", "--input", str(cfg), "--output", str(tmp_path / "o")])
    assert res.exit_code == 1


def test_verify_empty_input_is_a_usage_error(runner, tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    res = runner.invoke(main, ["verify", "growth", "--input", str(empty)])
    assert res.exit_code == 2 and "empty" in res.output


def test_verify_displacement_below_threshold_labels_failures(runner, tmp_path):
    # diag(cat, cat) with a large shear that does not commute with it: n = 1 is too small
    shear = [[1, 0, 30, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
    a = [[2, 1, 0, 0], [1, 1, 0, 0], [0, 0, 2, 1], [0, 0, 1, 1]]
    inp = tmp_path / "disp.json"
    for n, code in ((1, 1), (2, 0)):
        inp.write_text(json.dumps({"a": a, "xs": {"X": shear}, "n": n}))
        res = runner.invoke(main, ["verify", "displacement", "--input", str(inp)])
        assert res.exit_code == code
    inp.write_text(json.dumps({"a": a, "xs": {"X": shear}, "n": 1}))
    res = runner.invoke(main, ["verify", "displacement", "--input", str(inp)])
    assert "violation=" in res.output and "below N1 threshold" in res.output
