import json
import sys
from pathlib import Path

import pytest

from pipebits.cli import main
from pipebits.refsolver import main as refsolver_main


def run(argv):
    return main(argv)


def test_analyze_interval_writes_reports(tmp_path, capsys):
    assert run(["analyze", "--benchmark", "hcd", "--method", "interval",
                "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "alpha^interval" in out
    doc = json.loads((tmp_path / "hcd.report.json").read_text())
    det = [s for s in doc["stages"] if s["name"] == "det"][0]
    assert det["alpha"]["interval"] == 33
    assert (tmp_path / "hcd.report.txt").exists()
    assert (tmp_path / "hcd.report.csv").exists()


def test_analyze_multiple_methods(tmp_path, capsys):
    assert run(["analyze", "--benchmark", "usm", "--method", "interval,affine,smt",
                "--no-solver", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "usm.report.json").read_text())
    sharpen = [s for s in doc["stages"] if s["name"] == "sharpen"][0]
    assert sharpen["alpha"] == {"affine": 10, "interval": 10, "smt": 10}


def test_analyze_pipeline_file(tmp_path, capsys):
    golden = Path(__file__).parent / "golden" / "dus.json"
    assert run(["analyze", "--pipeline", str(golden), "--method", "interval",
                "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "dus.report.json").read_text())
    assert all(s["alpha"]["interval"] == 8 for s in doc["stages"])


def test_analyze_reports_are_deterministic(tmp_path):
    run(["analyze", "--benchmark", "of:2", "--method", "interval,smt",
         "--no-solver", "--out", str(tmp_path / "a")])
    run(["analyze", "--benchmark", "of:2", "--method", "interval,smt",
         "--no-solver", "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "of2.report.json").read_bytes()
    b = (tmp_path / "b" / "of2.report.json").read_bytes()
    assert a == b


def test_usage_error_is_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        run(["search-beta", "--benchmark", "dus"])
    assert info.value.code == 1


def test_both_pipeline_sources_rejected(capsys):
    with pytest.raises(SystemExit) as info:
        run(["analyze", "--benchmark", "hcd", "--pipeline", "x.json"])
    assert info.value.code == 1


def test_division_through_zero_is_exit_2(tmp_path, capsys):
    doc = {"name": "dz", "params": {"R": 4, "C": 4},
           "stages": [
               {"name": "Img", "kind": "input", "range": [0, 255]},
               {"name": "z", "kind": "pointwise",
                "expr": {"op": "div",
                         "lhs": {"op": "const", "value": 1},
                         "rhs": {"op": "ref", "stage": "Img", "di": 0, "dj": 0}}},
           ]}
    f = tmp_path / "dz.json"
    f.write_text(json.dumps(doc))
    assert run(["analyze", "--pipeline", str(f), "--method", "interval",
                "--out", str(tmp_path)]) == 2
    assert "division through zero" in capsys.readouterr().err


def test_solver_failure_without_fallback_is_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.py"
    bad.write_text("import sys; sys.exit(7)\n")
    code = run(["analyze", "--benchmark", "usm", "--method", "smt",
                "--solver", "%s %s" % (sys.executable, bad),
                "--on-solver-error", "fail", "--out", str(tmp_path)])
    assert code == 3


def test_solver_failure_with_fallback_succeeds(tmp_path, capsys):
    bad = tmp_path / "bad.py"
    bad.write_text("import sys; sys.exit(7)\n")
    code = run(["analyze", "--benchmark", "usm", "--method", "smt",
                "--solver", "%s %s" % (sys.executable, bad),
                "--on-solver-error", "bnb", "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "usm.report.json").read_text())
    flagged = [s for s in doc["stages"] if s["flags"]]
    assert flagged


def test_profile_outputs(tmp_path, capsys):
    assert run(["profile", "--benchmark", "usm", "--rows", "16", "--cols", "16",
                "--synthesize", "2", "--seed", "5", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "usm.profile.json").read_text())
    assert doc["stages"]["Img"]["alpha_max"] == 8
    hist = (tmp_path / "usm.hist.csv").read_text().splitlines()
    assert hist[0] == "stage,bits,fraction"
    assert len(hist) > 5


def test_search_beta_dus_cli(tmp_path, capsys):
    assert run(["search-beta", "--benchmark", "dus", "--rows", "24", "--cols", "24",
                "--metric", "psnr", "--target", "inf", "--synthesize", "2",
                "--seed", "7", "--beta-max", "12", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "dus.betas.json").read_text())
    assert doc["uniform_beta"] == 10
    assert max(doc["betas"].values()) <= 12


def test_simulate_writes_outputs(tmp_path, capsys):
    assert run(["simulate", "--benchmark", "dus", "--rows", "16", "--cols", "16",
                "--synthesize", "1", "--beta", "6", "--format", "json",
                "--out", str(tmp_path)]) == 0
    assert (tmp_path / "dus.U_y.json").exists()
    out = capsys.readouterr().out
    assert "total saturations: 0" in out


def test_emit_smt_pipe(tmp_path, capsys):
    assert run(["emit-smt", "--benchmark", "of:1", "--stage", "common_x",
                "--side", "upper", "--bound", "1"]) == 0
    script = capsys.readouterr().out
    assert script.startswith("(set-logic QF_NRA)")
    assert "(assert (> common_x 1))" in script


def test_emit_smt_rejects_stencil_stage(capsys):
    assert run(["emit-smt", "--benchmark", "hcd", "--stage", "I_x",
                "--side", "upper", "--bound", "1"]) == 1


def test_report_rerender(tmp_path, capsys):
    run(["analyze", "--benchmark", "dus", "--method", "interval",
         "--out", str(tmp_path)])
    capsys.readouterr()
    assert run(["report", "--input", str(tmp_path / "dus.report.json"),
                "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("method,stage,lo,hi,alpha,beta")


def test_benchmark_export_round_trips(tmp_path, capsys):
    out = tmp_path / "hcd.json"
    assert run(["benchmark", "export", "--benchmark", "hcd",
                "--out", str(out)]) == 0
    golden = Path(__file__).parent / "golden" / "hcd.json"
    assert out.read_text() == golden.read_text()


def test_refsolver_cli_protocol(tmp_path, capsys, monkeypatch):
    import io
    script = ("(set-logic QF_NRA)\n(declare-const x Real)\n"
              "(assert (>= x 0))\n(assert (<= x 10))\n"
              "(assert (= y (* x x)))\n(declare-const y Real)\n"
              "(assert (> y 200))\n(check-sat)\n")
    monkeypatch.setattr("sys.stdin", io.StringIO(script))
    assert refsolver_main([]) == 0
    assert capsys.readouterr().out.split()[0] == "unsat"
