import json
from pathlib import Path

import pytest

import rbsos
from rbsos.cli import (EXIT_HYPOTHESIS, EXIT_OK, EXIT_PARSE, main)

FIXTURES = Path(rbsos.__file__).parent / "fixtures"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _out, err = run(capsys, "solve", bad)
    assert code == EXIT_PARSE
    assert "bad.json:1:" in err


def test_missing_file_exit_code(capsys):
    code, _out, _err = run(capsys, "solve", "/nonexistent/p.json")
    assert code == EXIT_PARSE


def test_solve_reports_value(capsys):
    code, out, _ = run(capsys, "solve", FIXTURES / "ep3.json",
                       "--kmin", "4", "--kmax", "4")
    assert code == EXIT_OK
    assert "k= 4" in out
    assert "-2.000" in out


def test_solve_json_report(capsys):
    code, out, _ = run(capsys, "solve", FIXTURES / "ep3.json",
                       "--kmin", "4", "--kmax", "4", "--json")
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["command"] == "solve"
    assert report["status"] == "ok"
    (entry,) = [v for v in report["values"] if v["k"] == 4]
    assert entry["val"] == pytest.approx(-2.0, abs=1e-3)


def test_hypothesis_gate_and_force(capsys):
    code, out, _err = run(capsys, "solve", FIXTURES / "ep1.json",
                          "--kmin", "2", "--kmax", "2")
    assert code == EXIT_HYPOTHESIS
    assert "LSC violated" in out
    code, out, _ = run(capsys, "solve", FIXTURES / "ep1.json",
                       "--kmin", "2", "--kmax", "2", "--force")
    assert code == EXIT_OK
    assert "warning: LSC violated" in out


def test_check_farkas_no_certificate(capsys):
    code, out, _ = run(capsys, "check-farkas", FIXTURES / "example23_farkas.json",
                       "--samples", "200")
    assert code == EXIT_OK
    assert "certificate: none" in out
    assert "implication: holds (sampled)" in out


def test_check_farkas_certificate_found(capsys):
    code, out, _ = run(capsys, "check-farkas", FIXTURES / "trivial_farkas.json")
    assert code == EXIT_OK
    assert "certificate" in out
    assert "verification: pass" in out


def test_check_feasible(capsys):
    code, out, _ = run(capsys, "check-feasible", FIXTURES / "ep2.json",
                       "--x", "0", "--y", "0")
    assert code == EXIT_OK
    assert "robust feasible: True" in out
    code, out, _ = run(capsys, "check-feasible", FIXTURES / "ep2.json",
                       "--x", "1", "--y", "0")
    assert code == EXIT_OK
    assert "robust feasible: False" in out


def test_check_lower(capsys):
    code, out, _ = run(capsys, "check-lower", FIXTURES / "ep2.json",
                       "--x", "-1", "--y", "0")
    assert code == EXIT_OK
    assert "lower-level robust solution: True" in out
    code, out, _ = run(capsys, "check-lower", FIXTURES / "ep2.json",
                       "--x", "0", "--y", "-1")
    assert "lower-level robust solution: False" in out


def test_certify_not_found_is_reported(capsys):
    code, out, _ = run(capsys, "certify", FIXTURES / "ep3.json",
                       "--x", "0", "--y", "0", "--k", "4")
    assert code == EXIT_OK
    assert "none" in out


def test_dump_sdp_writes_artifacts(tmp_path, capsys):
    code, _out, _ = run(capsys, "solve", FIXTURES / "ep3.json",
                        "--kmin", "4", "--kmax", "4",
                        "--dump-sdp", tmp_path)
    assert code == EXIT_OK
    assert (tmp_path / "level_4.sdp").exists()
    cert = json.loads((tmp_path / "level_4.cert.json").read_text())
    assert cert["k"] == 4
