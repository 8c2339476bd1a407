import io
import subprocess
import sys
from importlib import resources

import pytest

from nablavar.cli import run
from nablavar.report import dumps, loads

PROBLEMS = resources.files("nablavar") / "problems"
EX1_3PT = str(PROBLEMS / "ex1_3pt.prob")
EX2 = str(PROBLEMS / "ex2.prob")


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_eval_product_example():
    code, out, _ = call("eval", "--problem", EX1_3PT, "--candidate=-t^2 - 2*t")
    assert code == 0
    assert out == "F1 = 1.25\nF2 = 0.125\nH(F) = 0.15625\n"


def test_residual_check_exit_codes():
    code, out, _ = call("residual", "--problem", EX2, "--candidate=-2*t", "--check", "--tol", "1e-9")
    assert code == 0 and out.endswith("PASS\n")
    code, out, _ = call("residual", "--problem", EX2, "--values", "4,3.1,1.4,0", "--check")
    assert code == 4 and out.endswith("FAIL\n")


def test_usage_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.prob"
    bad.write_text(open(EX1_3PT).read().replace('H = "z1*z2"', 'H = "z3"'))
    code, _, err = call("eval", "--problem", str(bad), "--candidate", "t")
    assert code == 2 and "z3" in err and "bad.prob:12" in err
    code, _, err = call("eval", "--problem", EX1_3PT)
    assert code == 2 and "no candidate" in err
    code, _, _ = call("eval", "--problem", EX1_3PT, "--values", "1,2")
    assert code == 2
    with pytest.raises(SystemExit) as info:
        call("scan1d", "--problem", EX1_3PT, "--range", "3:1")
    assert info.value.code == 2


def test_domain_error_exit_3():
    code, _, err = call("eval", "--problem", EX2, "--candidate", "ln(t)")
    assert code == 3 and "domain error" in err


def test_solve_example2():
    code, out, _ = call("solve", "--problem", EX2, "--output", "machine")
    doc = loads(out)
    assert code == 0 and doc["passed"] is True
    assert doc["results"]["status"] == "converged"
    assert doc["results"]["x"] == pytest.approx([4, 3, 1.4, 0], abs=1e-12)


def test_solve_without_stationary_point_fails_verification():
    code, out, _ = call("solve", "--problem", EX1_3PT)
    assert code == 4 and "no-stationary-point" in out


def test_scan1d_negative_range():
    code, out, _ = call("scan1d", "--problem", EX1_3PT, "--range=-10:10")
    assert code == 0
    assert "dL/dm = -6m^2 + 8m - 3, discriminant -8" in out and "no stationary point" in out


def test_solve_q():
    code, out, _ = call("solve-q", "--eq", "48*q2^2 + q1^2 - 48*q2^2*q1", "--eq", "12*q2 - q1 - 24*q2^2",
                        "--guard", "q2", "--output", "machine")
    res = loads(out)["results"]
    assert code == 0 and res["verdict"] == "roots-found"
    assert res["roots"][0]["q"] == pytest.approx([4 / 3, 1 / 3], abs=1e-15)
    assert res["excluded"][0]["guard"] == "q2 != 0"


def test_dualize():
    code, out, _ = call("dualize", "--problem", EX2)
    assert code == 0
    assert "points = 0, 0.7, 1.5, 2" in out
    assert 'integrand = "(-v)^2"' in out


def test_reproduce_ex2():
    code, out, _ = call("reproduce", "ex2")
    assert code == 0 and out.endswith("PASS\n")
    assert "Q = 2," in out and "max |EL residual| = 0" in out


def test_reproduce_ex1_3pt():
    code, out, _ = call("reproduce", "ex1-3pt")
    assert code == 0 and out.endswith("PASS\n")
    assert "no stationary point; dL/dm = -6m^2 + 8m - 3, discriminant -8" in out


def test_check_duality_random_1000():
    code, out, _ = call("check-duality", "--random", "1000", "--seed", "7", "--output", "machine")
    doc = loads(out)
    assert code == 0 and doc["passed"] is True
    for name in ("derivative", "integral"):
        assert doc["results"][name]["max_discrepancy"] <= 1e-12


def test_reproduce_is_byte_identical_and_round_trips():
    first = call("reproduce", "ex2", "--output", "machine", "--seed", "3")[1]
    second = call("reproduce", "ex2", "--output", "machine", "--seed", "3")[1]
    assert first == second
    assert dumps(loads(first)) == first
    assert "wall_time" not in loads(first)
    assert "wall_time" in loads(call("reproduce", "ex1-3pt", "--output", "machine", "--timing")[1])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nablavar", "reproduce", "ex1-3pt"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.endswith("PASS\n")
