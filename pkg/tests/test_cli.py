import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from rlqr import instances, reglqr
from rlqr.cli import main

SCALAR = '{"format": 1, "delta": 1, "c0": [3], "QN": [[2]], "qN": [1], "stages": []}'


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def instance(tmp_path, capsys):
    path = tmp_path / "inst.json"
    assert run(capsys, "gen", "--n", "6", "--nx", "3", "--nu", "2", "--delta", "0.01",
               "--seed", "7", "--output", str(path))[0] == 0
    return path


class TestSolveLqr:
    def test_scalar_instance(self, tmp_path, capsys):
        path = tmp_path / "s.json"
        path.write_text(SCALAR)
        code, out, _ = run(capsys, "solve-lqr", "--input", str(path))
        assert code == 0
        doc = json.loads(out)
        assert doc["x"][0][0] == pytest.approx(2.0 / 3.0, rel=1e-15)
        assert doc["y"][0][0] == pytest.approx(7.0 / 3.0, rel=1e-15)
        assert doc["u"] == [] and doc["oracle_checked"] is False and doc["format"] == 1

    def test_delta_override(self, tmp_path, capsys):
        path = tmp_path / "s.json"
        path.write_text(SCALAR)
        doc = json.loads(run(capsys, "solve-lqr", "--input", str(path), "--delta", "0")[1])
        assert doc["x"] == [[3.0]] and doc["y"] == [[7.0]]
        assert run(capsys, "solve-lqr", "--input", str(path), "--delta", "-1")[0] == 2

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"delta": 1, "c0": [3,, 1]}')
        code, _, err = run(capsys, "solve-lqr", "--input", str(path))
        assert code == 2
        assert "byte offset 22" in err  # the second comma

    def test_byte_offset_counts_utf8(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"é": }', encoding="utf-8")
        assert "byte offset 7" in run(capsys, "solve-lqr", "--input", str(path))[2]

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "solve-lqr", "--input", str(tmp_path / "nope.json"))[0] == 2

    def test_dimension_error_names_stage(self, instance, capsys):
        doc = json.loads(instance.read_text())
        doc["stages"][4]["B"] = [[1.0]]
        instance.write_text(json.dumps(doc))
        code, _, err = run(capsys, "solve-lqr", "--input", str(instance))
        assert code == 2 and "stage 4" in err

    def test_check(self, instance, tmp_path, capsys):
        out = tmp_path / "sol.json"
        code, _, err = run(capsys, "solve-lqr", "--input", str(instance), "--check",
                           "--output", str(out))
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["oracle_checked"] is True
        assert doc["oracle_discrepancy"] <= 1e-8
        assert "oracle discrepancy" in err
        assert doc["kkt_residual"] <= 1e-10

    def test_solution_roundtrip(self, instance, tmp_path, capsys):
        out = tmp_path / "sol.json"
        run(capsys, "solve-lqr", "--input", str(instance), "--output", str(out))
        p = instances.load_problem(instance.read_text())
        sol = reglqr.solve(p)
        back = instances.solution_from_dict(json.loads(out.read_text()))
        for a, b in zip(sol.x + sol.u + sol.y, back.x + back.u + back.y):
            np.testing.assert_array_equal(a, b)

    def test_csv(self, instance, tmp_path, capsys):
        path = tmp_path / "traj.csv"
        run(capsys, "solve-lqr", "--input", str(instance), "--csv", str(path))
        rows = list(csv.reader(io.StringIO(path.read_text())))
        assert rows[0] == ["stage", "x[0]", "x[1]", "x[2]", "u[0]", "u[1]", "y[0]", "y[1]", "y[2]"]
        assert len(rows) == 8
        assert rows[-1][4:6] == ["", ""]
        sol = reglqr.solve(instances.load_problem(instance.read_text()))
        assert [float(v) for v in rows[3][1:4]] == sol.x[2].tolist()


class TestGen:
    def test_deterministic(self, tmp_path, capsys):
        args = ["gen", "--n", "5", "--nx", "3", "--nu", "2", "--delta", "0.1", "--seed", "7"]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(capsys, *args, "--output", str(a))
        run(capsys, *args, "--output", str(b))
        assert a.read_bytes() == b.read_bytes()
        assert run(capsys, *args)[1].encode() == a.read_bytes()

    def test_definiteness(self, instance):
        p = instances.load_problem(instance.read_text())
        for st in p.stages:
            assert np.linalg.eigvalsh(st.Q).min() >= -1e-12
            assert np.linalg.eigvalsh(st.R).min() >= 1 - 1e-12
            assert np.linalg.eigvalsh(st.hessian).min() >= -1e-12
        assert np.linalg.eigvalsh(p.Q_N).min() >= -1e-12

    def test_roundtrip_bits(self, instance):
        p = instances.load_problem(instance.read_text())
        assert instances.dumps(instances.problem_to_dict(p)) == instance.read_text()

    def test_invalid_dimensions(self, capsys):
        assert run(capsys, "gen", "--n", "2", "--nx", "0", "--nu", "1")[0] == 2


class TestSolveOcp:
    def test_double_integrator_defaults(self, tmp_path, capsys):
        path = tmp_path / "traj.csv"
        code, out, err = run(capsys, "solve-ocp", "--problem", "double-integrator", "--csv", str(path))
        assert code == 0
        doc = json.loads(out)
        assert doc["status"] == "Converged" and doc["kkt_residual"] <= 1e-6
        assert doc["horizon"] == 20
        assert len(doc["history"]) == doc["iterations"]
        assert {"merit", "alpha_primal", "alpha_dual"} <= set(doc["history"][0])
        assert len(path.read_text().splitlines()) == 22
        assert "Converged" in err

    def test_unicycle(self, capsys):
        code, out, _ = run(capsys, "solve-ocp", "--problem", "unicycle")
        assert code == 0 and json.loads(out)["kkt_residual"] <= 1e-6

    def test_max_iters(self, capsys):
        code, out, _ = run(capsys, "solve-ocp", "--problem", "double-integrator", "--max-iters", "1")
        assert code == 3
        assert json.loads(out)["status"] == "MaxIters"

    def test_tolerance_monotone_work(self, capsys):
        loose = json.loads(run(capsys, "solve-ocp", "--problem", "double-integrator", "--tol", "1e-2")[1])
        tight = json.loads(run(capsys, "solve-ocp", "--problem", "double-integrator", "--tol", "1e-8")[1])
        assert loose["iterations"] < tight["iterations"]

    def test_unknown_problem(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["solve-ocp", "--problem", "pendulum"])
        assert exc.value.code == 2

    def test_bad_x0(self, capsys):
        assert run(capsys, "solve-ocp", "--problem", "double-integrator", "--x0", "1,a")[0] == 2
        assert run(capsys, "solve-ocp", "--problem", "double-integrator", "--x0", "1,2,3")[0] == 2


def test_module_entry_point(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(SCALAR)
    proc = subprocess.run([sys.executable, "-m", "rlqr", "solve-lqr", "--input", str(path), "--check"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["oracle_checked"] is True
