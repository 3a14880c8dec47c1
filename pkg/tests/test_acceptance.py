"""Acceptance suite: one test per criterion, each reported as a PASS/FAIL line in the summary."""
import json
import time

import numpy as np

from helpers import random_ocp, random_ocp_point
from rlqr import models, oracle, reglqr
from rlqr.cli import main
from rlqr.dense import chol_factor, chol_solve
from rlqr.ipm import DenseProblem, Status, ipm_solve, merit_terms
from rlqr.ocp import OcpProblem, solve_ocp

DELTAS = [1e-8, 1e-4, 1e-1, 1.0]


def test_1_oracle_equivalence(criterion):
    with criterion("1 oracle equivalence") as c:
        rng = np.random.default_rng(1001)
        worst = 0.0
        t0 = time.perf_counter()
        for k in range(200):
            p = reglqr.random_problem(rng, int(rng.integers(1, 11)), int(rng.integers(1, 5)),
                                      int(rng.integers(1, 5)), DELTAS[k % 4])
            worst = max(worst, oracle.solution_discrepancy(reglqr.solve(p), oracle.oracle_solve_reglqr(p)))
        elapsed = time.perf_counter() - t0
        c.detail = f"max rel err {worst:.2e} (<= 1e-8), {elapsed:.2f} s (<= 10 s)"
        assert worst <= 1e-8
        assert elapsed <= 10.0


def test_2_standard_lqr_recovery(criterion):
    with criterion("2 standard LQR recovery") as c:
        rng = np.random.default_rng(1002)
        roll, cont = 0.0, 0.0
        for _ in range(50):
            p = reglqr.random_problem(rng, int(rng.integers(1, 11)), int(rng.integers(1, 5)),
                                      int(rng.integers(1, 5)), 0.0)
            a = reglqr.solve(p)
            roll = max(roll, float(np.abs(a.x[0] - p.c0).max()))
            for i, st in enumerate(p.stages):
                roll = max(roll, float(np.abs(a.x[i + 1] - (st.A @ a.x[i] + st.B @ a.u[i] + st.c_next)).max()))
            b = reglqr.solve(p.with_delta(1e-10))
            for u, v in zip(a.x + a.u + a.y, b.x + b.u + b.y):
                cont = max(cont, float(np.abs(u - v).max()))
        c.detail = f"rollout err {roll:.2e} (<= 1e-12), |sol(1e-10) - sol(0)| {cont:.2e} (<= 1e-6)"
        assert roll <= 1e-12
        assert cont <= 1e-6


def test_3_shifted_dual_equivalence(criterion):
    with criterion("3 shifted-dual equivalence") as c:
        rng = np.random.default_rng(1003)
        worst = 0.0
        for _ in range(10):
            ocp = random_ocp(rng, N=int(rng.integers(1, 4)))
            for _ in range(20):
                prob, it = random_ocp_point(rng, ocp, 10 ** rng.uniform(1, 4))
                worst = max(worst, oracle.check_lemma(prob.evaluate(it.x, it.y, it.z), it))
        c.detail = f"max discrepancy {worst:.2e} (<= 1e-9) over 200 iterates"
        assert worst <= 1e-9


def _fd_slope(adapter, it, d):
    """Central difference of the augmented merit along (dx, ds), duals and parameters fixed."""
    scale = max(1.0, float(np.abs(np.concatenate([d.dx, d.ds])).max()))
    h = 1e-6 / scale
    if d.ds.size:
        neg = d.ds < 0
        if np.any(neg):
            h = min(h, 0.5 * float(np.min(it.s[neg] / -d.ds[neg])))

    def phi(t):
        f, cv, gv = adapter.values(it.x + t * d.dx)
        return merit_terms(f, cv, gv, it.s + t * d.ds, it.y, it.z, it.mu, it.eta)

    return (phi(h) - phi(-h)) / (2 * h)


def _descent_run(adapter, settings=None):
    stats = {"iters": 0, "worst_ratio": 0.0, "max_slope": -np.inf}

    def cb(k, ev, it, d, slope):
        stats["iters"] += 1
        if d.primal_norm() > 1e-12:
            assert slope < 0, f"iteration {k}: slope {slope}"
            stats["max_slope"] = max(stats["max_slope"], slope)
        fd = _fd_slope(adapter, it, d)
        tol = max(1e-6, 1e-4 * abs(slope))
        stats["worst_ratio"] = max(stats["worst_ratio"], abs(fd - slope) / tol)
        assert abs(fd - slope) <= tol, f"iteration {k}: closed form {slope}, fd {fd}"

    _, rep = ipm_solve(adapter, settings, callback=cb)
    return stats, rep


def scalar_bound():
    """min x^2 s.t. x >= 1."""
    return DenseProblem(x0=[3.0], f=lambda x: x[0] ** 2, grad=lambda x: 2 * x,
                        hess=lambda x, y, z: [[2.0]], g=lambda x: np.array([1.0 - x[0]]),
                        jac_g=lambda x: np.array([[-1.0]]))


def scalar_projection():
    """min 0.5 |x|^2 s.t. x_1 = 1."""
    return DenseProblem(x0=np.zeros(3), f=lambda x: 0.5 * x @ x, grad=lambda x: x.copy(),
                        hess=lambda x, y, z: np.eye(3), c=lambda x: np.array([x[0] - 1.0]),
                        jac_c=lambda x: np.array([[1.0, 0.0, 0.0]]))


def test_4_descent_guarantee(criterion):
    with criterion("4 descent guarantee") as c:
        uni = models.unicycle()
        runs = {
            "double-integrator": OcpProblem(models.double_integrator()),
            "unicycle (zero start)": OcpProblem(uni),
            "unicycle (rollout start)": OcpProblem(uni, *models.unicycle_initial_guess(uni)),
            "scalar bound": scalar_bound(),
            "scalar projection": scalar_projection(),
        }
        total, worst = 0, 0.0
        for name, adapter in runs.items():
            stats, rep = _descent_run(adapter)
            assert rep.status == Status.CONVERGED, name
            total += stats["iters"]
            worst = max(worst, stats["worst_ratio"])
        c.detail = f"{total} iterations over {len(runs)} solves, worst |fd - D| / tol = {worst:.2e}"


def test_5_elimination_chain(criterion):
    with criterion("5 elimination chain") as c:
        rng = np.random.default_rng(1005)
        worst = 0.0
        for k in range(60):
            ocp = random_ocp(rng, N=int(rng.integers(1, 6)))
            prob, it = random_ocp_point(rng, ocp, [1e2, 1e4, 1e6][k % 3])
            ev = prob.evaluate(it.x, it.y, it.z)
            worst = max(worst, oracle.rel_inf_error(prob.direction(ev, it).stacked(),
                                                    oracle.oracle_direction(ev, it).stacked()))
        c.detail = f"max rel err vs dense 4x4 {worst:.2e} (<= 1e-8)"
        assert worst <= 1e-8


def test_6_end_to_end(criterion):
    with criterion("6 end-to-end OCP") as c:
        ocp = models.double_integrator(N=20, dt=0.1, x0=(5.0, 0.0), u_max=1.0)
        solve_ocp(ocp)  # warm imports and caches before timing
        t0 = time.perf_counter()
        res = solve_ocp(ocp)
        elapsed = time.perf_counter() - t0
        rep = res.report
        assert rep.status == Status.CONVERGED
        assert rep.kkt_residual <= 1e-6
        assert rep.iterations <= 50
        assert elapsed <= 1.0

        it, r1 = ipm_solve(scalar_bound())
        assert r1.status == Status.CONVERGED
        assert abs(it.x[0] - 1.0) <= 1e-6 and abs(it.z[0] - 2.0) <= 1e-6
        it2, r2 = ipm_solve(scalar_projection())
        assert r2.status == Status.CONVERGED
        assert abs(it2.x[0] - 1.0) <= 1e-6 and abs(it2.y[0] + 1.0) <= 1e-6
        c.detail = (f"double integrator kkt {rep.kkt_residual:.1e} in {rep.iterations} its, "
                    f"{elapsed:.3f} s; bound (x, z) = ({it.x[0]:.7f}, {it.z[0]:.7f}); "
                    f"projection (x1, y) = ({it2.x[0]:.7f}, {it2.y[0]:.7f})")


def test_7_inverse_identity(criterion):
    with criterion("7 inverse identity") as c:
        rng = np.random.default_rng(1007)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 7))
            F = rng.standard_normal((n, n))
            V = F.T @ F
            delta = 10 ** rng.uniform(-8, 0)
            I = np.eye(n)
            inv = chol_solve(chol_factor(I + delta * V), I)
            worst = max(worst, float(np.linalg.norm(inv @ (delta * V) - (I - inv))))
        c.detail = f"max Frobenius err {worst:.2e} (<= 1e-12)"
        assert worst <= 1e-12


def test_8_cli(criterion, tmp_path, capsys):
    with criterion("8 CLI determinism and --check") as c:
        worst = 0.0
        for seed, (n, nx, nu, delta) in enumerate([(0, 2, 1, 1.0), (3, 3, 2, 1e-4), (10, 4, 4, 1e-8),
                                                    (7, 1, 3, 0.1), (5, 2, 2, 0.0)]):
            args = ["gen", "--n", str(n), "--nx", str(nx), "--nu", str(nu), "--delta", str(delta),
                    "--seed", str(seed)]
            a, b = tmp_path / f"a{seed}.json", tmp_path / f"b{seed}.json"
            assert main(args + ["--output", str(a)]) == 0
            assert main(args + ["--output", str(b)]) == 0
            assert a.read_bytes() == b.read_bytes()
            out = tmp_path / f"sol{seed}.json"
            assert main(["solve-lqr", "--input", str(a), "--check", "--output", str(out)]) == 0
            doc = json.loads(out.read_text())
            assert doc["oracle_checked"] is True
            worst = max(worst, doc["oracle_discrepancy"])
        capsys.readouterr()
        c.detail = f"5 seeds byte-identical, max --check discrepancy {worst:.2e} (<= 1e-8)"
        assert worst <= 1e-8
