"""Random problem builders shared by the test modules."""
import numpy as np

from rlqr.ipm import IpmIterate
from rlqr.ocp import OcpDefinition, OcpProblem


def random_ocp(rng, N=None, nx=None, nu=None, max_cons=2):
    N = int(rng.integers(1, 6)) if N is None else N
    nx = int(rng.integers(1, 4)) if nx is None else nx
    nu = int(rng.integers(1, 4)) if nu is None else nu
    A = [rng.standard_normal((nx, nx)) / np.sqrt(nx) for _ in range(N)]
    B = [rng.standard_normal((nx, nu)) for _ in range(N)]
    H = []
    for _ in range(N):
        F = rng.standard_normal((nx + nu, nx + nu))
        H.append(F.T @ F + 0.1 * np.eye(nx + nu))
    F = rng.standard_normal((nx, nx))
    HN = F.T @ F + 0.1 * np.eye(nx)
    lin = [rng.standard_normal(nx + nu) for _ in range(N)]
    linN = rng.standard_normal(nx)

    def lin_cons(count_hi, width):
        m = int(rng.integers(0, count_hi + 1))
        return rng.standard_normal((m, width)), rng.standard_normal(m)

    eqs = [lin_cons(min(max_cons, nx + nu - 1), nx + nu) for _ in range(N)]
    ineqs = [lin_cons(max_cons, nx + nu) for _ in range(N)]
    eqN = lin_cons(min(max_cons, nx - 1), nx)
    ineqN = lin_cons(max_cons, nx)

    def dynamics(i, x, u):
        d = A[i] @ x + B[i] @ u + 0.1 * np.sin(x)
        return d, A[i] + 0.1 * np.diag(np.cos(x)), B[i]

    def cost(i, x, u):
        w = np.concatenate([x, u])
        Hi = H[i]
        return (0.5 * w @ Hi @ w + lin[i] @ w, (Hi @ w + lin[i])[:nx], (Hi @ w + lin[i])[nx:],
                Hi[:nx, :nx], Hi[:nx, nx:], Hi[nx:, nx:])

    def terminal_cost(x):
        return 0.5 * x @ HN @ x + linN @ x, HN @ x + linN, HN

    def stage_cons(table):
        def fn(i, x, u):
            J, b = table[i]
            return J @ np.concatenate([x, u]) - b, J[:, :nx], J[:, nx:]
        return fn

    def term_cons(pair):
        def fn(x):
            J, b = pair
            return J @ x - b, J
        return fn

    return OcpDefinition(
        N=N, nx=nx, nu=nu, s0=rng.standard_normal(nx), dynamics=dynamics, cost=cost,
        terminal_cost=terminal_cost, eq=stage_cons(eqs), ineq=stage_cons(ineqs),
        terminal_eq=term_cons(eqN), terminal_ineq=term_cons(ineqN),
    )


def random_ocp_point(rng, ocp, eta=1e2):
    xs = [rng.standard_normal(ocp.nx) for _ in range(ocp.N + 1)]
    us = [rng.standard_normal(ocp.nu) for _ in range(ocp.N)]
    prob = OcpProblem(ocp, xs, us)
    lay = prob.layout
    it = IpmIterate(
        x=prob.x0.copy(), s=rng.uniform(0.1, 2.0, lay.p), y=rng.standard_normal(lay.m),
        z=rng.uniform(0.1, 2.0, lay.p), mu=float(rng.uniform(1e-3, 1.0)), eta=float(eta),
    )
    return prob, it
