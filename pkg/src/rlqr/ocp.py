"""Discrete-time optimal control frontend for the regularized IPM.

Problem::

    min  sum_i f_i(x_i, u_i) + f_N(x_N)
    s.t. x_0 = s0,  x_{i+1} = d_i(x_i, u_i),
         c_i(x_i, u_i) = 0,  g_i(x_i, u_i) <= 0,  c_N(x_N) = 0,  g_N(x_N) <= 0.

Callback contract (all arrays float64, matrices row-major):

* ``dynamics(i, x, u) -> (d, A, B)`` with ``A = dd/dx`` (nx, nx), ``B = dd/du`` (nx, nu)
* ``cost(i, x, u) -> (f, f_x, f_u, Q, M, R)``; ``[[Q, M], [M^T, R]]`` is a
  Gauss-Newton (PSD) Hessian approximation
* ``terminal_cost(x) -> (f, f_x, Q)``
* ``eq(i, x, u) -> (c, C_x, C_u)`` and ``ineq(i, x, u) -> (g, G_x, G_u)``;
  may return empty arrays
* ``terminal_eq(x) -> (c, C_x)``, ``terminal_ineq(x) -> (g, G_x)``

The flat decision vector is ``[x_0, u_0, ..., x_{N-1}, u_{N-1}, x_N]``. The
equality vector stacks ``s0 - x_0``, the dynamics defects ``d_i - x_{i+1}``,
then the stage equalities; the inequality vector stacks the stage inequalities.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import reglqr
from .ipm import (
    IpmIterate, IpmSettings, NlpAdapter, ProblemEval, SolveReport, StepDirection, convexify,
    ipm_solve, slack_step,
)
from .reglqr import LqrStage, RegLqrProblem, RegLqrSolution


class CallbackNonFinite(ValueError):
    def __init__(self, stage: int, what: str):
        super().__init__(f"callback {what} returned non-finite values at stage {stage}")
        self.stage = stage


@dataclass
class OcpDefinition:
    N: int
    nx: int
    nu: int
    s0: np.ndarray
    dynamics: Callable
    cost: Callable
    terminal_cost: Callable
    eq: Optional[Callable] = None
    ineq: Optional[Callable] = None
    terminal_eq: Optional[Callable] = None
    terminal_ineq: Optional[Callable] = None

    def __post_init__(self):
        self.s0 = np.asarray(self.s0, dtype=np.float64).ravel()
        if self.s0.size != self.nx:
            raise ValueError(f"s0 has length {self.s0.size}, expected nx={self.nx}")


@dataclass
class StageEval:
    """Callback outputs for one stage; the terminal stage has ``nu = 0`` and no dynamics."""

    index: int
    f: float
    grad: np.ndarray
    hess: np.ndarray
    c: np.ndarray
    C: np.ndarray
    g: np.ndarray
    G: np.ndarray
    d: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    hess_shift: float = 0.0


def _finite(stage: int, what: str, *arrays) -> None:
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise CallbackNonFinite(stage, what)


def _constraint(fn, args, n_cols_x: int, n_cols_u: Optional[int]):
    """Call an optional constraint callback; returns (value, jacobian over (x[, u]))."""
    width = n_cols_x + (n_cols_u or 0)
    if fn is None:
        return np.zeros(0), np.zeros((0, width))
    out = fn(*args)
    val = np.atleast_1d(np.asarray(out[0], dtype=np.float64)).ravel()
    m = val.size
    jx = np.asarray(out[1], dtype=np.float64).reshape(m, n_cols_x)
    if n_cols_u is None:
        return val, jx
    ju = np.asarray(out[2], dtype=np.float64).reshape(m, n_cols_u)
    return val, np.hstack([jx, ju])


def evaluate_stage(ocp: OcpDefinition, i: int, x: np.ndarray, u: Optional[np.ndarray]) -> StageEval:
    nx, nu = ocp.nx, ocp.nu
    if i == ocp.N:
        f, fx, Q = ocp.terminal_cost(x)
        grad = np.asarray(fx, dtype=np.float64).ravel()
        hess = np.asarray(Q, dtype=np.float64).reshape(nx, nx)
        c, C = _constraint(ocp.terminal_eq, (x,), nx, None)
        g, G = _constraint(ocp.terminal_ineq, (x,), nx, None)
        ev = StageEval(i, float(f), grad, hess, c, C, g, G)
    else:
        f, fx, fu, Q, M, R = ocp.cost(i, x, u)
        grad = np.concatenate([np.ravel(fx), np.ravel(fu)]).astype(np.float64)
        hess = np.block([
            [np.reshape(Q, (nx, nx)), np.reshape(M, (nx, nu))],
            [np.reshape(M, (nx, nu)).T, np.reshape(R, (nu, nu))],
        ]).astype(np.float64)
        d, A, B = ocp.dynamics(i, x, u)
        d = np.asarray(d, dtype=np.float64).ravel()
        A = np.asarray(A, dtype=np.float64).reshape(nx, nx)
        B = np.asarray(B, dtype=np.float64).reshape(nx, nu)
        _finite(i, "dynamics", d, A, B)
        c, C = _constraint(ocp.eq, (i, x, u), nx, nu)
        g, G = _constraint(ocp.ineq, (i, x, u), nx, nu)
        ev = StageEval(i, float(f), grad, hess, c, C, g, G, d, A, B)
    _finite(i, "cost", np.array([ev.f]), ev.grad, ev.hess)
    _finite(i, "constraint", ev.c, ev.C, ev.g, ev.G)
    return ev


def evaluate(ocp: OcpDefinition, traj: Tuple[Sequence[np.ndarray], Sequence[np.ndarray]]) -> List[StageEval]:
    xs, us = traj
    if len(xs) != ocp.N + 1 or len(us) != ocp.N:
        raise ValueError(f"trajectory must have {ocp.N + 1} states and {ocp.N} controls")
    return [evaluate_stage(ocp, i, xs[i], us[i] if i < ocp.N else None) for i in range(ocp.N + 1)]


class OcpLayout:
    """Slices of each stage inside the flat primal, equality and inequality vectors."""

    def __init__(self, N: int, nx: int, nu: int, n_eq: Sequence[int], n_ineq: Sequence[int]):
        self.N, self.nx, self.nu = N, nx, nu
        self.x, self.u, self.stage = [], [], []
        off = 0
        for i in range(N + 1):
            self.x.append(slice(off, off + nx))
            width = nx + (nu if i < N else 0)
            self.stage.append(slice(off, off + width))
            off += nx
            if i < N:
                self.u.append(slice(off, off + nu))
                off += nu
        self.n = off
        self.dyn = [slice(k * nx, (k + 1) * nx) for k in range(N + 1)]
        off = (N + 1) * nx
        self.eq = []
        for m in n_eq:
            self.eq.append(slice(off, off + m))
            off += m
        self.m = off
        self.ineq = []
        off = 0
        for p in n_ineq:
            self.ineq.append(slice(off, off + p))
            off += p
        self.p = off

    def split(self, v: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        return [v[s] for s in self.x], [v[s] for s in self.u]

    def join(self, xs, us) -> np.ndarray:
        v = np.zeros(self.n)
        for s, x in zip(self.x, xs):
            v[s] = x
        for s, u in zip(self.u, us):
            v[s] = u
        return v


@dataclass
class CondensedStage:
    """Stage ``i`` after folding its inequality and non-dynamics equality rows into the cost.

    ``H``/``grad`` are over ``(x_i, u_i)`` (``x_N`` only for the terminal stage).
    ``sigma = (Z^{-1} S + I/eta)^{-1}`` restricted to the stage, stored as a diagonal.
    """

    index: int
    H: np.ndarray
    grad: np.ndarray
    G: np.ndarray
    C: np.ndarray
    s: np.ndarray
    z: np.ndarray
    y_eq: np.ndarray
    sigma: np.ndarray
    r_z: np.ndarray
    r_c: np.ndarray


def condense_stage(ev: StageEval, grad_lagrangian: np.ndarray, s: np.ndarray, z: np.ndarray,
                   y_eq: np.ndarray, mu: float, eta: float) -> CondensedStage:
    """Eliminate dz (and the stage-equality dy) for one stage.

    ``grad_lagrangian`` is the stage slice of the full Lagrangian gradient,
    dynamics multipliers included.
    """
    sigma = 1.0 / (s / z + 1.0 / eta)
    r_z = ev.g + mu / z
    r_c = ev.c
    H = ev.hess + ev.G.T @ (sigma[:, None] * ev.G) + eta * (ev.C.T @ ev.C)
    grad = grad_lagrangian + ev.G.T @ (sigma * r_z) + eta * (ev.C.T @ r_c)
    return CondensedStage(ev.index, 0.5 * (H + H.T), grad, ev.G, ev.C, s, z, y_eq,
                          sigma, r_z, r_c)


def stage_lagrangian_gradients(evals: Sequence[StageEval], it: IpmIterate,
                               layout: OcpLayout) -> List[np.ndarray]:
    nx, N = layout.nx, layout.N
    out = []
    for i, ev in enumerate(evals):
        gl = ev.grad + ev.C.T @ it.y[layout.eq[i]] + ev.G.T @ it.z[layout.ineq[i]]
        gl[:nx] -= it.y[layout.dyn[i]]
        if i < N:
            y_next = it.y[layout.dyn[i + 1]]
            gl[:nx] += ev.A.T @ y_next
            gl[nx:] += ev.B.T @ y_next
        out.append(gl)
    return out


def condense(evals: Sequence[StageEval], it: IpmIterate,
             layout: OcpLayout, s0: np.ndarray) -> Tuple[RegLqrProblem, List[CondensedStage]]:
    """Reduce the Newton system at ``it`` to a regularized LQR problem with delta = 1/eta."""
    nx, N = layout.nx, layout.N
    xs, _ = layout.split(it.x)
    grads = stage_lagrangian_gradients(evals, it, layout)
    condensed = [
        condense_stage(ev, grads[i], it.s[layout.ineq[i]], it.z[layout.ineq[i]],
                       it.y[layout.eq[i]], it.mu, it.eta)
        for i, ev in enumerate(evals)
    ]
    stages = []
    for i in range(N):
        cs, ev = condensed[i], evals[i]
        stages.append(LqrStage(
            Q=cs.H[:nx, :nx], M=cs.H[:nx, nx:], R=cs.H[nx:, nx:],
            q=cs.grad[:nx], r=cs.grad[nx:], A=ev.A, B=ev.B, c_next=ev.d - xs[i + 1],
        ))
    term = condensed[N]
    problem = RegLqrProblem(stages=stages, Q_N=term.H, q_N=term.grad, c0=s0 - xs[0],
                            delta=1.0 / it.eta)
    return problem, condensed


def expand(condensed: Sequence[CondensedStage], sol: RegLqrSolution, it: IpmIterate,
           layout: OcpLayout) -> StepDirection:
    """Rebuild the full step from the LQR solution.

    The LQR right-hand side carries the full Lagrangian gradient, so ``sol.y``
    is directly the dynamics-multiplier step.
    """
    dx = layout.join(sol.x, sol.u)
    dy = np.zeros(layout.m)
    dz = np.zeros(layout.p)
    for i, blk in enumerate(sol.y):
        dy[layout.dyn[i]] = blk
    for i, cs in enumerate(condensed):
        dstage = dx[layout.stage[i]]
        dy[layout.eq[i]] = it.eta * (cs.C @ dstage + cs.r_c)
        dz[layout.ineq[i]] = cs.sigma * (cs.G @ dstage + cs.r_z)
    return StepDirection(dx, slack_step(it, dz), dy, dz)


class OcpProblem(NlpAdapter):
    """:class:`NlpAdapter` whose Newton steps go through condense -> Riccati -> expand."""

    def __init__(self, ocp: OcpDefinition, xs0=None, us0=None):
        self.ocp = ocp
        xs0 = [ocp.s0.copy() for _ in range(ocp.N + 1)] if xs0 is None else [
            np.asarray(x, dtype=np.float64).ravel() for x in xs0]
        us0 = [np.zeros(ocp.nu) for _ in range(ocp.N)] if us0 is None else [
            np.asarray(u, dtype=np.float64).ravel() for u in us0]
        evals = evaluate(ocp, (xs0, us0))
        self.layout = OcpLayout(ocp.N, ocp.nx, ocp.nu, [e.c.size for e in evals],
                                [e.g.size for e in evals])
        self.x0 = self.layout.join(xs0, us0)

    def _stage_values(self, x: np.ndarray) -> List[StageEval]:
        xs, us = self.layout.split(x)
        return evaluate(self.ocp, (xs, us))

    def _stack(self, evals: Sequence[StageEval], x: np.ndarray):
        lay = self.layout
        xs, _ = lay.split(x)
        c = np.zeros(lay.m)
        g = np.zeros(lay.p)
        c[lay.dyn[0]] = self.ocp.s0 - xs[0]
        for i, ev in enumerate(evals):
            if i < lay.N:
                c[lay.dyn[i + 1]] = ev.d - xs[i + 1]
            c[lay.eq[i]] = ev.c
            g[lay.ineq[i]] = ev.g
        return sum(ev.f for ev in evals), c, g

    def values(self, x):
        evals = self._stage_values(x)
        return self._stack(evals, x)

    def evaluate(self, x, y, z):
        lay = self.layout
        nx = lay.nx
        evals = self._stage_values(x)
        f, c, g = self._stack(evals, x)
        grad = np.zeros(lay.n)
        P = np.zeros((lay.n, lay.n))
        C = np.zeros((lay.m, lay.n))
        G = np.zeros((lay.p, lay.n))
        C[lay.dyn[0], lay.x[0]] = -np.eye(nx)
        for i, ev in enumerate(evals):
            st = lay.stage[i]
            ev.hess, ev.hess_shift = convexify(ev.hess)
            grad[st] = ev.grad
            P[st, st] = ev.hess
            C[lay.eq[i], st] = ev.C
            G[lay.ineq[i], st] = ev.G
            if i < lay.N:
                row = lay.dyn[i + 1]
                C[row, lay.x[i]] = ev.A
                C[row, lay.u[i]] = ev.B
                C[row, lay.x[i + 1]] = -np.eye(nx)
        return ProblemEval(f=f, grad_f=grad, c_val=c, C_jac=C, g_val=g, G_jac=G,
                           P_hess=P, data=evals)

    def condense(self, ev: ProblemEval, it: IpmIterate):
        return condense(ev.data, it, self.layout, self.ocp.s0)

    def direction(self, ev: ProblemEval, it: IpmIterate) -> StepDirection:
        problem, condensed = self.condense(ev, it)
        return expand(condensed, reglqr.solve(problem), it, self.layout)


@dataclass
class OcpResult:
    x: List[np.ndarray]
    u: List[np.ndarray]
    y_dyn: List[np.ndarray]
    y_eq: List[np.ndarray]
    z: List[np.ndarray]
    s: List[np.ndarray]
    report: SolveReport
    iterate: IpmIterate


def solve_ocp(ocp: OcpDefinition, settings: Optional[IpmSettings] = None, xs0=None, us0=None,
              callback=None) -> OcpResult:
    problem = OcpProblem(ocp, xs0, us0)
    it, report = ipm_solve(problem, settings, callback=callback)
    lay = problem.layout
    xs, us = lay.split(it.x)
    return OcpResult(
        x=[x.copy() for x in xs], u=[u.copy() for u in us],
        y_dyn=[it.y[s].copy() for s in lay.dyn],
        y_eq=[it.y[s].copy() for s in lay.eq],
        z=[it.z[s].copy() for s in lay.ineq],
        s=[it.s[s].copy() for s in lay.ineq],
        report=report, iterate=it,
    )
