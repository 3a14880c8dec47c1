"""Regularized LQR via an extended Riccati recursion.

Solves the saddle-point system

    [P   C^T ] [x]     [s]
    [C  -dI  ] [y] = - [c]

where P is block diagonal over stages ([[Q_i, M_i], [M_i^T, R_i]] and a
terminal Q_N) and C stacks the initial-state row ``-x_0`` and the dynamics rows
``A_i x_i + B_i u_i - x_{i+1}``. Setting ``delta = 0`` gives the standard LQR
KKT system and the recursion below reduces to the usual Riccati recursion.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dense import CholeskyFactor, NotPositiveDefinite, chol_factor, chol_solve, symmetrize

PSD_TOL = 1e-9


class GiNotPositiveDefinite(NotPositiveDefinite):
    def __init__(self, stage: int):
        super().__init__(f"G_{stage} = B^T W B + R is not positive definite at stage {stage}")
        self.stage = stage


class InnerNotPositiveDefinite(NotPositiveDefinite):
    def __init__(self, stage: int):
        super().__init__(f"I + delta V_{stage} is not positive definite")
        self.stage = stage


def _vec(a) -> np.ndarray:
    return np.atleast_1d(np.asarray(a, dtype=np.float64)).ravel()


def _mat(a, rows: int, cols: int) -> np.ndarray:
    return np.asarray(a, dtype=np.float64).reshape(rows, cols)


@dataclass(frozen=True)
class LqrStage:
    """One stage: cost blocks Q, M, R, q, r and the dynamics row producing x_{i+1}."""

    Q: np.ndarray
    M: np.ndarray
    R: np.ndarray
    q: np.ndarray
    r: np.ndarray
    A: np.ndarray
    B: np.ndarray
    c_next: np.ndarray

    @classmethod
    def from_arrays(cls, Q, M, R, q, r, A, B, c_next) -> "LqrStage":
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        nx, nu = B.shape
        return cls(
            Q=_mat(Q, nx, nx), M=_mat(M, nx, nu), R=_mat(R, nu, nu),
            q=_vec(q), r=_vec(r), A=_mat(A, nx, nx), B=B, c_next=_vec(c_next),
        )

    @property
    def nx(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[1]

    @property
    def hessian(self) -> np.ndarray:
        return np.block([[self.Q, self.M], [self.M.T, self.R]])


@dataclass(frozen=True)
class RegLqrProblem:
    stages: Sequence[LqrStage]
    Q_N: np.ndarray
    q_N: np.ndarray
    c0: np.ndarray
    delta: float = 0.0

    @property
    def N(self) -> int:
        return len(self.stages)

    @property
    def nx(self) -> int:
        return self.Q_N.shape[0]

    @property
    def nu(self) -> int:
        return self.stages[0].nu if self.stages else 0

    def with_delta(self, delta: float) -> "RegLqrProblem":
        return RegLqrProblem(self.stages, self.Q_N, self.q_N, self.c0, float(delta))

    def validate(self, check_definiteness: bool = True) -> None:
        """Dimension checks plus (optionally) the eigenvalue-based definiteness checks.

        Not called by :func:`solve`; the hot path relies on Cholesky failures.
        Raises ValueError naming the offending stage.
        """
        nx = self.nx
        if self.delta < 0 or not np.isfinite(self.delta):
            raise ValueError(f"delta must be finite and >= 0, got {self.delta}")
        if self.Q_N.shape != (nx, nx) or self.q_N.shape != (nx,) or self.c0.shape != (nx,):
            raise ValueError("terminal blocks / c0 have inconsistent dimensions")
        nu = self.nu
        expected = {
            "Q": (nx, nx), "M": (nx, nu), "R": (nu, nu), "q": (nx,), "r": (nu,),
            "A": (nx, nx), "B": (nx, nu), "c_next": (nx,),
        }
        for i, st in enumerate(self.stages):
            for name, shape in expected.items():
                got = getattr(st, name).shape
                if got != shape:
                    raise ValueError(f"stage {i}: {name} has shape {got}, expected {shape}")
        arrays = [self.Q_N, self.q_N, self.c0] + [
            getattr(st, name) for st in self.stages for name in expected
        ]
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("problem data contains non-finite entries")
        if not check_definiteness:
            return
        if np.linalg.eigvalsh(symmetrize(self.Q_N)).min() < -PSD_TOL:
            raise ValueError("Q_N is not positive semi-definite")
        for i, st in enumerate(self.stages):
            H = st.hessian
            if np.abs(H - H.T).max() > 1e-9 * max(1.0, np.abs(H).max()):
                raise ValueError(f"stage {i}: [[Q, M], [M^T, R]] is not symmetric")
            if np.linalg.eigvalsh(symmetrize(H)).min() < -PSD_TOL:
                raise ValueError(f"stage {i}: [[Q, M], [M^T, R]] is not positive semi-definite")
            if np.linalg.eigvalsh(symmetrize(st.R)).min() <= 0.0:
                raise ValueError(f"stage {i}: R is not positive definite")


@dataclass
class StagePolicy:
    """Feedback ``u_i = K x_i + k`` and cost-to-go ``(V, v)`` for one stage.

    ``inner`` caches the Cholesky factor of ``I + delta V`` for the forward pass.
    The terminal entry has ``K = k = None``.
    """

    K: Optional[np.ndarray]
    k: Optional[np.ndarray]
    V: np.ndarray
    v: np.ndarray
    inner: Optional[CholeskyFactor] = field(default=None, repr=False)


@dataclass
class RegLqrSolution:
    x: List[np.ndarray]
    u: List[np.ndarray]
    y: List[np.ndarray]


def _inner_factor(V: np.ndarray, delta: float, stage: int) -> CholeskyFactor:
    try:
        return chol_factor(symmetrize(np.eye(V.shape[0]) + delta * V))
    except NotPositiveDefinite:
        raise InnerNotPositiveDefinite(stage) from None
    except ValueError:
        # NaN or asymmetry upstream
        raise InnerNotPositiveDefinite(stage) from None


def backward_pass(p: RegLqrProblem) -> List[StagePolicy]:
    delta = float(p.delta)
    V = symmetrize(p.Q_N)
    v = p.q_N.copy()
    inner = _inner_factor(V, delta, p.N)
    policies: List[Optional[StagePolicy]] = [None] * (p.N + 1)
    policies[p.N] = StagePolicy(None, None, V, v, inner)

    for i in range(p.N - 1, -1, -1):
        st = p.stages[i]
        A, B = st.A, st.B
        W = symmetrize(chol_solve(inner, V))
        WA = W @ A
        WB = W @ B
        G = symmetrize(B.T @ WB + st.R)
        g = v + W @ (st.c_next - delta * v)
        H = B.T @ WA + st.M.T
        h = st.r + B.T @ g
        try:
            Gf = chol_factor(G)
        except (NotPositiveDefinite, ValueError):
            raise GiNotPositiveDefinite(i) from None
        K = -chol_solve(Gf, H)
        k = -chol_solve(Gf, h)
        V = symmetrize(A.T @ WA + st.Q + K.T @ H)
        v = st.q + A.T @ g + K.T @ h
        inner = _inner_factor(V, delta, i)
        policies[i] = StagePolicy(K, k, V, v, inner)
    return policies


def forward_pass(
    p: RegLqrProblem, policies: Sequence[StagePolicy]
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    if len(policies) != p.N + 1:
        raise ValueError(f"expected {p.N + 1} policies, got {len(policies)}")
    delta = float(p.delta)

    def inner(i: int) -> CholeskyFactor:
        pol = policies[i]
        return pol.inner if pol.inner is not None else _inner_factor(pol.V, delta, i)

    x = chol_solve(inner(0), p.c0 - delta * policies[0].v)
    xs, us = [x], []
    for i, st in enumerate(p.stages):
        pol = policies[i]
        u = pol.K @ x + pol.k
        nxt = policies[i + 1]
        x = chol_solve(inner(i + 1), st.A @ x + st.B @ u + st.c_next - delta * nxt.v)
        us.append(u)
        xs.append(x)
    return xs, us


def recover_duals(policies: Sequence[StagePolicy], xs: Sequence[np.ndarray]) -> List[np.ndarray]:
    if len(policies) != len(xs):
        raise ValueError(f"{len(policies)} policies but {len(xs)} states")
    return [pol.V @ x + pol.v for pol, x in zip(policies, xs)]


def solve(p: RegLqrProblem) -> RegLqrSolution:
    policies = backward_pass(p)
    xs, us = forward_pass(p, policies)
    ys = recover_duals(policies, xs)
    return RegLqrSolution(xs, us, ys)


def random_problem(
    rng: np.random.Generator, N: int, nx: int, nu: int, delta: float = 0.0,
    dynamics_scale: float = 1.0,
) -> RegLqrProblem:
    """Random instance meeting the definiteness requirements by construction.

    Stage Hessians are ``L^T L + blkdiag(0, I)`` (PSD with R PD), ``Q_N = L^T L``.
    Dynamics ``A`` is normalized to spectral norm ``dynamics_scale``.
    """
    stages = []
    for _ in range(N):
        F = rng.standard_normal((nx + nu, nx + nu))
        H = F.T @ F
        H[nx:, nx:] += np.eye(nu)
        A = rng.standard_normal((nx, nx))
        A *= dynamics_scale / max(np.linalg.norm(A, 2), 1e-12)
        stages.append(LqrStage(
            Q=symmetrize(H[:nx, :nx]), M=H[:nx, nx:].copy(), R=symmetrize(H[nx:, nx:]),
            q=rng.standard_normal(nx), r=rng.standard_normal(nu),
            A=A, B=rng.standard_normal((nx, nu)), c_next=rng.standard_normal(nx),
        ))
    F = rng.standard_normal((nx, nx))
    return RegLqrProblem(
        stages=stages, Q_N=F.T @ F, q_N=rng.standard_normal(nx),
        c0=rng.standard_normal(nx), delta=float(delta),
    )
