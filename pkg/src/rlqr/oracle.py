"""Dense reference solves of the literal block systems.

Everything here assembles the full KKT matrix and factors it with the pivot-free
quasi-definite LDL^T from :mod:`rlqr.dense`. It is O(n^3) on purpose and shares
no code with the stagewise solvers it certifies.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .dense import InertiaError, ZeroPivot, qdldl_factor, qdldl_solve
from .ipm import IpmIterate, ProblemEval, StepDirection, augmented_gradient, lagrangian_gradient
from .reglqr import RegLqrProblem, RegLqrSolution


REFINE_STEPS = 3


class OracleSingular(np.linalg.LinAlgError):
    pass


@dataclass
class DenseKkt:
    """Assembled system ``K sol = rhs``.

    ``index`` maps ``(kind, stage)`` to a slice of rows; ``stage`` is None for
    unstructured blocks. ``signs`` is the quasi-definite pattern (+1 primal).
    """

    K: np.ndarray
    rhs: np.ndarray
    index: Dict[Tuple[str, Optional[int]], slice]
    signs: np.ndarray

    def solve(self, refine: int = REFINE_STEPS) -> np.ndarray:
        """Factor and solve, then refine with residuals in extended precision.

        The refinement makes the forward error close to machine precision
        relative to the solution even when the saddle matrix is poorly
        conditioned (large eta). Where ``np.longdouble`` is plain double it
        degrades to ordinary fixed-precision refinement.
        """
        try:
            fac = qdldl_factor(self.K, self.signs)
        except (ZeroPivot, InertiaError) as exc:
            raise OracleSingular(str(exc)) from None
        sol = qdldl_solve(fac, self.rhs)
        if refine <= 0 or sol.size == 0:
            return sol
        K = self.K.astype(np.longdouble)
        b = self.rhs.astype(np.longdouble)
        acc = sol.astype(np.longdouble)
        for _ in range(refine):
            r = b - K @ acc
            if not np.any(r):
                break
            acc = acc + qdldl_solve(fac, r.astype(np.float64))
        return acc.astype(np.float64)

    def block(self, sol: np.ndarray, kind: str, stage: Optional[int] = None) -> np.ndarray:
        return sol[self.index[(kind, stage)]]

    def residual(self, sol: np.ndarray) -> float:
        return float(np.max(np.abs(self.K @ sol - self.rhs), initial=0.0))


def reglqr_layout(p: RegLqrProblem):
    """Primal offsets (x_0, u_0, ..., x_N) and the matching index map."""
    nx, nu, N = p.nx, p.nu, p.N
    index: Dict[Tuple[str, Optional[int]], slice] = {}
    off = 0
    for i in range(N + 1):
        index[("x", i)] = slice(off, off + nx)
        off += nx
        if i < N:
            index[("u", i)] = slice(off, off + nu)
            off += nu
    n_primal = off
    for i in range(N + 1):
        index[("y", i)] = slice(off, off + nx)
        off += nx
    return index, n_primal, off


def assemble_reglqr(p: RegLqrProblem) -> DenseKkt:
    index, n, total = reglqr_layout(p)
    nx = p.nx
    K = np.zeros((total, total))
    rhs = np.zeros(total)
    eye = np.eye(nx)

    def put(r: slice, c: slice, blk: np.ndarray) -> None:
        K[r, c] = blk
        K[c, r] = blk.T

    for i, st in enumerate(p.stages):
        xi, ui = index[("x", i)], index[("u", i)]
        put(xi, xi, st.Q)
        put(xi, ui, st.M)
        put(ui, ui, st.R)
        rhs[xi] = -st.q
        rhs[ui] = -st.r
        yi1 = index[("y", i + 1)]
        put(yi1, xi, st.A)
        put(yi1, ui, st.B)
        put(yi1, index[("x", i + 1)], -eye)
        rhs[yi1] = -st.c_next
    xN = index[("x", p.N)]
    put(xN, xN, p.Q_N)
    rhs[xN] = -p.q_N
    y0 = index[("y", 0)]
    put(y0, index[("x", 0)], -eye)
    rhs[y0] = -p.c0
    K[n:, n:] = -p.delta * np.eye(total - n)
    signs = np.concatenate([np.ones(n), -np.ones(total - n)])
    return DenseKkt(K, rhs, index, signs)


def unpack_reglqr(kkt: DenseKkt, p: RegLqrProblem, sol: np.ndarray) -> RegLqrSolution:
    return RegLqrSolution(
        x=[kkt.block(sol, "x", i).copy() for i in range(p.N + 1)],
        u=[kkt.block(sol, "u", i).copy() for i in range(p.N)],
        y=[kkt.block(sol, "y", i).copy() for i in range(p.N + 1)],
    )


def pack_reglqr(kkt: DenseKkt, sol: RegLqrSolution) -> np.ndarray:
    out = np.zeros(kkt.rhs.size)
    for kind, blocks in (("x", sol.x), ("u", sol.u), ("y", sol.y)):
        for i, b in enumerate(blocks):
            out[kkt.index[(kind, i)]] = b
    return out


def oracle_solve_reglqr(p: RegLqrProblem) -> RegLqrSolution:
    kkt = assemble_reglqr(p)
    return unpack_reglqr(kkt, p, kkt.solve())


def reglqr_kkt_residual(p: RegLqrProblem, sol: RegLqrSolution) -> float:
    """``|K sol + [s; c]|_inf / (1 + |[s; c]|_inf)`` on the assembled system."""
    kkt = assemble_reglqr(p)
    scale = 1.0 + float(np.max(np.abs(kkt.rhs), initial=0.0))
    return kkt.residual(pack_reglqr(kkt, sol)) / scale


def _ipm_index(n: int, p: int, m: int, q: int, with_slack: bool):
    index: Dict[Tuple[str, Optional[int]], slice] = {}
    off = 0
    kinds = [("x", n)] + ([("s", p)] if with_slack else []) + [("y", m), ("z", q)]
    for kind, size in kinds:
        index[(kind, None)] = slice(off, off + size)
        off += size
    return index, off


def assemble_ipm_4x4(ev: ProblemEval, it: IpmIterate) -> DenseKkt:
    """Newton system in (dx, ds, dy, dz) with rhs ``-grad L``."""
    n, m, p = ev.grad_f.size, ev.c_val.size, ev.g_val.size
    index, total = _ipm_index(n, p, m, p, True)
    ix, is_, iy, iz = (index[(k, None)] for k in ("x", "s", "y", "z"))
    K = np.zeros((total, total))
    K[ix, ix] = ev.P_hess
    K[is_, is_] = np.diag(it.z / it.s)
    K[iy, ix] = ev.C_jac
    K[ix, iy] = ev.C_jac.T
    K[iz, ix] = ev.G_jac
    K[ix, iz] = ev.G_jac.T
    K[iz, is_] = np.eye(p)
    K[is_, iz] = np.eye(p)
    K[iy, iy] = -np.eye(m) / it.eta
    K[iz, iz] = -np.eye(p) / it.eta
    rhs = -np.concatenate([
        lagrangian_gradient(ev, it), -it.mu / it.s + it.z, ev.c_val, ev.g_val + it.s,
    ])
    signs = np.concatenate([np.ones(n + p), -np.ones(m + p)])
    return DenseKkt(K, rhs, index, signs)


def assemble_ipm_3x3(ev: ProblemEval, it: IpmIterate) -> DenseKkt:
    """Slack-eliminated Newton system in (dx, dy, dz)."""
    n, m, p = ev.grad_f.size, ev.c_val.size, ev.g_val.size
    index, total = _ipm_index(n, 0, m, p, False)
    ix, iy, iz = (index[(k, None)] for k in ("x", "y", "z"))
    K = np.zeros((total, total))
    K[ix, ix] = ev.P_hess
    K[iy, ix] = ev.C_jac
    K[ix, iy] = ev.C_jac.T
    K[iz, ix] = ev.G_jac
    K[ix, iz] = ev.G_jac.T
    K[iy, iy] = -np.eye(m) / it.eta
    K[iz, iz] = -np.diag(it.s / it.z + 1.0 / it.eta)
    rhs = -np.concatenate([lagrangian_gradient(ev, it), ev.c_val, ev.g_val + it.mu / it.z])
    signs = np.concatenate([np.ones(n), -np.ones(m + p)])
    return DenseKkt(K, rhs, index, signs)


def oracle_direction(ev: ProblemEval, it: IpmIterate) -> StepDirection:
    kkt = assemble_ipm_4x4(ev, it)
    sol = kkt.solve()
    return StepDirection(*(kkt.block(sol, k).copy() for k in ("x", "s", "y", "z")))


def oracle_direction_3x3(ev: ProblemEval, it: IpmIterate) -> StepDirection:
    kkt = assemble_ipm_3x3(ev, it)
    sol = kkt.solve()
    dz = kkt.block(sol, "z")
    ds = -(it.s / it.z) * dz + it.mu / it.z - it.s
    return StepDirection(kkt.block(sol, "x").copy(), ds, kkt.block(sol, "y").copy(), dz.copy())


def check_lemma(ev: ProblemEval, it: IpmIterate) -> float:
    """Max abs difference between the Newton step and its shifted-variable form.

    The shifted system has the same matrix, rhs ``-[grad_x A; grad_s A; 0; 0]``
    and unknowns ``(dx, ds, dy - eta c, dz - eta (g + s))``.
    """
    kkt = assemble_ipm_4x4(ev, it)
    direct = kkt.solve()
    gx, gs = augmented_gradient(ev, it)
    m, p = ev.c_val.size, ev.g_val.size
    shifted_rhs = -np.concatenate([gx, gs, np.zeros(m + p)])
    shifted = DenseKkt(kkt.K, shifted_rhs, kkt.index, kkt.signs).solve()
    shifted[kkt.index[("y", None)]] += it.eta * ev.c_val
    shifted[kkt.index[("z", None)]] += it.eta * (ev.g_val + it.s)
    return float(np.max(np.abs(direct - shifted), initial=0.0))


def rel_inf_error(a, b) -> float:
    """``|a - b|_inf / |b|_inf`` on stacked blocks (absolute when ``b`` is zero)."""
    if isinstance(a, (list, tuple)) and not a:
        return 0.0
    a = np.concatenate([np.ravel(v) for v in a]) if isinstance(a, (list, tuple)) else np.ravel(a)
    b = np.concatenate([np.ravel(v) for v in b]) if isinstance(b, (list, tuple)) else np.ravel(b)
    if a.size == 0:
        return 0.0
    scale = float(np.max(np.abs(b)))
    err = float(np.max(np.abs(a - b)))
    return err / scale if scale > 0 else err


def solution_discrepancy(sol: RegLqrSolution, ref: RegLqrSolution) -> float:
    return max(rel_inf_error(sol.x, ref.x), rel_inf_error(sol.u, ref.u),
               rel_inf_error(sol.y, ref.y))
