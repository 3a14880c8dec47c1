"""Regularized primal-dual interior point method.

Solves ``min f(x)  s.t.  c(x) = 0,  g(x) + s = 0,  s >= 0`` using Newton steps
on the regularized KKT system and a backtracking line search on the augmented
barrier-Lagrangian

    A(x, s) = f - mu sum(log s) + y^T c + z^T (g + s) + eta/2 (|c|^2 + |g + s|^2).

The dual regularization of every Newton system is exactly ``1/eta``, which is
what makes the primal step a descent direction of ``A`` for that same ``eta``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, List, Optional, Tuple

import numpy as np

from .dense import (
    InertiaError, NotPositiveDefinite, ZeroPivot, chol_factor, qdldl_factor, qdldl_solve,
    symmetrize,
)

log = logging.getLogger(__name__)

BARRIER_UPDATE_KAPPA = 10.0
MAX_BACKTRACKS = 50
ETA_WINDOW = 5
ETA_STAGNATION = 0.9


class NonPositiveSlack(ValueError):
    pass


class DegenerateKkt(np.linalg.LinAlgError):
    pass


class LineSearchFailed(RuntimeError):
    pass


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    ALMOST_CONVERGED = "AlmostConverged"
    MAX_ITERS = "MaxIters"
    LINE_SEARCH_FAILED = "LineSearchFailed"


@dataclass
class IpmSettings:
    mu0: float = 1e-1
    mu_min: float = 1e-9
    kappa_mu: float = 0.2
    theta_mu: float = 1.5
    eta0: float = 1e2
    eta_max: float = 1e8
    kappa_eta: float = 10.0
    tau_ftb: float = 0.995
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_iters: int = 100
    tol_kkt: float = 1e-6

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not val > 0:
                raise ValueError(f"{name} must be positive, got {val}")
        if not 0 < self.tau_ftb < 1:
            raise ValueError("tau_ftb must lie in (0, 1)")
        if not 0 < self.armijo_c < 0.5:
            raise ValueError("armijo_c must lie in (0, 0.5)")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")


@dataclass
class IpmIterate:
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    mu: float
    eta: float

    def copy(self) -> "IpmIterate":
        return IpmIterate(self.x.copy(), self.s.copy(), self.y.copy(), self.z.copy(),
                          self.mu, self.eta)


@dataclass
class StepDirection:
    dx: np.ndarray
    ds: np.ndarray
    dy: np.ndarray
    dz: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.dx, self.ds, self.dy, self.dz])

    def primal_norm(self) -> float:
        return float(np.linalg.norm(np.concatenate([self.dx, self.ds])))


@dataclass
class ProblemEval:
    """Problem data at one primal point.

    ``P_hess`` must already be symmetric positive definite (see :func:`convexify`).
    ``data`` carries adapter-specific payload (e.g. per-stage evaluations).
    """

    f: float
    grad_f: np.ndarray
    c_val: np.ndarray
    C_jac: np.ndarray
    g_val: np.ndarray
    G_jac: np.ndarray
    P_hess: np.ndarray
    data: Any = None


def _inf(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def convexify(H: np.ndarray, lam0: float = 1e-8, factor: float = 10.0,
              max_tries: int = 40) -> Tuple[np.ndarray, float]:
    """Return ``H + lam I`` positive definite, with lam = 0 or lam0 * factor^k."""
    H = symmetrize(np.asarray(H, dtype=np.float64))
    lam = 0.0
    eye = np.eye(H.shape[0])
    for _ in range(max_tries):
        try:
            chol_factor(H + lam * eye)
            return H + lam * eye, lam
        except NotPositiveDefinite:
            lam = lam0 if lam == 0.0 else lam * factor
    raise NotPositiveDefinite(f"could not convexify Hessian (last shift {lam:.1e})")


# -- merit functions ---------------------------------------------------------

def merit_terms(f: float, c: np.ndarray, g: np.ndarray, s: np.ndarray, y: np.ndarray,
                z: np.ndarray, mu: float, eta: Optional[float] = None) -> float:
    if s.size and np.min(s) <= 0.0:
        raise NonPositiveSlack("slack variables must be strictly positive")
    gs = g + s
    val = f - mu * float(np.sum(np.log(s))) + float(y @ c) + float(z @ gs)
    if eta is not None:
        val += 0.5 * eta * (float(c @ c) + float(gs @ gs))
    return val


def eval_barrier_lagrangian(ev: ProblemEval, it: IpmIterate) -> float:
    return merit_terms(ev.f, ev.c_val, ev.g_val, it.s, it.y, it.z, it.mu)


def eval_augmented_barrier_lagrangian(ev: ProblemEval, it: IpmIterate) -> float:
    return merit_terms(ev.f, ev.c_val, ev.g_val, it.s, it.y, it.z, it.mu, it.eta)


def lagrangian_gradient(ev: ProblemEval, it: IpmIterate) -> np.ndarray:
    return ev.grad_f + ev.C_jac.T @ it.y + ev.G_jac.T @ it.z


def augmented_gradient(ev: ProblemEval, it: IpmIterate) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of the augmented barrier-Lagrangian w.r.t. x and s."""
    gs = ev.g_val + it.s
    gx = lagrangian_gradient(ev, it) + it.eta * (ev.C_jac.T @ ev.c_val + ev.G_jac.T @ gs)
    gsl = -it.mu / it.s + it.z + it.eta * gs
    return gx, gsl


# -- Newton step -------------------------------------------------------------

def slack_step(it: IpmIterate, dz: np.ndarray) -> np.ndarray:
    """Recover ds from dz: ``ds = -Z^{-1} S dz + mu Z^{-1} e - s``."""
    return -(it.s / it.z) * dz + it.mu / it.z - it.s


def compute_direction(ev: ProblemEval, it: IpmIterate) -> StepDirection:
    """Dense Newton direction from the slack-eliminated (3x3 block) system.

    The block matrix ``[[P, C^T, G^T], [C, -I/eta, 0], [G, 0, -(W + I/eta)]]``
    with ``W = Z^{-1} S`` is quasi-definite and factored without pivoting.
    """
    n, m, p = ev.grad_f.size, ev.c_val.size, ev.g_val.size
    inv_eta = 1.0 / it.eta
    w = it.s / it.z
    K = np.zeros((n + m + p, n + m + p))
    K[:n, :n] = ev.P_hess
    K[n:n + m, :n] = ev.C_jac
    K[:n, n:n + m] = ev.C_jac.T
    K[n + m:, :n] = ev.G_jac
    K[:n, n + m:] = ev.G_jac.T
    K[n:n + m, n:n + m] = -inv_eta * np.eye(m)
    K[n + m:, n + m:] = -np.diag(w + inv_eta)
    rhs = -np.concatenate([
        lagrangian_gradient(ev, it), ev.c_val, ev.g_val + it.mu / it.z,
    ])
    signs = np.concatenate([np.ones(n), -np.ones(m + p)])
    try:
        sol = qdldl_solve(qdldl_factor(symmetrize(K), signs), rhs)
    except (ZeroPivot, InertiaError) as exc:
        raise DegenerateKkt(str(exc)) from None
    dx, dy, dz = sol[:n], sol[n:n + m], sol[n + m:]
    return StepDirection(dx, slack_step(it, dz), dy, dz)


def directional_derivative(ev: ProblemEval, it: IpmIterate, d: StepDirection) -> float:
    """Closed-form slope of the augmented barrier-Lagrangian along (dx, ds).

    Valid when ``d`` solves the Newton system at ``(ev, it)``:
    ``-dx^T P dx - ds^T S^{-1} Z ds - eta (|C dx|^2 + |G dx + ds|^2)``.
    """
    Cdx = ev.C_jac @ d.dx
    r = ev.G_jac @ d.dx + d.ds
    quad = float(d.dx @ ev.P_hess @ d.dx) + float(d.ds @ ((it.z / it.s) * d.ds))
    return -quad - it.eta * (float(Cdx @ Cdx) + float(r @ r))


def fraction_to_boundary(v: np.ndarray, dv: np.ndarray, tau: float) -> float:
    """Largest alpha in (0, 1] with ``v + alpha dv >= (1 - tau) v``."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def line_search(
    merit: Callable[[np.ndarray, np.ndarray], float],
    it: IpmIterate,
    d: StepDirection,
    slope: float,
    settings: IpmSettings,
    merit0: Optional[float] = None,
) -> Tuple[float, float, int]:
    """Armijo backtracking on ``merit(x, s)`` capped by the fraction-to-boundary rule.

    Returns ``(alpha_primal, alpha_dual, backtracks)``.
    """
    if slope >= 0:
        raise LineSearchFailed(f"not a descent direction (slope {slope:.3e})")
    a0 = merit(it.x, it.s) if merit0 is None else merit0
    alpha = fraction_to_boundary(it.s, d.ds, settings.tau_ftb)
    alpha_dual = fraction_to_boundary(it.z, d.dz, settings.tau_ftb)
    for k in range(MAX_BACKTRACKS + 1):
        trial = merit(it.x + alpha * d.dx, it.s + alpha * d.ds)
        if np.isfinite(trial) and trial <= a0 + settings.armijo_c * alpha * slope:
            return alpha, alpha_dual, k
        alpha *= settings.backtrack
    raise LineSearchFailed(f"no sufficient decrease after {MAX_BACKTRACKS} backtracks")


# -- parameter schedule ------------------------------------------------------

def update_parameters(
    it: IpmIterate,
    barrier_residual: float,
    feasibility_history: List[float],
    settings: IpmSettings,
) -> Tuple[float, float]:
    """Barrier and penalty updates.

    mu shrinks superlinearly once the barrier subproblem is solved to ``10 mu``.
    eta grows when feasibility improved by less than 10% over the last 5 iterates.
    """
    mu, eta = it.mu, it.eta
    if barrier_residual <= BARRIER_UPDATE_KAPPA * mu:
        mu = max(settings.mu_min, min(settings.kappa_mu * mu, mu ** settings.theta_mu))
    h = feasibility_history
    if len(h) > ETA_WINDOW and h[-1] > ETA_STAGNATION * h[-1 - ETA_WINDOW]:
        eta = min(settings.eta_max, settings.kappa_eta * eta)
    return mu, eta


# -- driver ------------------------------------------------------------------

class NlpAdapter:
    """Problem interface consumed by :func:`ipm_solve`.

    Subclasses provide ``x0``, ``values`` and ``evaluate``; ``direction`` may be
    overridden with a structure-exploiting linear solve.
    """

    x0: np.ndarray

    def values(self, x: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def evaluate(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> ProblemEval:
        raise NotImplementedError

    def direction(self, ev: ProblemEval, it: IpmIterate) -> StepDirection:
        return compute_direction(ev, it)


class DenseProblem(NlpAdapter):
    """Callback-based dense NLP.

    ``hess(x, y, z)`` should approximate the Lagrangian Hessian; it is shifted
    to positive definiteness before use. Constraint callbacks default to none.
    """

    def __init__(self, x0, f, grad, hess, c=None, jac_c=None, g=None, jac_g=None):
        self.x0 = np.asarray(x0, dtype=np.float64).ravel()
        n = self.x0.size
        self._f, self._grad, self._hess = f, grad, hess
        self._c = c or (lambda x: np.zeros(0))
        self._jc = jac_c or (lambda x: np.zeros((0, n)))
        self._g = g or (lambda x: np.zeros(0))
        self._jg = jac_g or (lambda x: np.zeros((0, n)))

    def values(self, x):
        return (float(self._f(x)), np.atleast_1d(np.asarray(self._c(x), float)),
                np.atleast_1d(np.asarray(self._g(x), float)))

    def evaluate(self, x, y, z):
        f, c, g = self.values(x)
        n = x.size
        P, _ = convexify(np.asarray(self._hess(x, y, z), float).reshape(n, n))
        return ProblemEval(
            f=f, grad_f=np.asarray(self._grad(x), float).ravel(),
            c_val=c, C_jac=np.asarray(self._jc(x), float).reshape(c.size, n),
            g_val=g, G_jac=np.asarray(self._jg(x), float).reshape(g.size, n),
            P_hess=P,
        )


@dataclass
class KktResiduals:
    stationarity: float
    equality: float
    inequality: float
    complementarity: float
    barrier_complementarity: float

    @property
    def kkt(self) -> float:
        return max(self.stationarity, self.equality, self.inequality, self.complementarity)

    @property
    def barrier(self) -> float:
        return max(self.stationarity, self.equality, self.inequality,
                   self.barrier_complementarity)

    @property
    def feasibility(self) -> float:
        return max(self.equality, self.inequality)


def kkt_residuals(ev: ProblemEval, it: IpmIterate) -> KktResiduals:
    sz = it.s * it.z
    return KktResiduals(
        stationarity=_inf(lagrangian_gradient(ev, it)),
        equality=_inf(ev.c_val),
        inequality=_inf(ev.g_val + it.s),
        complementarity=_inf(sz),
        barrier_complementarity=_inf(sz - it.mu),
    )


@dataclass
class IterationLog:
    iteration: int
    mu: float
    eta: float
    kkt_residual: float
    feasibility: float
    merit: float
    merit_new: float
    slope: float
    step_norm: float
    alpha_primal: float
    alpha_dual: float
    backtracks: int


@dataclass
class SolveReport:
    status: Status
    iterations: int
    kkt_residual: float
    residuals: Optional[KktResiduals] = None
    history: List[IterationLog] = field(default_factory=list)
    message: str = ""

    @property
    def success(self) -> bool:
        return self.status in (Status.CONVERGED, Status.ALMOST_CONVERGED)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "residuals": asdict(self.residuals) if self.residuals else None,
            "message": self.message,
            "history": [asdict(h) for h in self.history],
        }


def initial_iterate(adapter: NlpAdapter, settings: IpmSettings) -> IpmIterate:
    x = np.array(adapter.x0, dtype=np.float64)
    _, c, g = adapter.values(x)
    s = np.maximum(-g, 1e-2)
    return IpmIterate(x=x, s=s, y=np.zeros(c.size), z=settings.mu0 / s,
                      mu=settings.mu0, eta=settings.eta0)


def ipm_solve(
    adapter: NlpAdapter,
    settings: Optional[IpmSettings] = None,
    callback: Optional[Callable[[int, ProblemEval, IpmIterate, StepDirection, float], None]] = None,
    iterate: Optional[IpmIterate] = None,
) -> Tuple[IpmIterate, SolveReport]:
    """Run the regularized IPM.

    ``callback(k, ev, it, d, slope)`` is invoked after each direction is
    computed, before the step is taken.
    """
    settings = settings or IpmSettings()
    it = iterate.copy() if iterate is not None else initial_iterate(adapter, settings)
    has_ineq = it.s.size > 0

    def merit_at(params: IpmIterate):
        def merit(x, s):
            f, c, g = adapter.values(x)
            return merit_terms(f, c, g, s, params.y, params.z, params.mu, params.eta)
        return merit

    history: List[IterationLog] = []
    feas: List[float] = []
    status = Status.MAX_ITERS
    message = ""
    ev = adapter.evaluate(it.x, it.y, it.z)
    res = kkt_residuals(ev, it)
    k = 0
    while True:
        barrier_done = not has_ineq or it.mu <= 10.0 * settings.mu_min
        if res.kkt <= settings.tol_kkt and barrier_done:
            status = Status.CONVERGED
            break
        if (k >= 0.9 * settings.max_iters and res.kkt <= 10.0 * settings.tol_kkt
                and barrier_done):
            status = Status.ALMOST_CONVERGED
            break
        if k >= settings.max_iters:
            break

        feas.append(res.feasibility)
        mu, eta = update_parameters(it, res.barrier, feas, settings)
        if not has_ineq:
            mu = settings.mu_min
        if eta != it.eta:
            feas.clear()
        it.mu, it.eta = mu, eta

        d = adapter.direction(ev, it)
        slope = directional_derivative(ev, it, d)
        if callback is not None:
            callback(k, ev, it, d, slope)
        merit = merit_at(it)
        a0 = merit(it.x, it.s)
        if d.primal_norm() <= 1e-14 * (1.0 + np.linalg.norm(it.x)) or slope >= 0:
            # converged primal; take the dual step only
            ap = fraction_to_boundary(it.s, d.ds, settings.tau_ftb)
            ad, bt = fraction_to_boundary(it.z, d.dz, settings.tau_ftb), 0
        else:
            try:
                ap, ad, bt = line_search(merit, it, d, slope, settings, merit0=a0)
            except LineSearchFailed as exc:
                status, message = Status.LINE_SEARCH_FAILED, str(exc)
                log.warning("iteration %d: %s", k, exc)
                break
        new = IpmIterate(
            x=it.x + ap * d.dx, s=it.s + ap * d.ds, y=it.y + ap * d.dy,
            z=it.z + ad * d.dz, mu=it.mu, eta=it.eta,
        )
        a1 = merit(new.x, new.s)
        history.append(IterationLog(
            iteration=k, mu=it.mu, eta=it.eta, kkt_residual=res.kkt,
            feasibility=res.feasibility, merit=a0, merit_new=a1, slope=slope,
            step_norm=d.primal_norm(), alpha_primal=ap, alpha_dual=ad, backtracks=bt,
        ))
        log.debug("it %3d kkt %.2e mu %.1e eta %.1e alpha %.3f", k, res.kkt, it.mu, it.eta, ap)
        it = new
        k += 1
        ev = adapter.evaluate(it.x, it.y, it.z)
        res = kkt_residuals(ev, it)

    report = SolveReport(status=status, iterations=k, kkt_residual=res.kkt,
                         residuals=res, history=history, message=message)
    return it, report
