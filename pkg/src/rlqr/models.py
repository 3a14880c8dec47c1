"""Built-in benchmark problems with hand-coded Jacobians."""
from __future__ import annotations

import numpy as np

from .ocp import OcpDefinition


def _quadratic_cost(Q: np.ndarray, R: np.ndarray, x_ref: np.ndarray):
    nx, nu = Q.shape[0], R.shape[0]
    M = np.zeros((nx, nu))

    def cost(i, x, u):
        e = x - x_ref
        return 0.5 * (e @ Q @ e + u @ R @ u), Q @ e, R @ u, Q, M, R

    return cost


def _terminal_quadratic(QN: np.ndarray, x_ref: np.ndarray):
    def terminal(x):
        e = x - x_ref
        return 0.5 * e @ QN @ e, QN @ e, QN

    return terminal


def _control_box(nx: int, u_max: np.ndarray):
    """``u - u_max <= 0`` and ``-u - u_max <= 0``."""
    nu = u_max.size
    Gx = np.zeros((2 * nu, nx))
    Gu = np.vstack([np.eye(nu), -np.eye(nu)])

    def ineq(i, x, u):
        return np.concatenate([u - u_max, -u - u_max]), Gx, Gu

    return ineq


def double_integrator(N: int = 20, dt: float = 0.1, x0=(5.0, 0.0), u_max: float = 1.0,
                      q: float = 1.0, r: float = 0.1, q_terminal: float = 10.0) -> OcpDefinition:
    """Position/velocity point mass driven to the origin under ``|u| <= u_max``."""
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.5 * dt * dt], [dt]])

    def dynamics(i, x, u):
        return A @ x + B @ u, A, B

    ref = np.zeros(2)
    return OcpDefinition(
        N=N, nx=2, nu=1, s0=np.asarray(x0, dtype=float),
        dynamics=dynamics,
        cost=_quadratic_cost(q * np.eye(2), r * np.eye(1), ref),
        terminal_cost=_terminal_quadratic(q_terminal * np.eye(2), ref),
        ineq=_control_box(2, np.array([u_max])),
    )


def unicycle_dynamics(dt: float):
    def dynamics(i, x, u):
        px, py, th = x
        v, w = u
        c, s = np.cos(th), np.sin(th)
        d = np.array([px + dt * v * c, py + dt * v * s, th + dt * w])
        A = np.array([[1.0, 0.0, -dt * v * s], [0.0, 1.0, dt * v * c], [0.0, 0.0, 1.0]])
        B = np.array([[dt * c, 0.0], [dt * s, 0.0], [0.0, dt]])
        return d, A, B

    return dynamics


def unicycle(N: int = 30, dt: float = 0.1, x0=(0.0, 0.0, 0.0), target=(1.0, 1.0),
             v_max: float = 2.0, w_max: float = 3.0, r: float = 0.1,
             q: float = 1e-2) -> OcpDefinition:
    """Unicycle steered to a terminal position (equality) with bounded speed and turn rate."""
    target = np.asarray(target, dtype=float)
    ref = np.array([target[0], target[1], 0.0])
    Q = q * np.eye(3)
    Q[2, 2] = 0.0
    Q += 1e-6 * np.eye(3)

    def terminal_eq(x):
        Cx = np.zeros((2, 3))
        Cx[0, 0] = Cx[1, 1] = 1.0
        return x[:2] - target, Cx

    return OcpDefinition(
        N=N, nx=3, nu=2, s0=np.asarray(x0, dtype=float),
        dynamics=unicycle_dynamics(dt),
        cost=_quadratic_cost(Q, r * np.eye(2), ref),
        terminal_cost=_terminal_quadratic(Q, ref),
        ineq=_control_box(3, np.array([v_max, w_max])),
        terminal_eq=terminal_eq,
    )


def unicycle_initial_guess(ocp: OcpDefinition, v: float = 0.5, w: float = 0.5):
    """Open-loop rollout with constant controls."""
    us = [np.array([v, w]) for _ in range(ocp.N)]
    xs = [ocp.s0.copy()]
    for i, u in enumerate(us):
        xs.append(ocp.dynamics(i, xs[-1], u)[0])
    return xs, us


MODELS = {"double-integrator": double_integrator, "unicycle": unicycle}
