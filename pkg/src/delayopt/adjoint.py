"""Backward adjoint equation and its delay derivative, solved by time reversal.

With ``s = T - t`` and ``q(s) = p(T - s)`` the advanced arguments
``p(t + tau_l)`` become delayed arguments ``q(s - tau_l)``, and the zero
tail of ``p`` on ``[T, T + b]`` becomes a zero history, so the forward
integrator is reused unchanged.  The grid from ``build_grid`` is symmetric
under the reflection, so forward and adjoint solves share step endpoints.
"""

from __future__ import annotations

import numpy as np

from .integrator import IntegratorConfig, build_grid, integrate
from .model import DelayProblem, ReversedTrajectory, Trajectory
from .sensitivity import StateCache, _cache, zero_history


class AdjointTrajectory(ReversedTrajectory):
    """``p`` on ``[0, T + b]``; identically zero on ``[T, T + b]``.

    ``derivative`` optionally holds ``dp/dtau_i`` as another adjoint trajectory.
    """

    def __init__(self, base: Trajectory, horizon: float, derivative=None):
        super().__init__(base, horizon)
        self.derivative = derivative
        self._zero = np.zeros(self.dim)

    def eval(self, t, side="auto", order=0):
        T = self.horizon
        tol = 1e-12 * max(1.0, T)
        if t > T + tol and t <= self.t_end + tol:
            return self._zero
        if abs(t - T) <= tol:
            if side == "left":
                return super().eval(T, side, order)
            return self._zero
        return super().eval(t, side, order)


def _reversed_grid(problem, cfg):
    grid, marks = build_grid(problem, cfg)
    T = problem.horizon
    # reflect exactly; the grid is symmetric up to rounding
    rgrid = [0.0] + [T - t for t in reversed(grid[1:-1])] + [T]
    rmarks = [0.0] + [T - t for t in reversed(marks[1:-1])] + [T]
    return rgrid, rmarks


def _tside(side):
    return {"left": "right", "right": "left"}.get(side, "auto")


def solve_adjoint(problem: DelayProblem, state: Trajectory, cfg: IntegratorConfig | None = None,
                  cache: StateCache | None = None, residual_scale: float = 1.0) -> AdjointTrajectory:
    """``-p' + Df(x)^T p = sum_l A_l^T p(t + tau_l) + x - x_d`` on ``[0, T)``, ``p = 0`` on ``[T, T + b]``."""
    cfg = cfg or IntegratorConfig()
    cfg.validate(problem)
    cache = _cache(problem, state, cache)
    T = problem.horizon
    mats_t = [A.T for A in problem.delay_matrices]
    target = problem.target
    grid, marks = _reversed_grid(problem, cfg)

    def rhs(s, q, lag, side):
        t = T - s
        x = cache.x(t)
        out = -(cache.jac(t).T @ q) + residual_scale * (x - np.asarray(target(t), dtype=float))
        for At, z in zip(mats_t, lag):
            out = out + At @ z
        return out

    base = integrate(grid, zero_history(problem.dim), rhs, problem.delays, problem.dim,
                     marks=marks, t_start=-problem.delay_bound)
    base._freeze(breakpoints=marks[1:-1])
    return AdjointTrajectory(base, T)


def solve_adjoint_derivative(problem: DelayProblem, state: Trajectory, first: Trajectory,
                             adjoint: AdjointTrajectory, cfg: IntegratorConfig | None = None, i: int = 0,
                             cache: StateCache | None = None) -> AdjointTrajectory:
    """``r = dp/dtau_i`` from the differentiated adjoint equation.

    ``-r' + Df(x)^T r - sum_l A_l^T r(t + tau_l) = -c + A_i^T p'(t + tau_i) + dx/dtau_i``
    with ``c_j = <p, D2f(x)(e_j, dx/dtau_i)>`` and ``r = 0`` on ``[T, T + b]``.
    """
    cfg = cfg or IntegratorConfig()
    cfg.validate(problem)
    cache = _cache(problem, state, cache)
    T = problem.horizon
    n = problem.dim
    mats_t = [A.T for A in problem.delay_matrices]
    Ai_t = mats_t[i]
    ti = float(problem.delays[i])
    eye = np.eye(n)
    grid, marks = _reversed_grid(problem, cfg)

    def coupling(t, x):
        p = adjoint.eval(t)
        if not np.any(p):
            return np.zeros(n)
        wi = first.eval(t)
        return np.array([p @ problem.d2f(x, eye[j], wi) for j in range(n)])

    def rhs(s, r, lag, side):
        t = T - s
        x = cache.x(t)
        out = (-(cache.jac(t).T @ r) - coupling(t, x)
               + Ai_t @ adjoint.eval(t + ti, _tside(side), 1) + first.eval(t))
        for At, z in zip(mats_t, lag):
            out = out + At @ z
        return out

    base = integrate(grid, zero_history(n), rhs, problem.delays, n,
                     marks=marks, t_start=-problem.delay_bound)
    base._freeze(breakpoints=marks[1:-1])
    out = AdjointTrajectory(base, T)
    adjoint.derivative = out
    return out
