"""Forward sensitivities of the state with respect to the delays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .integrator import IntegratorConfig, build_grid, integrate, solve_state
from .model import DelayProblem, Trajectory


def zero_history(dim):
    z = np.zeros(dim)

    def history(t, order=0):
        return z

    return history


class StateCache:
    """Memoized ``x(t)``, ``Df(x(t))`` along a solved state.

    Every sensitivity and adjoint solve visits the same grid and stage
    times, so caching the Jacobian avoids recomputing it per solve.
    """

    def __init__(self, problem: DelayProblem, state: Trajectory):
        self.problem = problem
        self.state = state
        self._x = {}
        self._jac = {}

    def x(self, t):
        v = self._x.get(t)
        if v is None:
            v = self._x[t] = self.state.eval(t)
        return v

    def jac(self, t):
        J = self._jac.get(t)
        if J is None:
            J = self._jac[t] = self.problem.df(self.x(t))
        return J


def _cache(problem, state, cache):
    if cache is None or cache.state is not state:
        return StateCache(problem, state)
    return cache


def first_order(problem: DelayProblem, state: Trajectory, i: int = 0, cfg: IntegratorConfig | None = None,
                cache: StateCache | None = None) -> Trajectory:
    """``w = dx/dtau_i``: ``w' + Df(x) w = sum_l A_l w(t - tau_l) - A_i x'(t - tau_i)``, ``w = 0`` for ``t <= 0``."""
    cfg = cfg or IntegratorConfig()
    cfg.validate(problem)
    cache = _cache(problem, state, cache)
    grid, marks = build_grid(problem, cfg)
    mats = problem.delay_matrices
    Ai = mats[i]
    ti = float(problem.delays[i])

    def rhs(t, w, lag, side):
        out = -(cache.jac(t) @ w) - Ai @ state.eval(t - ti, side, 1)
        for A, z in zip(mats, lag):
            out = out + A @ z
        return out

    traj = integrate(grid, zero_history(problem.dim), rhs, problem.delays, problem.dim,
                     marks=marks, t_start=-problem.delay_bound)
    traj._freeze(breakpoints=[m for m in marks[1:-1]])
    return traj


def mixed_second(problem: DelayProblem, state: Trajectory, first_i: Trajectory, first_k: Trajectory,
                 i: int, k: int, cfg: IntegratorConfig | None = None,
                 cache: StateCache | None = None) -> Trajectory:
    """``v = d^2 x / dtau_k dtau_i`` with the impulse at ``tau_i`` realized as a value jump.

    ``v' + Df(x) v + D2f(x)(w_k, w_i) = sum_l A_l v(t - tau_l) - A_k w_i'(t - tau_k)
    - A_i w_k'(t - tau_i) + [i == k] A_i x''(t - tau_i)``, and for ``i == k``
    the jump ``A_i (x'(0+) - phi'(0))`` at ``t = tau_i``.
    """
    cfg = cfg or IntegratorConfig()
    cfg.validate(problem)
    cache = _cache(problem, state, cache)
    grid, marks = build_grid(problem, cfg)
    mats = problem.delay_matrices
    Ai, Ak = mats[i], mats[k]
    ti, tk = float(problem.delays[i]), float(problem.delays[k])
    diagonal = i == k
    d2f = problem.d2f
    T = problem.horizon

    def rhs(t, v, lag, side):
        x = cache.x(t)
        out = (-(cache.jac(t) @ v) - d2f(x, first_k.eval(t), first_i.eval(t))
               - Ak @ first_i.eval(t - tk, side, 1) - Ai @ first_k.eval(t - ti, side, 1))
        if diagonal:
            out = out + Ai @ state.eval(t - ti, side, 2)
        for A, z in zip(mats, lag):
            out = out + A @ z
        return out

    jumps = {}
    if diagonal and ti < T * (1 - 1e-12):
        jumps[ti] = impulse_jump(problem, state, i)
    traj = integrate(grid, zero_history(problem.dim), rhs, problem.delays, problem.dim,
                     jumps=jumps, marks=marks, t_start=-problem.delay_bound)
    traj._freeze(breakpoints=[m for m in marks[1:-1]])
    return traj


def second_order(problem: DelayProblem, state: Trajectory, first: Trajectory, i: int = 0,
                 cfg: IntegratorConfig | None = None, cache: StateCache | None = None) -> Trajectory:
    """``d^2 x / dtau_i^2``; one recorded jump at ``t = tau_i``."""
    return mixed_second(problem, state, first, first, i, i, cfg, cache)


def impulse_jump(problem: DelayProblem, state: Trajectory, i: int = 0):
    """``A_i (x'(0+) - phi'(0))``, zero exactly when the data are compatible."""
    xdot0 = state.eval(0.0, "right", 1)
    return problem.delay_matrices[i] @ (xdot0 - np.asarray(problem.history(0.0, 1), dtype=float))


@dataclass
class SensitivityBundle:
    state: Trajectory
    first: list
    second: dict = field(default_factory=dict)

    def mixed(self, i, k):
        return self.second[(min(i, k), max(i, k))]


def compute_sensitivities(problem: DelayProblem, cfg: IntegratorConfig | None = None, *,
                          second: bool = True, state: Trajectory | None = None) -> SensitivityBundle:
    """State, all first partials and (optionally) the upper triangle of second partials."""
    cfg = cfg or IntegratorConfig()
    state = state or solve_state(problem, cfg)
    cache = StateCache(problem, state)
    m = problem.num_delays
    firsts = [first_order(problem, state, i, cfg, cache) for i in range(m)]
    bundle = SensitivityBundle(state, firsts)
    if second:
        for i in range(m):
            for k in range(i, m):
                bundle.second[(i, k)] = mixed_second(problem, state, firsts[i], firsts[k], i, k, cfg, cache)
    return bundle
