"""Method-of-steps RK4 integration of delay systems on a breakpoint-aligned grid."""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, NonFinite
from .model import DelayProblem, Trajectory, build_breakpoint_mesh, dedup, delay_combinations

STATE_MESH_DEPTH = 2


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings.

    ``base_step`` is an upper bound; steps shrink so that every mesh point of
    order ``mesh_depth + 1`` (forward from 0 and backward from T) is a step
    endpoint.
    """

    base_step: float = 1e-3
    scheme: str = "rk4"
    mesh_depth: int = 4

    def validate(self, problem: DelayProblem):
        h = self.base_step
        if self.scheme != "rk4":
            raise ConfigError(f"unsupported scheme {self.scheme!r}")
        if not (h > 0 and math.isfinite(h)):
            raise ConfigError("base_step must be positive")
        if h > problem.horizon:
            raise ConfigError(f"base_step {h} exceeds horizon {problem.horizon}")
        tmin = min_positive_delay(problem.delays)
        if tmin is not None and h > tmin * (1 + 1e-12):
            raise ConfigError(f"base_step {h} exceeds the smallest positive delay {tmin}")
        if self.mesh_depth < STATE_MESH_DEPTH:
            raise ConfigError(f"mesh_depth must be at least {STATE_MESH_DEPTH}")

    def adapted_to(self, delays) -> "IntegratorConfig":
        """Copy whose step respects the smallest positive delay in ``delays``."""
        tmin = min_positive_delay(delays)
        if tmin is None or self.base_step <= tmin:
            return self
        return replace(self, base_step=tmin)


def min_positive_delay(delays):
    pos = [float(t) for t in np.atleast_1d(delays) if t > 0]
    return min(pos) if pos else None


def build_grid(problem: DelayProblem, cfg: IntegratorConfig):
    """Step endpoints on ``[0, T]``.

    Contains every delay combination ``sum k_l tau_l`` of order up to
    ``mesh_depth + 1`` and its mirror ``T - sum k_l tau_l``, so the grid is
    symmetric under ``t -> T - t`` and serves forward and adjoint solves alike.
    """
    T = problem.horizon
    tol = 1e-12 * T
    combos = delay_combinations(problem.delays, cfg.mesh_depth + 1, T)
    marks = [0.0, T]
    for v in combos:
        if tol < v < T - tol:
            marks.append(v)
            marks.append(T - v)
    marks = dedup(marks, tol)
    marks[0], marks[-1] = 0.0, T
    grid = [0.0]
    h = cfg.base_step
    for a, b in zip(marks[:-1], marks[1:]):
        n = max(1, math.ceil((b - a) / h - 1e-9))
        for k in range(1, n):
            grid.append(a + (b - a) * k / n)
        grid.append(b)
    return grid, marks


def integrate(grid, history, rhs, delays, dim, *, jumps=None, marks=(), deriv2=None, t_start=None):
    """Classical RK4 over consecutive grid steps.

    ``rhs(t, y, lagged, side)`` gets ``lagged[l] = y(t - delays[l])`` read
    from the history or from completed steps; a zero delay passes the current
    stage value instead.  Stages at a step's left end use right limits of
    every lookup and stages at its right end use left limits.  ``jumps``
    maps grid times to value increments applied when a step starts there.
    """
    delays = [float(d) for d in delays]
    t0 = grid[0]
    traj = Trajectory(history, t0 - max(delays + [0.0]) if t_start is None else t_start, t0, dim)
    jumps = _snap_to_grid(jumps or {}, grid)
    marks = set(marks)

    def lagged(t, y, side):
        return [y if d == 0.0 else traj.eval(t - d, side) for d in delays]

    def f(t, y, side):
        return np.asarray(rhs(t, y, lagged(t, y, side), side), dtype=float)

    y = np.array(history(t0, 0), dtype=float)
    applied = {}
    if t0 in jumps:
        y = y + jumps[t0]
        applied[t0] = np.asarray(jumps[t0], dtype=float)
    k1 = None
    for a, b in zip(grid[:-1], grid[1:]):
        h = b - a
        m = a + 0.5 * h
        if k1 is None:
            k1 = f(a, y, "right")
        k2 = f(m, y + 0.5 * h * k1, "auto")
        k3 = f(m, y + 0.5 * h * k2, "auto")
        k4 = f(b, y + h * k3, "left")
        y1 = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y1)):
            raise NonFinite(f"solution left the floating-point range near t={b}")
        d1 = f(b, y1, "left")
        traj._append(b, y, y1, k1, d1)
        y = y1
        k1 = None
        if b in jumps:
            y = y + jumps[b]
            applied[b] = np.asarray(jumps[b], dtype=float)
        elif b not in marks:
            k1 = d1
    traj.deriv = f
    traj.deriv2 = deriv2
    traj._freeze(jumps=applied)
    return traj


def _snap_to_grid(jumps, grid):
    out = {}
    for tj, J in jumps.items():
        k = bisect_left(grid, tj)
        best = min((i for i in (k - 1, k) if 0 <= i < len(grid)), key=lambda i: abs(grid[i] - tj))
        if abs(grid[best] - tj) > 1e-9 * max(1.0, abs(tj)):
            raise ValueError(f"jump time {tj} is not a grid node")
        out[grid[best]] = np.asarray(J, dtype=float)
    return out


# ------------------------------------------------------------------ state


def solve_state(problem: DelayProblem, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Forward solution on ``[-b, T]``.

    ``x'`` is recorded from the right-hand side and ``x''`` from its time
    derivative ``-Df(x) x' + sum A_l x'(t - tau_l) + g'``.
    """
    cfg = cfg or IntegratorConfig()
    cfg.validate(problem)
    grid, marks = build_grid(problem, cfg)
    mats = problem.delay_matrices
    delays = problem.delays
    f, df, g = problem.f, problem.df, problem.forcing

    def rhs(t, y, lag, side):
        out = g(t, 0) - f(y)
        for A, z in zip(mats, lag):
            out = out + A @ z
        return out

    traj = integrate(
        grid, problem.history, rhs, delays, problem.dim,
        marks=marks, t_start=-problem.delay_bound,
    )

    def accel(t, y, side):
        xd = traj.deriv(t, y, side)
        out = g(t, 1) - df(y) @ xd
        for A, d in zip(mats, delays):
            out = out + A @ (xd if d == 0.0 else traj.eval(t - d, side, 1))
        return out

    traj.deriv2 = accel
    mesh = build_breakpoint_mesh(problem, STATE_MESH_DEPTH)
    jump0 = traj.eval(0.0, "right", 1) - np.asarray(problem.history(0.0, 1), dtype=float)
    traj._freeze(breakpoints=mesh.points[1:-1], derivative_jumps={0.0: jump0})
    return traj


@dataclass(frozen=True)
class CompatibilityReport:
    residual: np.ndarray
    compatible: bool


def check_compatibility(problem: DelayProblem, tol: float = 1e-10) -> CompatibilityReport:
    """Residual of ``phi'(0) = -f(phi(0)) + sum A_l phi(-tau_l) + g(0)``."""
    phi = problem.history
    rhs = problem.forcing(0.0, 0) - problem.f(phi(0.0, 0))
    for A, d in zip(problem.delay_matrices, problem.delays):
        rhs = rhs + A @ phi(-float(d), 0)
    residual = np.asarray(phi(0.0, 1), dtype=float) - rhs
    return CompatibilityReport(residual, bool(np.max(np.abs(residual)) <= tol))
