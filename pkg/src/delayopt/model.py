"""Problem description, piecewise trajectories and the breakpoint mesh."""

from __future__ import annotations

import itertools
import math
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import OutOfDomain, ProblemError

SIDES = ("left", "right", "auto")


# ------------------------------------------------------------------ fields


class LinearField:
    """``f(x) = M x``."""

    def __init__(self, matrix):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.dim = self.matrix.shape[0]

    def __call__(self, x):
        return self.matrix @ x

    def jacobian(self, x):
        return self.matrix

    def hessian_action(self, x, v, w):
        return np.zeros(self.dim)


class ZeroField(LinearField):
    def __init__(self, dim):
        super().__init__(np.zeros((dim, dim)))


class TimeFunction:
    """Vector function of time with up to two derivatives.

    ``value``, ``first`` and ``second`` are callables of ``t``; missing
    derivatives raise when requested.
    """

    def __init__(self, value, first=None, second=None):
        self._parts = (value, first, second)

    def __call__(self, t, order=0):
        fn = self._parts[order]
        if fn is None:
            raise ValueError(f"derivative of order {order} not provided")
        return np.atleast_1d(np.asarray(fn(t), dtype=float))

    @classmethod
    def constant(cls, c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        z = np.zeros_like(c)
        return cls(lambda t: c, lambda t: z, lambda t: z)


# ----------------------------------------------------------------- problem


@dataclass(frozen=True, eq=False)
class DelayProblem:
    """``x' + f(x) = sum_l A_l x(t - tau_l) + g(t)`` on ``(0, T]``, ``x = phi`` on ``[-b, 0]``.

    ``rhs_f`` must be callable and expose ``jacobian(x)`` and
    ``hessian_action(x, v, w)``.  ``history`` and ``forcing`` take
    ``(t, order)``; ``target`` takes ``t``.
    """

    delay_matrices: tuple
    delays: np.ndarray
    delay_bound: float
    horizon: float
    rhs_f: object
    history: Callable
    forcing: Callable
    target: Callable
    monotonicity_lambda: Optional[float] = None

    def __post_init__(self):
        mats = tuple(np.atleast_2d(np.asarray(A, dtype=float)) for A in self.delay_matrices)
        object.__setattr__(self, "delay_matrices", mats)
        object.__setattr__(self, "delays", np.atleast_1d(np.asarray(self.delays, dtype=float)))
        object.__setattr__(self, "delay_bound", float(self.delay_bound))
        object.__setattr__(self, "horizon", float(self.horizon))
        self.validate()

    @property
    def dim(self) -> int:
        return self.delay_matrices[0].shape[0]

    @property
    def num_delays(self) -> int:
        return len(self.delay_matrices)

    def validate(self):
        n = self.dim
        if not self.delay_matrices:
            raise ProblemError("at least one delay matrix is required")
        for k, A in enumerate(self.delay_matrices):
            if A.shape != (n, n):
                raise ProblemError(f"delay matrix {k + 1} has shape {A.shape}, expected {(n, n)}")
        if self.delays.shape != (self.num_delays,):
            raise ProblemError(f"{self.num_delays} matrices but {self.delays.size} delays")
        if not (self.delay_bound > 0 and math.isfinite(self.delay_bound)):
            raise ProblemError("delay_bound must be positive")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ProblemError("horizon must be positive")
        check_delays(self.delays, self.delay_bound)
        if self.monotonicity_lambda is not None and self.monotonicity_lambda < 0:
            raise ProblemError("monotonicity_lambda must be non-negative")
        probe = np.asarray(self.history(0.0, 0), dtype=float)
        if probe.shape != (n,):
            raise ProblemError(f"history returns shape {probe.shape}, expected {(n,)}")

    def with_delays(self, delays) -> "DelayProblem":
        return replace(self, delays=np.atleast_1d(np.asarray(delays, dtype=float)))

    # convenience evaluators
    def f(self, x):
        return np.asarray(self.rhs_f(x), dtype=float)

    def df(self, x):
        return np.atleast_2d(np.asarray(self.rhs_f.jacobian(x), dtype=float))

    def d2f(self, x, v, w):
        return np.asarray(self.rhs_f.hessian_action(x, v, w), dtype=float)


def check_delays(delays, bound):
    d = np.asarray(delays, dtype=float)
    if np.any(~np.isfinite(d)):
        raise ProblemError("delays must be finite")
    if np.any(d < 0) or np.any(d > bound):
        raise ProblemError(f"delays {d.tolist()} outside [0, {bound}]")
    if d.size > 1 and np.any(np.diff(d) <= 0):
        raise ProblemError(f"delays {d.tolist()} must be strictly increasing")


# -------------------------------------------------------------------- mesh


@dataclass(frozen=True)
class BreakpointMesh:
    depth: int
    points: tuple

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def delay_combinations(delays, max_order, upper):
    """Values ``sum_l k_l tau_l`` with ``sum_l k_l <= max_order`` lying in ``[0, upper]``, with their order."""
    pos = [float(t) for t in delays if t > 0]
    out = {}
    for ks in itertools.product(range(max_order + 1), repeat=len(pos)):
        order = sum(ks)
        if order > max_order:
            continue
        v = math.fsum(k * t for k, t in zip(ks, pos))
        if v <= upper * (1 + 1e-12):
            out[v] = min(order, out.get(v, order))
    return out


def dedup(values, tol):
    result = []
    for v in sorted(values):
        if result and v - result[-1] <= tol:
            continue
        result.append(v)
    return result


def build_breakpoint_mesh(problem: DelayProblem, depth: int) -> BreakpointMesh:
    if depth < 0:
        raise ValueError("depth must be non-negative")
    T = problem.horizon
    combos = delay_combinations(problem.delays, depth + 1, T)
    pts = dedup([0.0, T, *[min(v, T) for v in combos]], 1e-12 * T)
    pts[-1] = T
    return BreakpointMesh(depth, tuple(pts))


# -------------------------------------------------------------- trajectory


def _flip(side):
    return {"left": "right", "right": "left"}.get(side, side)


def hermite(t, a, b, y0, y1, d0, d1):
    h = b - a
    s = (t - a) / h
    s2 = s * s
    s3 = s2 * s
    return (
        (2 * s3 - 3 * s2 + 1) * y0
        + (s3 - 2 * s2 + s) * h * d0
        + (-2 * s3 + 3 * s2) * y1
        + (s3 - s2) * h * d1
    )


def hermite_derivative(t, a, b, y0, y1, d0, d1):
    h = b - a
    s = (t - a) / h
    s2 = s * s
    return (
        (6 * s2 - 6 * s) / h * y0
        + (3 * s2 - 4 * s + 1) * d0
        + (-6 * s2 + 6 * s) / h * y1
        + (3 * s2 - 2 * s) * d1
    )


class Trajectory:
    """Piecewise cubic-Hermite function on ``[t_start, t_end]``.

    The part left of ``t0`` is given analytically by ``history(t, order)``.
    Right of ``t0`` the function is stored per step as endpoint values and
    one-sided endpoint derivatives.  Interior derivatives come from the
    ``deriv``/``deriv2`` callbacks ``(t, y, side) -> vector`` when present,
    so they inherit the accuracy of the governing equation rather than of the
    cubic.  Interior nodes are right-continuous under ``side="auto"``.
    """

    def __init__(self, history, t_start, t0, dim, *, deriv=None, deriv2=None):
        self.history = history
        self.t_start = float(t_start)
        self.t0 = float(t0)
        self.dim = dim
        self.deriv = deriv
        self.deriv2 = deriv2
        self.nodes = [self.t0]
        self._ys = []  # value at segment start (right limit)
        self._ye = []  # value at segment end (left limit)
        self._ds = []
        self._de = []
        self.breakpoints: tuple = ()
        self.jumps: dict = {}
        self.derivative_jumps: dict = {}
        self._frozen = False
        self._tol = 1e-12
        self._memo = {}

    # -- construction (used by the integrator only)
    def _append(self, t1, y0, y1, d0, d1):
        if self._frozen:
            raise RuntimeError("trajectory is frozen")
        self.nodes.append(float(t1))
        self._ys.append(y0)
        self._ye.append(y1)
        self._ds.append(d0)
        self._de.append(d1)
        self._tol = 1e-12 * max(1.0, abs(self.t_start), abs(t1))

    def _freeze(self, breakpoints=None, jumps=None, derivative_jumps=None):
        if breakpoints is not None:
            self.breakpoints = tuple(breakpoints)
        if jumps is not None:
            self.jumps = dict(jumps)
        if derivative_jumps is not None:
            self.derivative_jumps = dict(derivative_jumps)
        self._memo.clear()
        self._frozen = True

    @property
    def t_end(self):
        return self.nodes[-1]

    @property
    def num_segments(self):
        return len(self._ys)

    def segment(self, k):
        return (self.nodes[k], self.nodes[k + 1], self._ys[k], self._ye[k], self._ds[k], self._de[k])

    # -- evaluation
    def _locate(self, t, side):
        """Return ``(segment, where)`` with ``where`` in {"start", "end", "inside"}; segment -1 means history."""
        nodes = self.nodes
        last = len(nodes) - 1
        tol = self._tol
        j = bisect_left(nodes, t - tol)
        if j <= last and abs(nodes[j] - t) <= tol:
            use_left = side == "left" or (side == "auto" and j == last and last > 0)
            if use_left or j == last:
                if j == 0:
                    return -1, "end"
                return j - 1, "end"
            return j, "start"
        if j == 0:
            return -1, "inside"
        if j > last:
            raise OutOfDomain(f"t={t} beyond t_end={nodes[-1]}")
        return j - 1, "inside"

    def eval(self, t, side="auto", order=0):
        if not self._frozen:
            return self._eval(float(t), side, order)
        # pure once frozen; solves and quadratures revisit the same points
        key = (t, side, order)
        v = self._memo.get(key)
        if v is None:
            v = self._memo[key] = self._eval(float(t), side, order)
        return v

    def _eval(self, t, side, order):
        if t < self.t_start - self._tol or t > self.t_end + self._tol:
            raise OutOfDomain(f"t={t} outside [{self.t_start}, {self.t_end}]")
        k, where = self._locate(t, side)
        if k < 0:
            return np.asarray(self.history(max(t, self.t_start) if t < self.t0 else self.t0, order), dtype=float)
        a = self.nodes[k]
        b = self.nodes[k + 1]
        if where == "start":
            if order == 0:
                return self._ys[k]
            if order == 1:
                return self._ds[k]
            return self._second(a, self._ys[k], "right")
        if where == "end":
            if order == 0:
                return self._ye[k]
            if order == 1:
                return self._de[k]
            return self._second(b, self._ye[k], "left")
        y = hermite(t, a, b, self._ys[k], self._ye[k], self._ds[k], self._de[k])
        if order == 0:
            return y
        if order == 1:
            if self.deriv is not None:
                return self.deriv(t, y, "auto")
            return hermite_derivative(t, a, b, self._ys[k], self._ye[k], self._ds[k], self._de[k])
        return self._second(t, y, "auto")

    def _second(self, t, y, side):
        if self.deriv2 is None:
            raise ValueError("second time derivative not available for this trajectory")
        return self.deriv2(t, y, side)

    def eval_left(self, t, order=0):
        return self.eval(t, "left", order)

    def eval_right(self, t, order=0):
        return self.eval(t, "right", order)

    def __call__(self, t, side="auto", order=0):
        return self.eval(t, side, order)

    def jump_at(self, t):
        for s, J in self.jumps.items():
            if abs(s - t) <= self._tol:
                return J
        return np.zeros(self.dim)

    def sample(self, times, side="auto", order=0):
        return np.array([self.eval(t, side, order) for t in times])


class ReversedTrajectory:
    """View ``p(t) = q(T - t)`` of a trajectory ``q`` integrated in reversed time."""

    def __init__(self, base: Trajectory, horizon: float):
        self.base = base
        self.horizon = float(horizon)
        self.dim = base.dim
        self.t_start = self.horizon - base.t_end
        self.t_end = self.horizon - base.t_start
        self.nodes = [self.horizon - s for s in reversed(base.nodes)]
        self.breakpoints = tuple(sorted(self.horizon - s for s in base.breakpoints))
        self.jumps = {self.horizon - s: -J for s, J in base.jumps.items()}

    def eval(self, t, side="auto", order=0):
        if side == "auto":
            # right-continuous in forward time, except at the right end
            side = "left" if abs(t - self.t_end) <= 1e-12 * max(1.0, abs(self.t_end)) else "right"
        v = self.base.eval(self.horizon - t, _flip(side), order)
        return -v if order == 1 else v

    def eval_left(self, t, order=0):
        return self.eval(t, "left", order)

    def eval_right(self, t, order=0):
        return self.eval(t, "right", order)

    def __call__(self, t, side="auto", order=0):
        return self.eval(t, side, order)

    def jump_at(self, t):
        for s, J in self.jumps.items():
            if abs(s - t) <= 1e-12 * max(1.0, abs(self.t_end)):
                return J
        return np.zeros(self.dim)

    def sample(self, times, side="auto", order=0):
        return np.array([self.eval(t, side, order) for t in times])


def eval_trajectory(traj, t, side="auto", deriv_order=0):
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    if deriv_order not in (0, 1, 2):
        raise ValueError("deriv_order must be 0, 1 or 2")
    return traj.eval(t, side, deriv_order)
