"""Closed-form reference solutions and finite-difference oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import solve_adjoint
from .cost import evaluate_cost, gradient_adjoint
from .errors import OutOfDomain
from .integrator import IntegratorConfig, solve_state
from .model import DelayProblem, TimeFunction, ZeroField
from .optimizer import is_feasible

# ------------------------------------------------------------- closed forms


@dataclass(frozen=True)
class ClosedFormExample51:
    """``x' = x(t - tau)``, ``x = 1`` on ``[-1, 0]``, on ``[-1, 3 tau]``.

    ``xsecond`` (the second delay derivative) jumps from 0 to 1 at ``t = tau``.
    """

    tau: float

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise OutOfDomain(f"tau={self.tau} outside (0, 1)")

    def _check(self, t):
        if t < -1.0 or t > 3.0 * self.tau + 1e-12:
            raise OutOfDomain(f"t={t} outside [-1, {3 * self.tau}]")

    def x(self, t):
        self._check(t)
        tau = self.tau
        if t <= 0:
            return 1.0
        if t <= tau:
            return t + 1.0
        if t <= 2 * tau:
            return 0.5 * (t - tau) ** 2 + t + 1.0
        return (t - 2 * tau) ** 3 / 6.0 + 0.5 * (t - tau) ** 2 + t + 1.0

    def xdot(self, t):
        """Time derivative, right-sided at 0."""
        self._check(t)
        tau = self.tau
        if t < 0:
            return 0.0
        if t <= tau:
            return 1.0
        if t <= 2 * tau:
            return t - tau + 1.0
        return 0.5 * (t - 2 * tau) ** 2 + t - tau + 1.0

    def xprime(self, t):
        self._check(t)
        tau = self.tau
        if t <= tau:
            return 0.0
        if t <= 2 * tau:
            return -(t - tau)
        return -((t - 2 * tau) ** 2) - (t - tau)

    def xsecond(self, t, side="auto"):
        self._check(t)
        tau = self.tau
        if t < tau or (t == tau and side == "left"):
            return 0.0
        if t <= 2 * tau:
            return 1.0
        return 4.0 * (t - 2 * tau) + 1.0


def example51(tau: float, t: float, which: str = "x", side: str = "auto") -> float:
    """Evaluate the closed form; ``which`` is ``x``, ``xprime`` or ``xsecond``."""
    cf = ClosedFormExample51(float(tau))
    if which == "x":
        return cf.x(t)
    if which == "xprime":
        return cf.xprime(t)
    if which == "xsecond":
        return cf.xsecond(t, side)
    raise ValueError(f"unknown quantity {which!r}")


def example51_problem(tau=0.5, horizon=1.5, target=None, delay_bound=1.0) -> DelayProblem:
    """Scalar ``x' = x(t - tau)`` with unit history; ``target`` defaults to zero."""
    if target is None:
        target = lambda t: np.zeros(1)  # noqa: E731
    return DelayProblem(
        delay_matrices=[[[1.0]]],
        delays=[tau],
        delay_bound=delay_bound,
        horizon=horizon,
        rhs_f=ZeroField(1),
        history=TimeFunction.constant([1.0]),
        forcing=TimeFunction.constant([0.0]),
        target=target,
    )


def tracking_case(case: str) -> DelayProblem:
    """The three tracking problems built on the scalar example (``T = b = 1``).

    ``a``: target ``x[0.5]`` (delay set to 0.5); ``b``: ``e^t + 1`` (delay 0);
    ``c``: ``t`` (delay 1).
    """
    ref = ClosedFormExample51(0.5)
    targets = {
        "a": (0.5, lambda t: np.array([ref.x(t)])),
        "b": (0.0, lambda t: np.array([np.exp(t) + 1.0])),
        "c": (1.0, lambda t: np.array([t])),
    }
    if case not in targets:
        raise ValueError(f"unknown case {case!r}")
    tau, target = targets[case]
    return example51_problem(tau, horizon=1.0, target=target)


# --------------------------------------------------------- finite differences


@dataclass
class FDResult:
    value: np.ndarray
    stencil: str
    delta: float


QUANTITIES = ("state_t", "state_tt", "grad", "hess", "adjoint_deriv")


def _stencil(tau, i, delta, bound, reach):
    """``central`` if both neighbours are feasible, else the one-sided direction that is."""

    def fits(k):
        d = tau.copy()
        d[i] += k * delta
        return is_feasible(d, bound)

    if fits(-1) and fits(1):
        return "central"
    if fits(reach):
        return "forward"
    if fits(-reach):
        return "backward"
    raise ValueError(f"no feasible finite-difference stencil for tau_{i + 1} with delta={delta}")


def _first_difference(fn, tau, i, delta, bound):
    kind = _stencil(tau, i, delta, bound, 2)
    e = np.zeros_like(tau)
    e[i] = delta
    if kind == "central":
        return (fn(tau + e) - fn(tau - e)) / (2 * delta), "central (f(+d) - f(-d)) / 2d"
    if kind == "forward":
        return (-3 * fn(tau) + 4 * fn(tau + e) - fn(tau + 2 * e)) / (2 * delta), "forward (-3f0 + 4f1 - f2) / 2d"
    return (3 * fn(tau) - 4 * fn(tau - e) + fn(tau - 2 * e)) / (2 * delta), "backward (3f0 - 4f-1 + f-2) / 2d"


def _second_difference(fn, tau, i, delta, bound):
    kind = _stencil(tau, i, delta, bound, 3)
    e = np.zeros_like(tau)
    e[i] = delta
    if kind == "central":
        return (fn(tau + e) - 2 * fn(tau) + fn(tau - e)) / delta**2, "central (f(+d) - 2f0 + f(-d)) / d^2"
    s = 1.0 if kind == "forward" else -1.0
    vals = [fn(tau + s * k * e) for k in range(4)]
    return (2 * vals[0] - 5 * vals[1] + 4 * vals[2] - vals[3]) / delta**2, f"{kind} (2f0 - 5f1 + 4f2 - f3) / d^2"


def fd_oracle(quantity: str, problem: DelayProblem, tau=None, delta: float | None = None, *, times=(),
              index: int = 0, cfg: IntegratorConfig | None = None) -> FDResult:
    """Finite differences in the delays using full re-solves.

    ``state_t``/``state_tt``: first/second derivative of ``x(t)`` in
    ``tau_index`` at ``times``, shape ``(len(times), n)``.  ``grad``: of ``j``,
    shape ``(m,)``.  ``hess``: of the adjoint gradient, column ``i`` is the
    derivative in ``tau_i``.  ``adjoint_deriv``: of ``p(t)`` in ``tau_index``.
    Central differences are used unless a perturbed delay would leave the
    feasible set, in which case a second-order one-sided stencil is used.
    Default steps: ``1e-4`` for first and ``1e-3`` for second differences.
    """
    if quantity not in QUANTITIES:
        raise ValueError(f"quantity must be one of {QUANTITIES}")
    cfg = cfg or IntegratorConfig()
    tau = np.atleast_1d(np.asarray(problem.delays if tau is None else tau, dtype=float))
    second = quantity in ("state_tt", "hess")
    delta = float(delta if delta is not None else (1e-3 if second else 1e-4))
    bound = problem.delay_bound
    times = [float(t) for t in times]

    def solve(d):
        prob = problem.with_delays(d)
        c = cfg.adapted_to(d)
        return prob, c, solve_state(prob, c)

    def state_at(d):
        _, _, x = solve(d)
        return np.array([x.eval(t) for t in times])

    def cost(d):
        prob, c, x = solve(d)
        return np.array(evaluate_cost(prob, x, c))

    def grad(d):
        prob, c, x = solve(d)
        return gradient_adjoint(prob, x, solve_adjoint(prob, x, c), c)

    def adjoint_at(d):
        prob, c, x = solve(d)
        p = solve_adjoint(prob, x, c)
        return np.array([p.eval(t) for t in times])

    if quantity == "state_t":
        value, stencil = _first_difference(state_at, tau, index, delta, bound)
    elif quantity == "state_tt":
        value, stencil = _second_difference(state_at, tau, index, delta, bound)
    elif quantity == "adjoint_deriv":
        value, stencil = _first_difference(adjoint_at, tau, index, delta, bound)
    elif quantity == "grad":
        cols = [_first_difference(cost, tau, i, delta, bound) for i in range(tau.size)]
        value = np.array([float(c[0]) for c in cols])
        stencil = "; ".join(c[1] for c in cols)
    else:
        cols = [_first_difference(grad, tau, i, delta, bound) for i in range(tau.size)]
        value = np.column_stack([c[0] for c in cols])
        stencil = "; ".join(c[1] for c in cols)
    return FDResult(np.asarray(value, dtype=float), stencil, delta)
