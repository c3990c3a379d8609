"""Tracking cost, gradients and Hessians with respect to the delays."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adjoint import AdjointTrajectory, solve_adjoint
from .integrator import IntegratorConfig, build_grid, solve_state
from .model import DelayProblem, Trajectory
from .sensitivity import StateCache, compute_sensitivities, impulse_jump

QUADRATURE = "composite Simpson, one panel per integrator step, one-sided endpoint values"


@dataclass(frozen=True)
class Panel:
    a: float
    b: float


def quadrature_panels(problem: DelayProblem, cfg: IntegratorConfig | None = None):
    """Integration panels; identical to the integrator steps, so no panel contains a breakpoint."""
    grid, _ = build_grid(problem, cfg or IntegratorConfig())
    return [Panel(a, b) for a, b in zip(grid[:-1], grid[1:])]


def integrate_panels(fn, panels):
    """``sum (h/6) (F(a+) + 4 F(mid) + F(b-))`` for a scalar integrand ``fn(t, side)``."""
    parts = []
    for p in panels:
        h = p.b - p.a
        parts.append(h / 6.0 * (fn(p.a, "right") + 4.0 * fn(0.5 * (p.a + p.b), "auto") + fn(p.b, "left")))
    return math.fsum(parts)


def _residual(problem, state, t, side="auto"):
    return state.eval(t, side) - np.asarray(problem.target(t), dtype=float)


def evaluate_cost(problem: DelayProblem, state: Trajectory, cfg: IntegratorConfig | None = None) -> float:
    """``j = 1/2 int_0^T |x - x_d|^2 dt``."""
    panels = quadrature_panels(problem, cfg)

    def fn(t, side):
        r = _residual(problem, state, t, side)
        return 0.5 * float(r @ r)

    return integrate_panels(fn, panels)


def gradient_adjoint(problem: DelayProblem, state: Trajectory, adjoint: AdjointTrajectory,
                     cfg: IntegratorConfig | None = None) -> np.ndarray:
    """``dj/dtau_i = -int_0^T <p, A_i x'(t - tau_i)> dt``."""
    panels = quadrature_panels(problem, cfg)
    out = np.zeros(problem.num_delays)
    for i, (A, ti) in enumerate(zip(problem.delay_matrices, problem.delays)):
        def fn(t, side, A=A, ti=float(ti)):
            return float(adjoint.eval(t, side) @ (A @ state.eval(t - ti, side, 1)))

        out[i] = -integrate_panels(fn, panels)
    return out


def gradient_forward(problem: DelayProblem, state: Trajectory, firsts, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """``dj/dtau_i = int_0^T <x - x_d, dx/dtau_i> dt``."""
    panels = quadrature_panels(problem, cfg)
    out = np.zeros(problem.num_delays)
    for i, w in enumerate(firsts):
        def fn(t, side, w=w):
            return float(_residual(problem, state, t, side) @ w.eval(t, side))

        out[i] = integrate_panels(fn, panels)
    return out


def hessian_adjoint(problem: DelayProblem, state: Trajectory, firsts, adjoint: AdjointTrajectory,
                    cfg: IntegratorConfig | None = None, symmetrize: bool = False) -> np.ndarray:
    """Hessian from first-order sensitivities and the adjoint only.

    Entry ``(k, i)`` is
    ``int <w_i, w_k> - int <p, D2f(x)(w_i, w_k)> - int <p, A_i w_k'(t - tau_i)>
    - int <p, A_k w_i'(t - tau_k)>``, plus for ``i == k`` the impulse term
    ``<p(tau_i), A_i (x'(0+) - phi'(0))>`` and ``int <p, A_i x''(t - tau_i)>``
    (history ``phi''`` for ``t < tau_i``).  ``w_l`` vanishes on ``t <= 0``, so
    the cross terms need no explicit lower limit.
    """
    panels = quadrature_panels(problem, cfg)
    m = problem.num_delays
    mats = problem.delay_matrices
    taus = [float(t) for t in problem.delays]
    T = problem.horizon
    H = np.zeros((m, m))
    for k in range(m):
        for i in range(m):
            wi, wk = firsts[i], firsts[k]
            Ai, Ak = mats[i], mats[k]
            ti, tk = taus[i], taus[k]

            def fn(t, side):
                p = adjoint.eval(t, side)
                a = wi.eval(t, side)
                b = wk.eval(t, side)
                val = float(a @ b)
                if np.any(p):
                    x = state.eval(t, side)
                    val -= float(p @ problem.d2f(x, a, b))
                    val -= float(p @ (Ai @ wk.eval(t - ti, side, 1)))
                    val -= float(p @ (Ak @ wi.eval(t - tk, side, 1)))
                    if i == k:
                        val += float(p @ (Ai @ state.eval(t - ti, side, 2)))
                return val

            h = integrate_panels(fn, panels)
            if i == k and ti < T:
                h += float(adjoint.eval(ti) @ impulse_jump(problem, state, i))
            H[k, i] = h
    if symmetrize:
        H = 0.5 * (H + H.T)
    return H


def hessian_forward(problem: DelayProblem, state: Trajectory, firsts, seconds,
                    cfg: IntegratorConfig | None = None) -> np.ndarray:
    """``int <w_i, w_k> + int <x - x_d, d^2 x / dtau_k dtau_i>``.

    ``seconds`` maps ``(i, k)`` with ``i <= k`` to the mixed second sensitivity.
    """
    panels = quadrature_panels(problem, cfg)
    m = problem.num_delays
    H = np.zeros((m, m))
    for i in range(m):
        for k in range(i, m):
            wi, wk, v = firsts[i], firsts[k], seconds[(i, k)]

            def fn(t, side):
                return float(wi.eval(t, side) @ wk.eval(t, side)
                             + _residual(problem, state, t, side) @ v.eval(t, side))

            H[i, k] = H[k, i] = integrate_panels(fn, panels)
    return H


def relative_discrepancy(a, b, floor=1.0):
    """Largest elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


@dataclass
class CostReport:
    tau: np.ndarray
    j: float
    grad: np.ndarray
    grad_forward: Optional[np.ndarray] = None
    hessian_adjoint: Optional[np.ndarray] = None
    hessian_forward: Optional[np.ndarray] = None
    hessian_asymmetry: Optional[float] = None
    route_discrepancy: Optional[float] = None
    gradient_discrepancy: Optional[float] = None
    classification: Optional[str] = None
    quadrature: str = QUADRATURE
    extras: dict = field(default_factory=dict)


def compute_report(problem: DelayProblem, cfg: IntegratorConfig | None = None, *, hessian: bool = True,
                   forward: bool = True) -> CostReport:
    """Everything at the problem's current delays.

    The adjoint Hessian is symmetrized; its raw asymmetry is kept in
    ``hessian_asymmetry``.  Route discrepancies use a floor of 1 in the
    relative scale so that entries near zero compare absolutely.
    """
    cfg = cfg or IntegratorConfig()
    state = solve_state(problem, cfg)
    cache = StateCache(problem, state)
    adjoint = solve_adjoint(problem, state, cfg, cache)
    j = evaluate_cost(problem, state, cfg)
    grad = gradient_adjoint(problem, state, adjoint, cfg)
    report = CostReport(np.array(problem.delays, dtype=float), j, grad)
    if not (hessian or forward):
        return report
    bundle = compute_sensitivities(problem, cfg, second=hessian and forward, state=state)
    if forward:
        report.grad_forward = gradient_forward(problem, state, bundle.first, cfg)
        report.gradient_discrepancy = float(np.max(np.abs(grad - report.grad_forward)))
    if hessian:
        raw = hessian_adjoint(problem, state, bundle.first, adjoint, cfg)
        report.hessian_asymmetry = float(np.max(np.abs(raw - raw.T)))
        report.hessian_adjoint = 0.5 * (raw + raw.T)
        if forward:
            report.hessian_forward = hessian_forward(problem, state, bundle.first, bundle.second, cfg)
            report.route_discrepancy = relative_discrepancy(report.hessian_adjoint, report.hessian_forward)
    return report
