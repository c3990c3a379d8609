"""Projected gradient / safeguarded Newton minimization of the tracking cost over the delays."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .adjoint import solve_adjoint
from .cost import evaluate_cost, gradient_adjoint, hessian_adjoint
from .errors import InfeasibleStart
from .integrator import IntegratorConfig, solve_state
from .model import DelayProblem
from .sensitivity import StateCache, first_order

log = logging.getLogger(__name__)

INTERIOR = "interior_second_order"
BOUNDARY = "boundary_first_order"
DEGENERATE = "stationary_degenerate"
NOT_STATIONARY = "not_stationary"
MAX_ITER = "max_iter"

MIN_GAP = 1e-9  # relative to b
NEWTON_MIN_EIG = 1e-8
POSDEF_MIN_EIG = 1e-10


@dataclass
class Step:
    tau: np.ndarray
    j: float
    grad_norm: float
    kind: str  # "start", "newton", "gradient", "snap"


@dataclass
class OptimizeResult:
    tau_star: np.ndarray
    j_star: float
    iterations: int
    history: list
    classification: str
    grad: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hessian: np.ndarray | None = None
    converged: bool = False

    def history_triples(self):
        return [(s.tau, s.j, s.grad_norm) for s in self.history]


def project(tau, bound):
    """Nearest-ish feasible point: clip to ``[0, b]``, sort, then enforce a minimum gap."""
    tau = np.sort(np.clip(np.asarray(tau, dtype=float), 0.0, bound))
    m = tau.size
    if m > 1:
        gap = MIN_GAP * bound
        if (m - 1) * gap > bound:
            raise InfeasibleStart(f"{m} delays do not fit in [0, {bound}] with gap {gap}")
        for k in range(1, m):
            tau[k] = max(tau[k], tau[k - 1] + gap)
        tau[-1] = min(tau[-1], bound)
        for k in range(m - 2, -1, -1):
            tau[k] = min(tau[k], tau[k + 1] - gap)
    return tau


def is_feasible(tau, bound):
    tau = np.asarray(tau, dtype=float)
    if np.any(~np.isfinite(tau)) or np.any(tau < 0) or np.any(tau > bound):
        return False
    return tau.size < 2 or bool(np.all(np.diff(tau) > 0))


class _Evaluator:
    """Cost, gradient and Hessian at a delay vector, memoized per point."""

    def __init__(self, problem, cfg):
        self.problem = problem
        self.cfg = cfg
        self._cache = {}

    def _solve(self, tau):
        key = tuple(float(t) for t in tau)
        hit = self._cache.get(key)
        if hit is None:
            prob = self.problem.with_delays(tau)
            cfg = self.cfg.adapted_to(tau)
            state = solve_state(prob, cfg)
            hit = self._cache[key] = {"prob": prob, "cfg": cfg, "state": state}
        return hit

    def cost(self, tau):
        hit = self._solve(tau)
        if "j" not in hit:
            hit["j"] = evaluate_cost(hit["prob"], hit["state"], hit["cfg"])
        return hit["j"]

    def gradient(self, tau):
        hit = self._solve(tau)
        if "g" not in hit:
            hit["sc"] = StateCache(hit["prob"], hit["state"])
            hit["p"] = solve_adjoint(hit["prob"], hit["state"], hit["cfg"], hit["sc"])
            hit["g"] = gradient_adjoint(hit["prob"], hit["state"], hit["p"], hit["cfg"])
        return hit["g"]

    def hessian(self, tau):
        hit = self._solve(tau)
        if "H" not in hit:
            self.gradient(tau)
            prob, cfg = hit["prob"], hit["cfg"]
            firsts = [first_order(prob, hit["state"], i, cfg, hit["sc"]) for i in range(prob.num_delays)]
            H = hessian_adjoint(prob, hit["state"], firsts, hit["p"], cfg)
            hit["H"] = 0.5 * (H + H.T)
        return hit["H"]


def _face_masks(tau, bound, tol):
    return tau <= tol, tau >= bound - tol


def _projected_gradient(tau, g, bound):
    return project(tau - g, bound) - tau


def classify(tau, g, H, bound, grad_tol):
    """Optimality class of a feasible point from its gradient and (adjoint) Hessian.

    At a face the inward directional derivative must exceed ``grad_tol`` in
    every active coordinate (``g_i > tol`` at ``tau_i = 0``, ``-g_i > tol`` at
    ``tau_i = b``) and the free coordinates must be stationary.
    """
    tau = np.asarray(tau, dtype=float)
    g = np.asarray(g, dtype=float)
    at_lo, at_hi = _face_masks(tau, bound, 1e-12 * bound)
    active = at_lo | at_hi
    free = ~active
    inward = np.where(at_lo, g, -g)
    if np.any(active & (inward < -grad_tol)) or np.any(np.abs(g[free]) > grad_tol):
        return NOT_STATIONARY
    if np.any(active) and np.all(inward[active] > grad_tol):
        if not np.any(free):
            return BOUNDARY
        Hf = H[np.ix_(free, free)]
        if np.linalg.eigvalsh(Hf).min() > POSDEF_MIN_EIG:
            return BOUNDARY
        return DEGENERATE
    if not np.any(active):
        if np.linalg.eigvalsh(H).min() > POSDEF_MIN_EIG:
            return INTERIOR
    return DEGENERATE


def certify(problem: DelayProblem, tau=None, cfg: IntegratorConfig | None = None, grad_tol: float = 1e-8):
    """Classify ``tau`` without iterating."""
    cfg = cfg or IntegratorConfig()
    tau = np.atleast_1d(np.asarray(problem.delays if tau is None else tau, dtype=float))
    if not is_feasible(tau, problem.delay_bound):
        raise InfeasibleStart(f"delays {tau.tolist()} are not feasible")
    ev = _Evaluator(problem, cfg)
    g = ev.gradient(tau)
    H = ev.hessian(tau)
    return classify(tau, g, H, problem.delay_bound, grad_tol)


def optimize(problem: DelayProblem, tau0=None, cfg: IntegratorConfig | None = None, *, max_iter: int = 50,
             grad_tol: float = 1e-10, step_tol: float = 1e-12, use_newton: bool = True, c1: float = 1e-4,
             classify_tol: float = 1e-8) -> OptimizeResult:
    """Minimize ``j`` over ``0 <= tau_1 < ... < tau_m <= b``.

    Each iteration tries a Newton step on the free coordinates when the
    Hessian there is safely positive definite, and falls back to a projected
    gradient step with Armijo backtracking (factor 1/2, initial step 1).  The
    sufficient-decrease test uses the projected step,
    ``j(new) <= j + c1 g.(new - tau)``.  After each step, coordinates within
    ``1e-4 b`` of a bound are moved onto it when that does not raise ``j``;
    this lets degenerate minimizers on a face, where Newton converges only
    linearly, be reached exactly.
    """
    cfg = cfg or IntegratorConfig()
    b = problem.delay_bound
    tau = np.atleast_1d(np.asarray(problem.delays if tau0 is None else tau0, dtype=float))
    if tau.shape != (problem.num_delays,) or not is_feasible(tau, b):
        raise InfeasibleStart(f"start {tau.tolist()} is not feasible for bound {b}")
    ev = _Evaluator(problem, cfg)
    j = ev.cost(tau)
    g = ev.gradient(tau)
    history = [Step(tau.copy(), j, float(np.linalg.norm(g)), "start")]
    converged = False
    it = 0
    while it < max_iter:
        pg = _projected_gradient(tau, g, b)
        if np.linalg.norm(pg) <= grad_tol:
            converged = True
            break
        it += 1
        new, j_new, kind = None, None, None
        if use_newton:
            new, j_new = _newton_step(ev, tau, j, g, b)
            kind = "newton" if new is not None else None
        if new is None:
            new, j_new = _gradient_step(ev, tau, j, g, b, c1)
            kind = "gradient"
        if new is None:
            log.debug("line search failed at %s", tau)
            converged = True
            break
        step = float(np.linalg.norm(new - tau))
        tau, j = new, j_new
        g = ev.gradient(tau)
        history.append(Step(tau.copy(), j, float(np.linalg.norm(g)), kind))
        snapped = _snap_to_faces(ev, tau, j, g, b)
        if snapped is not None:
            tau, j = snapped
            g = ev.gradient(tau)
            history.append(Step(tau.copy(), j, float(np.linalg.norm(g)), "snap"))
        elif step <= step_tol:
            converged = True
            break
    H = ev.hessian(tau)
    if converged or np.linalg.norm(_projected_gradient(tau, g, b)) <= grad_tol:
        label = classify(tau, g, H, b, classify_tol)
    else:
        label = MAX_ITER
    return OptimizeResult(tau, j, it, history, label, g, H, converged)


def _newton_step(ev, tau, j, g, b):
    lo, hi = _face_masks(tau, b, 1e-12 * b)
    # a coordinate pinned at a face with outward-pointing descent stays put
    pinned = (lo & (g > 0)) | (hi & (g < 0))
    free = ~pinned
    if not np.any(free):
        return None, None
    H = ev.hessian(tau)[np.ix_(free, free)]
    if np.linalg.eigvalsh(H).min() < NEWTON_MIN_EIG:
        return None, None
    d = np.zeros_like(tau)
    d[free] = -np.linalg.solve(H, g[free])
    new = project(tau + d, b)
    if np.array_equal(new, tau):
        return None, None
    j_new = ev.cost(new)
    if j_new < j:
        return new, j_new
    return None, None


def _gradient_step(ev, tau, j, g, b, c1, max_halvings=60, max_doublings=40):
    def armijo(alpha):
        new = project(tau - alpha * g, b)
        if np.array_equal(new, tau):
            return None, None
        j_new = ev.cost(new)
        if j_new <= j + c1 * float(g @ (new - tau)):
            return new, j_new
        return None, None

    alpha = 1.0
    for k in range(max_halvings):
        new, j_new = armijo(alpha)
        if new is not None:
            break
        alpha *= 0.5
    else:
        return None, None
    if k == 0:
        # unit step accepted: expand while it keeps paying off (small gradients)
        for _ in range(max_doublings):
            cand, j_cand = armijo(2.0 * alpha)
            if cand is None or j_cand >= j_new or np.array_equal(cand, new):
                break
            alpha *= 2.0
            new, j_new = cand, j_cand
    return new, j_new


def _snap_to_faces(ev, tau, j, g, b, rel=1e-4):
    """Move coordinates lying just inside a face onto it if ``j`` does not increase."""
    tol = rel * b
    lo = (tau > 0) & (tau <= tol) & (g >= 0)
    hi = (tau < b) & (tau >= b - tol) & (g <= 0)
    if not np.any(lo | hi):
        return None
    cand = tau.copy()
    cand[lo] = 0.0
    cand[hi] = b
    cand = project(cand, b)
    if not is_feasible(cand, b):
        return None
    j_new = ev.cost(cand)
    if j_new <= j:
        return cand, j_new
    return None
