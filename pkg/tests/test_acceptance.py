"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the terminal
summary (see ``conftest.py``) and also directly when run with ``-s`` or as a
script.
"""

import time

import numpy as np
import pytest

from delayopt import (
    IntegratorConfig,
    check_compatibility,
    compute_report,
    compute_sensitivities,
    example51_problem,
    fd_oracle,
    optimize,
    solve_state,
    tracking_case,
)
from delayopt.cost import relative_discrepancy
from delayopt.oracles import ClosedFormExample51
from delayopt.optimizer import BOUNDARY, DEGENERATE

from helpers import nonlinear_problem, scalar_problem

RESULTS = {}

TAU = 0.5
H = 1e-3


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    return ok


def _grid(a, b, n=3001):
    return np.linspace(a, b, n)


def _away_from(ts, points, gap=1e-9):
    return np.array([t for t in ts if all(abs(t - p) > gap for p in points)])


def _state_error(h):
    problem = example51_problem(TAU, horizon=1.5)
    x = solve_state(problem, IntegratorConfig(base_step=h))
    cf = ClosedFormExample51(TAU)
    return max(abs(x.eval(t)[0] - cf.x(t)) for t in _grid(-1.0, 1.5))


def test_criterion_1_closed_form_state():
    start = time.perf_counter()
    err = _state_error(H)
    elapsed = time.perf_counter() - start
    ok = record(1, err <= 1e-8 and elapsed < 1.0, f"max|x - x_closed| = {err:.3e} (<= 1e-8), {elapsed:.2f} s (< 1 s)")
    assert ok


def test_criterion_2_first_sensitivity(ex51_bundle, closed):
    w = ex51_bundle.first[0]
    err = max(abs(w.eval(t)[0] - closed.xprime(t)) for t in _grid(-1.0, 1.5))
    at1 = w.eval(1.0)[0]
    ok = record(2, err <= 1e-6 and abs(at1 + 0.5) <= 1e-6,
                f"max|x' - x'_closed| = {err:.3e} (<= 1e-6), x'(1.0) = {at1:.12f} (-0.5 +- 1e-6)")
    assert ok


def test_criterion_3_second_sensitivity_and_jump(ex51, ex51_bundle, closed, cfg):
    v = ex51_bundle.mixed(0, 0)
    ts = _away_from(_grid(0.0, 1.5), [TAU])
    err = max(abs(v.eval(t)[0] - closed.xsecond(t)) for t in ts)
    jump = v.jump_at(TAU)[0]
    # a compatible problem: phi = e^t, f = 0, A = 1, g = 1 - e^{-tau}
    compat = scalar_problem(TAU, 1.5, history="exp(t)", forcing=repr(float(1.0 - np.exp(-TAU))))
    assert check_compatibility(compat).compatible
    cjump = compute_sensitivities(compat, cfg).mixed(0, 0).jump_at(TAU)[0]
    ok = record(3, err <= 1e-6 and abs(jump - 1.0) <= 1e-8 and abs(cjump) <= 1e-8,
                f"max|x'' - x''_closed| = {err:.3e} (<= 1e-6), jump = {jump:.12f} (1 +- 1e-8), "
                f"compatible jump = {cjump:.2e} (0 +- 1e-8)")
    assert ok


def test_criterion_4_case_a(cfg):
    r = compute_report(tracking_case("a"), cfg)
    ha, hf = r.hessian_adjoint[0, 0], r.hessian_forward[0, 0]
    ok = (abs(r.j) <= 1e-12 and abs(r.grad[0]) <= 1e-8
          and abs(ha - 1 / 24) <= 1e-6 and abs(hf - 1 / 24) <= 1e-6)
    record(4, ok, f"j = {r.j:.2e}, j' = {r.grad[0]:.2e}, j'' adjoint = {ha:.10f}, forward = {hf:.10f} (1/24 +- 1e-6)")
    assert ok


def test_criterion_5_case_b(cfg):
    problem = tracking_case("b")
    r = compute_report(problem, cfg, hessian=False)
    g, gf = r.grad[0], r.grad_forward[0]
    res = optimize(problem, [0.1], cfg)
    ok = (abs(g - 1.0) <= 1e-5 and abs(g - gf) <= 1e-6 and res.tau_star[0] == 0.0
          and res.classification == BOUNDARY)
    record(5, ok, f"j'(0) adjoint = {g:.10f}, forward = {gf:.10f}; optimizer tau* = {res.tau_star[0]}, "
                  f"{res.classification}")
    assert ok


def test_criterion_6_case_c(cfg):
    problem = tracking_case("c")
    r = compute_report(problem, cfg)
    res = optimize(problem, [0.7], cfg)
    g, h = r.grad[0], r.hessian_adjoint[0, 0]
    ok = abs(g) <= 1e-8 and abs(h) <= 1e-8 and res.classification == DEGENERATE
    record(6, ok, f"j'(1) = {g:.2e}, j''(1) = {h:.2e}; optimizer from 0.7: tau* = {res.tau_star[0]}, "
                  f"{res.classification}")
    assert ok


def test_criterion_7_nonlinear_property_suite(cfg):
    start = time.perf_counter()
    problem = nonlinear_problem()
    r = compute_report(problem, cfg)
    fd_g = fd_oracle("grad", problem, cfg=cfg, delta=1e-4).value
    fd_h = fd_oracle("hess", problem, cfg=cfg, delta=1e-4).value
    grad_err = relative_discrepancy(r.grad, fd_g, floor=0.0)
    route = relative_discrepancy(r.hessian_adjoint, r.hessian_forward, floor=0.0)
    fd_err = max(relative_discrepancy(r.hessian_adjoint, fd_h, floor=0.0),
                 relative_discrepancy(r.hessian_forward, fd_h, floor=0.0))
    bundle = compute_sensitivities(problem, cfg)
    sym = _mixed_symmetry(problem, bundle, cfg)
    elapsed = time.perf_counter() - start
    ok = grad_err <= 1e-5 and route <= 1e-4 and fd_err <= 1e-3 and sym <= 1e-5 and elapsed < 30.0
    record(7, ok, f"grad vs FD {grad_err:.1e} (<= 1e-5), Hessian routes {route:.1e} (<= 1e-4), "
                  f"vs FD {fd_err:.1e} (<= 1e-3), mixed symmetry {sym:.1e} (<= 1e-5), {elapsed:.1f} s (< 30 s)")
    assert ok


def _mixed_symmetry(problem, bundle, cfg):
    from delayopt import mixed_second

    v01 = bundle.mixed(0, 1)
    v10 = mixed_second(problem, bundle.state, bundle.first[1], bundle.first[0], 1, 0, cfg)
    ts = np.linspace(0.0, problem.horizon, 301)
    a, b = v01.sample(ts), v10.sample(ts)
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a))))


def test_criterion_8_convergence_order():
    # The scalar example has a piecewise cubic solution, which RK4 with breakpoint-aligned
    # steps reproduces exactly; the error is pure roundoff and cannot shrink 8x.
    steps = [H / 2**k for k in range(4)]
    errors = [_state_error(h) for h in steps]
    ratios = [e0 / e1 if e1 > 0 else np.inf for e0, e1 in zip(errors[:-1], errors[1:])]
    ok = all(r >= 8.0 for r in ratios)
    record(8, ok, "errors " + ", ".join(f"{e:.2e}" for e in errors)
           + "; ratios " + ", ".join(f"{r:.2f}" for r in ratios) + " (each >= 8)")
    assert ok


def test_criterion_9_optimizer_recovery(cfg):
    problem = tracking_case("a")
    parts, ok = [], True
    for tau0 in (0.1, 0.2, 0.8):
        res = optimize(problem, [tau0], cfg, max_iter=50)
        good = abs(res.tau_star[0] - 0.5) <= 1e-6 and res.iterations <= 50
        ok &= good
        parts.append(f"from {tau0}: tau* = {res.tau_star[0]:.10f} in {res.iterations} it")
    record(9, ok, "; ".join(parts))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
