import numpy as np
import pytest

from delayopt import (
    compute_report,
    compute_sensitivities,
    evaluate_cost,
    example51_problem,
    fd_oracle,
    gradient_adjoint,
    gradient_forward,
    hessian_adjoint,
    hessian_forward,
    solve_adjoint,
    solve_state,
    tracking_case,
)
from delayopt.cost import integrate_panels, quadrature_panels, relative_discrepancy
from delayopt.model import delay_combinations

from helpers import nonlinear_problem, scalar_problem


@pytest.fixture(scope="module")
def reports(cfg):
    return {c: compute_report(tracking_case(c), cfg) for c in "abc"}


@pytest.fixture(scope="module")
def nl_report(cfg):
    p = nonlinear_problem()
    return p, compute_report(p, cfg)


class TestEvaluateCost:
    def test_case_a_is_zero(self, reports):
        assert abs(reports["a"].j) <= 1e-12

    def test_case_c(self, reports):
        assert reports["c"].j == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("c, T", [(2.0, 1.0), (-1.5, 0.7)])
    def test_constant_state(self, cfg, c, T):
        p = scalar_problem(0.5, T, history=repr(c), a=0.0)
        assert evaluate_cost(p, solve_state(p, cfg), cfg) == pytest.approx(0.5 * T * c * c, rel=1e-14)

    def test_example_against_closed_form(self, cfg, closed):
        # j = 1/2 int_0^1.5 x^2 for the closed-form state, by fine Simpson
        p = example51_problem(0.5, horizon=1.5)
        j = evaluate_cost(p, solve_state(p, cfg), cfg)
        ts = np.linspace(0.0, 1.5, 30001)
        ys = np.array([closed.x(t) ** 2 for t in ts])
        ref = 0.5 * (ts[1] - ts[0]) / 3 * (ys[0] + ys[-1] + 4 * ys[1:-1:2].sum() + 2 * ys[2:-1:2].sum())
        assert j == pytest.approx(ref, rel=1e-12)

    def test_panels_do_not_straddle_breakpoints(self, cfg):
        p = nonlinear_problem()
        panels = quadrature_panels(p, cfg)
        T = p.horizon
        bps = [v for v in delay_combinations(p.delays, cfg.mesh_depth + 1, T)]
        bps += [T - v for v in bps]
        for pan in panels:
            assert not any(pan.a + 1e-12 < b < pan.b - 1e-12 for b in bps)
        assert panels[0].a == 0.0 and panels[-1].b == T
        assert all(a.b == b.a for a, b in zip(panels[:-1], panels[1:]))

    def test_simpson_is_exact_for_cubics(self):
        from delayopt.cost import Panel

        panels = [Panel(0.0, 0.3), Panel(0.3, 1.0)]
        val = integrate_panels(lambda t, side: t**3 - 2 * t, panels)
        assert val == pytest.approx(0.25 - 1.0, abs=1e-15)


class TestGradient:
    def test_case_a(self, reports):
        assert abs(reports["a"].grad[0]) <= 1e-8
        assert abs(reports["a"].grad_forward[0]) <= 1e-8

    def test_case_b(self, reports):
        r = reports["b"]
        assert r.grad[0] == pytest.approx(1.0, abs=1e-6)
        assert r.grad_forward[0] == pytest.approx(1.0, abs=1e-6)

    def test_case_c(self, reports):
        assert abs(reports["c"].grad[0]) <= 1e-12
        assert abs(reports["c"].grad_forward[0]) <= 1e-12

    def test_target_zero(self, cfg):
        # closed-form gradient: int_0^1 x x' = -int_{1/2}^1 (t + 1 + (t-1/2)^2/2)(t - 1/2) dt
        r = compute_report(example51_problem(0.5, horizon=1.0), cfg, hessian=False)
        exact = -(0.5**4 / 8 + 0.5**3 / 3 * 1 + 0.5**2 / 2 * 1.5)
        assert r.grad[0] == pytest.approx(exact, abs=1e-12)
        assert r.grad_forward[0] == pytest.approx(exact, abs=1e-12)

    def test_routes_agree(self, nl_report):
        _, r = nl_report
        assert np.max(np.abs(r.grad - r.grad_forward)) <= 1e-6 * (1 + np.max(np.abs(r.grad)))

    def test_against_finite_differences(self, nl_report, cfg):
        p, r = nl_report
        fd = fd_oracle("grad", p, cfg=cfg, delta=1e-4).value
        assert relative_discrepancy(r.grad, fd, floor=0.0) <= 1e-5


class TestHessian:
    def test_case_a(self, reports):
        r = reports["a"]
        assert r.hessian_adjoint[0, 0] == pytest.approx(1 / 24, abs=1e-10)
        assert r.hessian_forward[0, 0] == pytest.approx(1 / 24, abs=1e-10)

    def test_case_c(self, reports):
        r = reports["c"]
        assert abs(r.hessian_adjoint[0, 0]) <= 1e-12
        assert abs(r.hessian_forward[0, 0]) <= 1e-12

    def test_target_zero_routes_agree(self, cfg):
        r = compute_report(example51_problem(0.5, horizon=1.0), cfg)
        assert r.route_discrepancy <= 1e-4
        assert r.hessian_adjoint[0, 0] == pytest.approx(0.9375, abs=1e-10)

    def test_routes_and_fd(self, nl_report, cfg):
        p, r = nl_report
        assert relative_discrepancy(r.hessian_adjoint, r.hessian_forward, floor=0.0) <= 1e-4
        fd = fd_oracle("hess", p, cfg=cfg, delta=1e-4).value
        assert relative_discrepancy(r.hessian_adjoint, fd, floor=0.0) <= 1e-3

    def test_symmetric_before_symmetrization(self, nl_report):
        _, r = nl_report
        H = r.hessian_adjoint
        assert r.hessian_asymmetry <= 1e-6 * (1 + np.max(np.abs(H)))

    def test_symmetrize_flag(self, cfg):
        p = nonlinear_problem()
        bundle = compute_sensitivities(p, cfg, second=False)
        adj = solve_adjoint(p, bundle.state, cfg)
        H = hessian_adjoint(p, bundle.state, bundle.first, adj, cfg, symmetrize=True)
        assert np.array_equal(H, H.T)

    def test_gram_matrix_when_target_is_the_state(self, cfg):
        base = nonlinear_problem()
        x = solve_state(base, cfg)
        from dataclasses import replace

        p = replace(base, target=lambda t: x.eval(t))
        bundle = compute_sensitivities(p, cfg)
        adj = solve_adjoint(p, bundle.state, cfg)
        Ha = hessian_adjoint(p, bundle.state, bundle.first, adj, cfg)
        Hf = hessian_forward(p, bundle.state, bundle.first, bundle.second, cfg)
        panels = quadrature_panels(p, cfg)
        G = np.array([[integrate_panels(lambda t, s: float(wi.eval(t, s) @ wk.eval(t, s)), panels)
                       for wk in bundle.first] for wi in bundle.first])
        assert np.allclose(Ha, G, rtol=0, atol=1e-12)
        assert np.allclose(Hf, G, rtol=0, atol=1e-12)
        assert np.linalg.eigvalsh(G).min() >= -1e-14

    def test_report_fields(self, nl_report):
        _, r = nl_report
        assert r.j >= 0
        assert r.hessian_adjoint.shape == (2, 2) and r.hessian_forward.shape == (2, 2)
        assert r.route_discrepancy is not None and "Simpson" in r.quadrature

    def test_gradient_functions_consistent_with_report(self, cfg):
        p = tracking_case("b")
        x = solve_state(p, cfg)
        g = gradient_adjoint(p, x, solve_adjoint(p, x, cfg), cfg)
        gf = gradient_forward(p, x, compute_sensitivities(p, cfg, second=False, state=x).first, cfg)
        assert g[0] == pytest.approx(gf[0], abs=1e-6)
