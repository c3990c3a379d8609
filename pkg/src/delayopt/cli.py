"""Command-line front end.

Usage: ``delayopt COMMAND PROBLEM.json [options]`` with COMMAND one of
solve, sens, grad, hess, check, optimize, certify.  Exit status is 0 on
success, 1 on invalid input (or a failed ``check``) and 2 when a solution
leaves the floating-point range.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import solve_adjoint
from .cost import compute_report, relative_discrepancy
from .errors import DelayOptError, NonFinite
from .integrator import build_grid, check_compatibility, solve_state
from .oracles import fd_oracle
from .optimizer import certify, optimize
from .problem_file import load_problem
from .sensitivity import compute_sensitivities, impulse_jump

log = logging.getLogger("delayopt")

COMMANDS = ("solve", "sens", "grad", "hess", "check", "optimize", "certify")


def fmt(v) -> str:
    """17 significant digits: enough to round-trip any double exactly."""
    return format(float(v), ".17g")


def _parse_tau(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid delay list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delayopt", description="Delay sensitivities and delay optimization.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("problem", type=Path, help="JSON problem file")
    p.add_argument("--tau", type=_parse_tau, help="override delays, comma separated")
    p.add_argument("--step", type=float, help="override the integrator step")
    p.add_argument("--samples", type=int, default=1000, help="uniform sample intervals on [0, T] (default 1000)")
    p.add_argument("--fd", action="store_true", help="add finite-difference comparisons")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default .)")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--grad-tol", type=float, default=None,
                   help="stationarity tolerance (default 1e-10 for optimize, 1e-8 for certify)")
    p.add_argument("--newton", action=argparse.BooleanOptionalAction, default=True,
                   help="allow safeguarded Newton steps in optimize")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


# ------------------------------------------------------------------ sampling


def sample_rows(traj, times, breakpoints, dim):
    """Rows ``(t, side, value, derivative)``; one-sided rows where the trajectory is discontinuous."""
    marks = sorted(set(breakpoints))
    rows = []
    ts = sorted(set(times) | set(marks))
    mark_set = set(marks)
    for t in ts:
        if t in mark_set:
            left = (traj.eval(t, "left"), _deriv(traj, t, "left", dim))
            right = (traj.eval(t, "right"), _deriv(traj, t, "right", dim))
            if not (np.array_equal(left[0], right[0]) and np.array_equal(left[1], right[1])):
                rows.append((t, "L", *left))
                rows.append((t, "R", *right))
                continue
            rows.append((t, "", *right))
        else:
            rows.append((t, "", traj.eval(t), _deriv(traj, t, "auto", dim)))
    return rows


def _deriv(traj, t, side, dim):
    try:
        return traj.eval(t, side, 1)
    except ValueError:
        return np.full(dim, np.nan)


def write_csv(path: Path, rows, dim):
    header = ["t"] + [f"x{k + 1}" for k in range(dim)] + [f"dx{k + 1}" for k in range(dim)] + ["side"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, side, val, der in rows:
            w.writerow([fmt(t)] + [fmt(v) for v in val] + [fmt(v) for v in der] + [side])


def _times(problem, samples):
    T = problem.horizon
    return [T * k / samples for k in range(samples + 1)]


def _marks(problem, cfg):
    _, marks = build_grid(problem, cfg)
    return marks


# ------------------------------------------------------------------ commands


def cmd_solve(problem, cfg, args, out):
    x = solve_state(problem, cfg)
    rows = sample_rows(x, _times(problem, args.samples), _marks(problem, cfg), problem.dim)
    path = out / "state.csv"
    write_csv(path, rows, problem.dim)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_sens(problem, cfg, args, out):
    bundle = compute_sensitivities(problem, cfg)
    times = _times(problem, args.samples)
    marks = _marks(problem, cfg)
    for i, w in enumerate(bundle.first):
        path = out / f"sens_first_{i + 1}.csv"
        write_csv(path, sample_rows(w, times, marks, problem.dim), problem.dim)
        print(f"wrote {path}")
    for (i, k), v in sorted(bundle.second.items()):
        path = out / f"sens_second_{i + 1}{k + 1}.csv"
        write_csv(path, sample_rows(v, times, marks, problem.dim), problem.dim)
        jumps = ", ".join(f"t={fmt(t)}: {[fmt(c) for c in J]}" for t, J in v.jumps.items()) or "none"
        print(f"wrote {path} (jumps: {jumps})")
    return 0


def _report_dict(problem, report, fd=None):
    d = {
        "tau": report.tau.tolist(),
        "j": report.j,
        "grad_adjoint": report.grad.tolist(),
        "quadrature": report.quadrature,
    }
    if report.grad_forward is not None:
        d["grad_forward"] = report.grad_forward.tolist()
        d["gradient_discrepancy"] = report.gradient_discrepancy
    if report.hessian_adjoint is not None:
        d["hessian_adjoint"] = report.hessian_adjoint.tolist()
        d["hessian_asymmetry"] = report.hessian_asymmetry
    if report.hessian_forward is not None:
        d["hessian_forward"] = report.hessian_forward.tolist()
        d["route_discrepancy"] = report.route_discrepancy
    if fd:
        d["fd"] = fd
    return d


def _print_report(d):
    for key, val in d.items():
        if key == "fd":
            for name, entry in val.items():
                print(f"fd_{name}: {entry['value']}  (stencil {entry['stencil']}, delta {entry['delta']}, "
                      f"max diff {entry['max_abs_diff']:.3e})")
        else:
            print(f"{key}: {val}")


def _fd_entry(result, reference):
    diff = float(np.max(np.abs(np.asarray(result.value) - np.asarray(reference))))
    return {"value": np.asarray(result.value).tolist(), "stencil": result.stencil,
            "delta": result.delta, "max_abs_diff": diff}


def cmd_grad(problem, cfg, args, out, hessian=False):
    report = compute_report(problem, cfg, hessian=hessian, forward=True)
    fd = {}
    if args.fd:
        fd["grad"] = _fd_entry(fd_oracle("grad", problem, cfg=cfg), report.grad)
        if hessian:
            fd["hess"] = _fd_entry(fd_oracle("hess", problem, cfg=cfg), report.hessian_adjoint)
    d = _report_dict(problem, report, fd)
    name = "hess_report.json" if hessian else "grad_report.json"
    (out / name).write_text(json.dumps(d, indent=2))
    _print_report(d)
    print(f"wrote {out / name}")
    return 0


def run_checks(problem, cfg, fd=False, seed=0):
    """Invariant checks on one problem; returns a list of ``(name, passed, detail)``."""
    checks = []
    rng = np.random.default_rng(seed)
    n = problem.dim

    sym = 0.0
    for _ in range(5):
        x, v, w = rng.normal(size=(3, n))
        sym = max(sym, float(np.max(np.abs(problem.d2f(x, v, w) - problem.d2f(x, w, v)))))
    checks.append(("second derivative of f is symmetric", sym <= 1e-10, f"max asymmetry {sym:.3e}"))

    x = solve_state(problem, cfg)
    b = problem.delay_bound
    hist = max(float(np.max(np.abs(x.eval(t) - problem.history(t, 0)))) for t in np.linspace(-b, 0, 21))
    checks.append(("state equals history on [-b, 0]", hist <= 1e-14, f"max deviation {hist:.3e}"))

    grid, marks = build_grid(problem, cfg)
    gset = set(grid)
    missing = [m for m in marks if m not in gset]
    checks.append(("every breakpoint is a step endpoint", not missing, f"{len(marks)} breakpoints"))

    compat = check_compatibility(problem)
    bundle = compute_sensitivities(problem, cfg, state=x)
    worst_jump, worst_consistency = 0.0, 0.0
    for i in range(problem.num_delays):
        v = bundle.mixed(i, i)
        expected = impulse_jump(problem, x, i) if problem.delays[i] < problem.horizon else np.zeros(n)
        recorded = v.jump_at(float(problem.delays[i]))
        worst_jump = max(worst_jump, float(np.max(np.abs(recorded - expected))))
        if compat.compatible:
            worst_jump = max(worst_jump, float(np.max(np.abs(recorded))))
        for t, J in v.jumps.items():
            worst_consistency = max(worst_consistency,
                                    float(np.max(np.abs(v.eval(t, "left") + J - v.eval(t, "right")))))
    checks.append(("second sensitivity jump equals A_i(x'(0+) - phi'(0))", worst_jump <= 1e-8,
                   f"max deviation {worst_jump:.3e}"))
    checks.append(("left value + jump = right value", worst_consistency == 0.0,
                   f"max deviation {worst_consistency:.3e}"))
    zero_hist = max(float(np.max(np.abs(w.eval(t)))) for w in bundle.first for t in np.linspace(-b, 0, 11))
    checks.append(("first sensitivities vanish on [-b, 0]", zero_hist == 0.0, f"max {zero_hist:.3e}"))

    p = solve_adjoint(problem, x, cfg)
    T = problem.horizon
    tail = max(float(np.max(np.abs(p.eval(t)))) for t in np.linspace(T, T + b, 11))
    checks.append(("adjoint tail is zero on [T, T + b]", tail == 0.0, f"max {tail:.3e}"))

    report = compute_report(problem, cfg)
    gscale = 1.0 + float(np.max(np.abs(report.grad)))
    checks.append(("gradient routes agree", report.gradient_discrepancy <= 1e-6 * gscale,
                   f"max diff {report.gradient_discrepancy:.3e}"))
    hscale = 1.0 + float(np.max(np.abs(report.hessian_adjoint)))
    checks.append(("adjoint Hessian is symmetric", report.hessian_asymmetry <= 1e-6 * hscale,
                   f"max asymmetry {report.hessian_asymmetry:.3e}"))
    checks.append(("Hessian routes agree", report.route_discrepancy <= 1e-4,
                   f"relative diff {report.route_discrepancy:.3e}"))
    if fd:
        g_fd = fd_oracle("grad", problem, cfg=cfg).value
        rel = relative_discrepancy(report.grad, g_fd, floor=1e-8)
        checks.append(("gradient matches finite differences", rel <= 1e-5, f"relative diff {rel:.3e}"))
    return compat, checks


def cmd_check(problem, cfg, args, out):
    compat, checks = run_checks(problem, cfg, fd=args.fd)
    print(f"compatibility residual: {[fmt(r) for r in compat.residual]} "
          f"({'compatible' if compat.compatible else 'not compatible'})")
    failed = 0
    for name, ok, detail in checks:
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}  [{detail}]")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def cmd_optimize(problem, cfg, args, out):
    tol = 1e-10 if args.grad_tol is None else args.grad_tol
    res = optimize(problem, problem.delays, cfg, max_iter=args.max_iter, grad_tol=tol, use_newton=args.newton)
    path = out / "optimize_history.csv"
    m = problem.num_delays
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter"] + [f"tau{k + 1}" for k in range(m)] + ["j", "grad_norm", "step"])
        for k, s in enumerate(res.history):
            w.writerow([k] + [fmt(v) for v in s.tau] + [fmt(s.j), fmt(s.grad_norm), s.kind])
    print(f"tau_star: {[fmt(v) for v in res.tau_star]}")
    print(f"j_star: {fmt(res.j_star)}")
    print(f"gradient: {[fmt(v) for v in res.grad]}")
    print(f"iterations: {res.iterations}")
    print(f"classification: {res.classification}")
    print(f"wrote {path}")
    return 0


def cmd_certify(problem, cfg, args, out):
    tol = 1e-8 if args.grad_tol is None else args.grad_tol
    print(certify(problem, problem.delays, cfg, grad_tol=tol))
    return 0


HANDLERS = {
    "solve": cmd_solve,
    "sens": cmd_sens,
    "grad": cmd_grad,
    "hess": lambda p, c, a, o: cmd_grad(p, c, a, o, hessian=True),
    "check": cmd_check,
    "optimize": cmd_optimize,
    "certify": cmd_certify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        problem, cfg = load_problem(args.problem, delays=args.tau, step=args.step)
        if args.samples < 1:
            raise DelayOptError("--samples must be at least 1")
        args.out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](problem, cfg, args, args.out)
    except NonFinite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DelayOptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
