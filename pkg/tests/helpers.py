"""Problem builders shared by the tests."""

import numpy as np

from delayopt import DelayProblem, ExprTimeFunction, ExprVectorField, IntegratorConfig

CUBIC_F = ["x1^3 + 0.5*x2", "x2^3 - 0.3*x1*x2"]
HISTORY = ["1 + 0.3*sin(t)", "0.5*cos(2*t)"]
FORCING = ["0.2*t", "sin(t)"]
TARGET = ["cos(t)", "0.3*t"]


def random_matrices(m, seed=0, scale=0.5, n=2):
    rng = np.random.default_rng(seed)
    return [scale * rng.normal(size=(n, n)) for _ in range(m)]


def nonlinear_problem(delays=(0.3, 0.7), horizon=1.5, matrices=None, seed=0, bound=1.0):
    """Two-dimensional cubic system with smooth history, forcing and target."""
    if matrices is None:
        matrices = random_matrices(len(delays), seed)
    return DelayProblem(
        delay_matrices=matrices,
        delays=list(delays),
        delay_bound=bound,
        horizon=horizon,
        rhs_f=ExprVectorField(CUBIC_F, 2),
        history=ExprTimeFunction(HISTORY, 2),
        forcing=ExprTimeFunction(FORCING, 2),
        target=ExprTimeFunction(TARGET, 2, need_derivatives=False),
    )


def scalar_problem(tau, horizon, f="0", history="1", forcing="0", target="0", a=1.0, bound=1.0):
    return DelayProblem(
        delay_matrices=[[[a]]],
        delays=[tau],
        delay_bound=bound,
        horizon=horizon,
        rhs_f=ExprVectorField([f], 1),
        history=ExprTimeFunction([history], 1),
        forcing=ExprTimeFunction([forcing], 1),
        target=ExprTimeFunction([target], 1, need_derivatives=False),
    )


CFG = IntegratorConfig(base_step=1e-3)
