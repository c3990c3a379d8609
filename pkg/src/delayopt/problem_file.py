"""JSON problem files: loading, validation and conversion to :class:`DelayProblem`."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, DelayOptError, ExprSyntaxError, NonSmooth, ProblemError, UnknownIdentifier
from .expr import ExprTimeFunction, ExprVectorField
from .integrator import IntegratorConfig
from .model import DelayProblem

REQUIRED = ("dim", "delays", "delay_bound", "horizon", "matrices", "f", "g", "history", "target")
OPTIONAL = ("lambda", "integrator", "description")


class ProblemFileError(ProblemError):
    """Invalid problem file; the message names the offending key and position."""


def _fail(where, message):
    raise ProblemFileError(f"{where}: {message}")


def _number(doc, key, positive=False):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(key, f"expected a number, got {type(v).__name__}")
    v = float(v)
    if positive and not v > 0:
        _fail(key, f"must be positive, got {v}")
    return v


def _expr_list(doc, key, dim):
    v = doc[key]
    if not isinstance(v, list) or not all(isinstance(s, str) for s in v):
        _fail(key, "expected an array of expression strings")
    if len(v) != dim:
        _fail(key, f"expected {dim} expressions, got {len(v)}")
    return v


def problem_from_dict(doc: dict, delays=None, step=None) -> tuple[DelayProblem, IntegratorConfig]:
    """Validate ``doc`` and build the problem and integrator settings.

    ``delays`` and ``step`` override the file's initial delays and step.
    """
    if not isinstance(doc, dict):
        _fail("document", "top level must be a JSON object")
    missing = [k for k in REQUIRED if k not in doc]
    if missing:
        _fail("document", f"missing keys {missing}")
    unknown = sorted(set(doc) - set(REQUIRED) - set(OPTIONAL))
    if unknown:
        _fail("document", f"unknown keys {unknown}")
    dim = doc["dim"]
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        _fail("dim", f"expected a positive integer, got {dim!r}")
    tau = doc["delays"] if delays is None else delays
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if tau.ndim != 1 or tau.size == 0:
        _fail("delays", "expected a non-empty array of numbers")
    mats = doc["matrices"]
    if not isinstance(mats, list) or len(mats) != tau.size:
        _fail("matrices", f"expected {tau.size} matrices (one per delay)")
    arrays = []
    for k, A in enumerate(mats):
        try:
            arr = np.asarray(A, dtype=float)
        except (TypeError, ValueError):
            _fail(f"matrices[{k}]", "not a numeric matrix")
        if arr.shape != (dim, dim):
            _fail(f"matrices[{k}]", f"shape {arr.shape}, expected {(dim, dim)}")
        arrays.append(arr)
    b = _number(doc, "delay_bound", positive=True)
    T = _number(doc, "horizon", positive=True)
    lam = doc.get("lambda")
    if lam is not None:
        lam = _number(doc, "lambda")

    f = _component_build("f", _expr_list(doc, "f", dim), lambda s: ExprVectorField(s, dim))
    g = _component_build("g", _expr_list(doc, "g", dim),
                         lambda s: ExprTimeFunction(s, dim, True, "g"))
    phi = _component_build("history", _expr_list(doc, "history", dim),
                           lambda s: ExprTimeFunction(s, dim, True, "history"))
    xd = _component_build("target", _expr_list(doc, "target", dim),
                          lambda s: ExprTimeFunction(s, dim, False, "target"))

    integ = doc.get("integrator", {})
    if not isinstance(integ, dict):
        _fail("integrator", "expected an object")
    bad = sorted(set(integ) - {"step", "mesh_depth"})
    if bad:
        _fail("integrator", f"unknown keys {bad}")
    cfg = IntegratorConfig()
    if "step" in integ:
        cfg = IntegratorConfig(base_step=_number(integ, "step", positive=True), mesh_depth=cfg.mesh_depth)
    if "mesh_depth" in integ:
        depth = integ["mesh_depth"]
        if isinstance(depth, bool) or not isinstance(depth, int):
            _fail("integrator.mesh_depth", "expected an integer")
        cfg = IntegratorConfig(base_step=cfg.base_step, mesh_depth=depth)
    if step is not None:
        cfg = IntegratorConfig(base_step=float(step), mesh_depth=cfg.mesh_depth)
    try:
        problem = DelayProblem(arrays, tau, b, T, f, phi, g, xd, lam)
    except DelayOptError as exc:
        _fail("problem", str(exc))
    except (ValueError, ArithmeticError) as exc:
        _fail("problem", f"evaluation failed: {exc}")
    try:
        cfg.validate(problem)
    except ConfigError as exc:
        _fail("integrator", str(exc))
    return problem, cfg


def _component_build(key, sources, factory):
    # build component by component first so an error names its index
    for k, src in enumerate(sources):
        try:
            factory([src] * len(sources))
        except (ExprSyntaxError, UnknownIdentifier, NonSmooth) as exc:
            _fail(f"{key}[{k}]", f"{exc} in {src!r}")
    return factory(sources)


def load_problem(path, delays=None, step=None) -> tuple[DelayProblem, IntegratorConfig]:
    """Read and validate a problem file; JSON errors are reported with line and column."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return problem_from_dict(doc, delays, step)
