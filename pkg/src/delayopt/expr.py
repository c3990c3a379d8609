"""Expression language with forward-mode second derivatives.

Expressions are built from real literals, the variables ``t`` and
``x1 ... xn``, the binary operators ``+ - * / ^``, unary minus and the
functions ``sin cos exp log sqrt tanh abs``.  Precedence from tightest to
loosest: ``^`` (right associative), unary minus, ``* /``, ``+ -``.

Derivatives come from hyper-dual numbers: a value plus two first-order
directional parts and their mixed second-order part.  One evaluation along
directions ``v`` and ``w`` yields ``e``, ``De.v``, ``De.w`` and ``D2e(v, w)``
with no truncation error.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DomainError, ExprSyntaxError, NonSmooth, UnknownIdentifier

__all__ = [
    "HyperDual",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "parse",
    "eval_with_derivatives",
    "ExprVectorField",
    "ExprTimeFunction",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh", "abs")


class HyperDual:
    """Truncated Taylor number ``value + d1*e1 + d2*e2 + d12*e1*e2``.

    ``e1**2 == e2**2 == 0``, so products keep the exact mixed part.
    """

    __slots__ = ("value", "d1", "d2", "d12")

    def __init__(self, value, d1=0.0, d2=0.0, d12=0.0):
        self.value = float(value)
        self.d1 = float(d1)
        self.d2 = float(d2)
        self.d12 = float(d12)

    def as_tuple(self):
        return (self.value, self.d1, self.d2, self.d12)

    def __repr__(self):
        return f"HyperDual({self.value!r}, {self.d1!r}, {self.d2!r}, {self.d12!r})"

    def __eq__(self, other):
        if isinstance(other, HyperDual):
            return self.as_tuple() == other.as_tuple()
        return NotImplemented

    __hash__ = None

    @staticmethod
    def _lift(x):
        return x if isinstance(x, HyperDual) else HyperDual(x)

    def is_constant(self):
        return self.d1 == 0.0 and self.d2 == 0.0 and self.d12 == 0.0

    def __add__(self, other):
        o = self._lift(other)
        return HyperDual(self.value + o.value, self.d1 + o.d1, self.d2 + o.d2, self.d12 + o.d12)

    __radd__ = __add__

    def __neg__(self):
        return HyperDual(-self.value, -self.d1, -self.d2, -self.d12)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        o = self._lift(other)
        return HyperDual(
            self.value * o.value,
            self.value * o.d1 + self.d1 * o.value,
            self.value * o.d2 + self.d2 * o.value,
            # grouped so that swapping the two directions gives a bit-identical d12
            self.value * o.d12 + (self.d1 * o.d2 + self.d2 * o.d1) + self.d12 * o.value,
        )

    __rmul__ = __mul__

    def chain(self, g, dg, d2g):
        """Apply a scalar function given its value and first two derivatives at ``value``."""
        return HyperDual(
            g,
            dg * self.d1,
            dg * self.d2,
            dg * self.d12 + d2g * (self.d1 * self.d2),
        )

    def reciprocal(self):
        a = self.value
        if a == 0.0:
            raise DomainError("division by zero")
        return self.chain(1.0 / a, -1.0 / (a * a), 2.0 / (a * a * a))

    def __truediv__(self, other):
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()


Number = Union[float, HyperDual]


# ---------------------------------------------------------------- primitives


def _is_int(c):
    return float(c).is_integer()


def _div(a, b):
    if isinstance(a, HyperDual) or isinstance(b, HyperDual):
        return HyperDual._lift(a) / b
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _real_pow(a, c):
    if a < 0.0 and not _is_int(c):
        raise DomainError(f"negative base {a} with non-integer exponent {c}")
    if a == 0.0 and c < 0.0:
        raise DomainError("zero raised to a negative power")
    return a**c


def _pow_derivs(x, c):
    """``(x**c, d/dx, d2/dx2)`` for a constant exponent ``c``."""
    if c == 0.0:
        return 1.0, 0.0, 0.0
    if _is_int(c):
        g = _real_pow(x, c)
        dg = c * _real_pow(x, c - 1) if c != 1.0 else 1.0
        d2g = c * (c - 1) * _real_pow(x, c - 2) if c != 1.0 else 0.0
        return g, dg, d2g
    if x <= 0.0:
        raise DomainError(f"non-integer power of non-positive base {x}")
    return x**c, c * x ** (c - 1), c * (c - 1) * x ** (c - 2)


def _func_derivs(name, x, constant=False):
    """Value and first two derivatives of a named primitive at ``x``."""
    if name == "sin":
        s, c = math.sin(x), math.cos(x)
        return s, c, -s
    if name == "cos":
        s, c = math.sin(x), math.cos(x)
        return c, -s, -c
    if name == "exp":
        e = _exp(x)
        return e, e, e
    if name == "log":
        if x <= 0.0:
            raise DomainError(f"log of non-positive value {x}")
        return math.log(x), 1.0 / x, -1.0 / (x * x)
    if name == "sqrt":
        if x < 0.0 or (x == 0.0 and not constant):
            raise DomainError(f"sqrt not differentiable at {x}")
        if x == 0.0:
            return 0.0, 0.0, 0.0
        r = math.sqrt(x)
        return r, 0.5 / r, -0.25 / (r * x)
    if name == "tanh":
        th = math.tanh(x)
        s = 1.0 - th * th
        return th, s, -2.0 * th * s
    if name == "abs":
        raise NonSmooth("abs is not differentiable; not allowed where derivatives are needed")
    raise AssertionError(name)


def _pow(a, b):
    if not isinstance(a, HyperDual) and not isinstance(b, HyperDual):
        return _real_pow(a, b)
    a = HyperDual._lift(a)
    b = HyperDual._lift(b)
    if b.is_constant():
        return a.chain(*_pow_derivs(a.value, b.value))
    if a.value <= 0.0:
        raise DomainError("variable exponent requires a positive base")
    return _apply("exp", b * _apply("log", a))


def _apply(name, a):
    if isinstance(a, HyperDual):
        return a.chain(*_func_derivs(name, a.value, a.is_constant()))
    if name == "log":
        if a <= 0.0:
            raise DomainError(f"log of non-positive value {a}")
        return math.log(a)
    if name == "sqrt":
        if a < 0.0:
            raise DomainError(f"sqrt of negative value {a}")
        return math.sqrt(a)
    if name == "exp":
        return _exp(a)
    if name == "abs":
        return abs(a)
    return getattr(math, name)(a)


# tuple-level helpers used by generated kernels


def _hd_div(v1, a1, b1, c1, v2, a2, b2, c2):
    if v2 == 0.0:
        raise DomainError("division by zero")
    g, dg, d2g = 1.0 / v2, -1.0 / (v2 * v2), 2.0 / (v2 * v2 * v2)
    rv, ra, rb, rc = g, dg * a2, dg * b2, dg * c2 + d2g * (a2 * b2)
    return v1 * rv, v1 * ra + a1 * rv, v1 * rb + b1 * rv, v1 * rc + (a1 * rb + b1 * ra) + c1 * rv


def _hd_pow(v1, a1, b1, c1, v2, a2, b2, c2):
    out = _pow(HyperDual(v1, a1, b1, c1), HyperDual(v2, a2, b2, c2))
    return out.value, out.d1, out.d2, out.d12


def _hd_func(name, v, a, b, c):
    g, dg, d2g = _func_derivs(name, v, a == 0.0 and b == 0.0 and c == 0.0)
    return g, dg * a, dg * b, dg * c + d2g * (a * b)


def _exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


# ----------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


Node = Union[Num, Var, Neg, BinOp, Call]


def to_source(node) -> str:
    """Fully parenthesized source text; ``parse(to_source(n))`` rebuilds ``n``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    raise TypeError(node)


def _names(node, acc):
    if isinstance(node, Var):
        acc.add(node.name)
    elif isinstance(node, Neg):
        _names(node.operand, acc)
    elif isinstance(node, BinOp):
        _names(node.left, acc)
        _names(node.right, acc)
    elif isinstance(node, Call):
        _names(node.arg, acc)
    return acc


def _uses(node, func):
    if isinstance(node, Call):
        return node.func == func or _uses(node.arg, func)
    if isinstance(node, Neg):
        return _uses(node.operand, func)
    if isinstance(node, BinOp):
        return _uses(node.left, func) or _uses(node.right, func)
    return False


# -------------------------------------------------------------------- parser

_TOKEN = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()])"
)
_XVAR = re.compile(r"x([1-9]\d*)$")


def _tokenize(source):
    tokens = []
    pos = 0
    n = len(source)
    while True:
        while pos < n and source[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", _byte(source, pos))
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), pos))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


def _byte(source, index):
    return len(source[:index].encode("utf-8"))


class _Parser:
    def __init__(self, source, allowed):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, _byte(self.source, tok[2]))

    def expect(self, text):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != text:
            raise self.error(f"expected {text!r}")
        self.take()

    def parse(self):
        node = self.sum()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return node

    def sum(self):
        node = self.product()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.product())
        return node

    def product(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return Neg(self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            # right associative; exponent may carry its own sign
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return Call(text, arg)
            if not self.allowed(text):
                raise UnknownIdentifier(text, _byte(self.source, tok[2]))
            return Var(text)
        if kind == "op" and text == "(":
            node = self.sum()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of expression", tok)
        raise self.error(f"unexpected {text!r}", tok)


def _default_allowed(name):
    return name == "t" or _XVAR.match(name) is not None


def _sort_key(name):
    return (0, 0) if name == "t" else (1, int(name[1:]))


# ------------------------------------------------------------------ compiler


def _compile(node, index):
    if isinstance(node, Num):
        v = node.value
        return lambda env: v
    if isinstance(node, Var):
        k = index[node.name]
        return lambda env: env[k]
    if isinstance(node, Neg):
        f = _compile(node.operand, index)
        return lambda env: -f(env)
    if isinstance(node, Call):
        f = _compile(node.arg, index)
        name = node.func
        return lambda env: _apply(name, f(env))
    lhs = _compile(node.left, index)
    rhs = _compile(node.right, index)
    if node.op == "+":
        return lambda env: lhs(env) + rhs(env)
    if node.op == "-":
        return lambda env: lhs(env) - rhs(env)
    if node.op == "*":
        return lambda env: lhs(env) * rhs(env)
    if node.op == "/":
        return lambda env: _div(lhs(env), rhs(env))
    return lambda env: _pow(lhs(env), rhs(env))


def _generate(root, variables):
    """Straight-line Python source for the hyper-dual kernel of ``root``.

    Arguments are ``v_k, a_k, b_k, c_k`` per variable; the result is the
    tuple of value, both directional parts and the mixed part.
    """
    lines = []
    counter = [0]

    def fresh():
        counter[0] += 1
        k = counter[0]
        return f"v{k}", f"a{k}", f"b{k}", f"c{k}"

    def emit(node):
        if isinstance(node, Num):
            value = float(node.value)
            text = repr(value) if math.isfinite(value) else f"float({str(value)!r})"
            return f"({text})", "0.0", "0.0", "0.0"
        if isinstance(node, Var):
            k = index[node.name]
            return f"pv{k}", f"pa{k}", f"pb{k}", f"pc{k}"
        out = fresh()
        v, a, b, c = out
        if isinstance(node, Neg):
            x = emit(node.operand)
            lines.append(f"{v} = -{x[0]}; {a} = -{x[1]}; {b} = -{x[2]}; {c} = -{x[3]}")
            return out
        if isinstance(node, Call):
            x = emit(node.arg)
            lines.append(f"{v}, {a}, {b}, {c} = _hd_func({node.func!r}, {', '.join(x)})")
            return out
        l = emit(node.left)
        r = emit(node.right)
        if node.op in "+-":
            o = node.op
            lines.append(f"{v} = {l[0]} {o} {r[0]}; {a} = {l[1]} {o} {r[1]}; "
                         f"{b} = {l[2]} {o} {r[2]}; {c} = {l[3]} {o} {r[3]}")
        elif node.op == "*":
            lines.append(f"{v} = {l[0]} * {r[0]}; {a} = {l[0]} * {r[1]} + {l[1]} * {r[0]}; "
                         f"{b} = {l[0]} * {r[2]} + {l[2]} * {r[0]}; "
                         f"{c} = {l[0]} * {r[3]} + ({l[1]} * {r[2]} + {l[2]} * {r[1]}) + {l[3]} * {r[0]}")
        elif node.op == "/":
            lines.append(f"{v}, {a}, {b}, {c} = _hd_div({', '.join(l)}, {', '.join(r)})")
        elif isinstance(node.right, Num):
            lines.append(f"_g, _dg, _d2g = _pow_derivs({l[0]}, {r[0]})")
            lines.append(f"{v} = _g; {a} = _dg * {l[1]}; {b} = _dg * {l[2]}; "
                         f"{c} = _dg * {l[3]} + _d2g * ({l[1]} * {l[2]})")
        else:
            lines.append(f"{v}, {a}, {b}, {c} = _hd_pow({', '.join(l)}, {', '.join(r)})")
        return out

    index = {name: k for k, name in enumerate(variables)}
    result = emit(root)
    args = ", ".join(f"pv{k}, pa{k}, pb{k}, pc{k}" for k in range(len(variables)))
    body = "\n".join("    " + ln for ln in lines) or "    pass"
    return f"def kernel({args}):\n{body}\n    return ({', '.join(result)})\n"


def _build_kernel(root, variables):
    src = _generate(root, variables)
    scope = {"_hd_func": _hd_func, "_hd_div": _hd_div, "_hd_pow": _hd_pow, "_pow_derivs": _pow_derivs}
    exec(compile(src, "<expr-kernel>", "exec"), scope)
    return scope["kernel"]


class Expr:
    """Parsed expression bound to an ordered tuple of variable names."""

    def __init__(self, root, variables: Sequence[str], source: str = ""):
        self.root = root
        self.variables = tuple(variables)
        self.source = source
        self.smooth = not _uses(root, "abs")
        self._fn = _compile(root, {name: k for k, name in enumerate(self.variables)})
        self._kernel = _build_kernel(root, self.variables) if self.smooth else None

    def __repr__(self):
        return f"Expr({to_source(self.root)!r}, variables={self.variables})"

    def __eq__(self, other):
        return isinstance(other, Expr) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def to_source(self):
        return to_source(self.root)

    def __call__(self, point) -> float:
        """Plain floating-point value at ``point`` (ordered like ``variables``)."""
        env = [float(p) for p in point]
        self._check_len(env)
        try:
            return float(self._fn(env))
        except OverflowError:
            return math.inf

    def eval_with_derivatives(self, point, dir1, dir2) -> HyperDual:
        if not (len(point) == len(dir1) == len(dir2)):
            raise ValueError("point and directions must have equal length")
        return HyperDual(*self.hyper(point, dir1, dir2))

    def hyper(self, point, dir1, dir2):
        """Like :meth:`eval_with_derivatives` but returns a plain 4-tuple."""
        self._check_len(point)
        if not self.smooth:
            raise NonSmooth("abs is not differentiable; not allowed where derivatives are needed")
        args = []
        for p, a, b in zip(point, dir1, dir2):
            args += (float(p), float(a), float(b), 0.0)
        try:
            return self._kernel(*args)
        except OverflowError:
            raise DomainError("overflow while evaluating derivatives") from None

    def _check_len(self, env):
        if len(env) != len(self.variables):
            raise ValueError(f"expected {len(self.variables)} coordinates for {self.variables}, got {len(env)}")


def parse(source: str, variables: Sequence[str] | None = None) -> Expr:
    """Parse ``source`` into an :class:`Expr`.

    With ``variables`` given, only those names are accepted and points are
    ordered accordingly.  Otherwise ``t`` and ``x<k>`` are accepted and the
    variable tuple is the used names, ``t`` first and then by index.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    if variables is None:
        root = _Parser(source, _default_allowed).parse()
        variables = sorted(_names(root, set()), key=_sort_key)
    else:
        declared = set(variables)
        root = _Parser(source, declared.__contains__).parse()
    return Expr(root, variables, source)


def eval_with_derivatives(e: Expr, point, dir1, dir2) -> HyperDual:
    return e.eval_with_derivatives(point, dir1, dir2)


# ------------------------------------------------- vector-valued adaptors


class ExprVectorField:
    """``f: R^n -> R^n`` from n expressions in ``x1..xn``."""

    def __init__(self, sources: Sequence[str], dim: int):
        if len(sources) != dim:
            raise ValueError(f"need {dim} component expressions, got {len(sources)}")
        names = [f"x{k + 1}" for k in range(dim)]
        self.exprs = [parse(s, names) for s in sources]
        self.dim = dim
        for k, e in enumerate(self.exprs):
            if not e.smooth:
                raise NonSmooth(f"component {k + 1} of f uses abs; f must be twice differentiable")

    def __call__(self, x):
        return np.array([e(x) for e in self.exprs])

    def jacobian(self, x):
        x = [float(v) for v in x]
        zero = [0.0] * self.dim
        jac = np.empty((self.dim, self.dim))
        for j in range(self.dim):
            d = [0.0] * self.dim
            d[j] = 1.0
            for i, e in enumerate(self.exprs):
                jac[i, j] = e.hyper(x, d, zero)[1]
        return jac

    def hessian_action(self, x, v, w):
        x = [float(a) for a in x]
        v = [float(a) for a in v]
        w = [float(a) for a in w]
        return np.array([e.hyper(x, v, w)[3] for e in self.exprs])


class ExprTimeFunction:
    """Vector function of ``t`` from expressions; ``order`` selects the time derivative."""

    def __init__(self, sources: Sequence[str], dim: int, need_derivatives: bool = True, label: str = "function"):
        if len(sources) != dim:
            raise ValueError(f"{label}: need {dim} component expressions, got {len(sources)}")
        self.exprs = [parse(s, ("t",)) for s in sources]
        self.dim = dim
        if need_derivatives:
            for k, e in enumerate(self.exprs):
                if not e.smooth:
                    raise NonSmooth(f"{label} component {k + 1} uses abs but its time derivatives are required")

    def __call__(self, t, order: int = 0):
        if order == 0:
            return np.array([e((t,)) for e in self.exprs])
        if order not in (1, 2):
            raise ValueError("order must be 0, 1 or 2")
        k = 1 if order == 1 else 3
        return np.array([e.hyper((t,), (1.0,), (1.0,))[k] for e in self.exprs])


Evaluator = Callable[..., np.ndarray]
