"""Scalar expressions in ``t, x, u, v`` with exact first partials.

Grammar (``^`` binds tighter than unary minus, and is right-associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'

Evaluation propagates forward-mode derivatives with respect to ``x``, ``u``
and ``v`` through the tree in a single pass.  Environment values may be
numpy arrays, in which case everything is evaluated elementwise.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ExprDomainError, ExprSyntaxError, UnknownIdentifierError

__all__ = [
    "Expr", "Num", "Var", "Unary", "Binary", "Call", "EvalEnv",
    "VARIABLES", "FUNCTIONS", "parse", "to_string", "variables",
    "functions_used", "substitute", "evaluate", "eval_with_partials",
]

VARIABLES = ("t", "x", "u", "v")
FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")
_DIFF_VARS = ("x", "u", "v")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Unary, Binary, Call]


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


def _tokenize(text: str):
    tokens = []
    pos = 0
    raw = text.encode("utf-8")
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            offset = len(text[:pos].encode("utf-8"))
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", offset,
                                  ("number", "identifier", "operator"))
        if m.lastgroup != "ws":
            offset = len(text[:pos].encode("utf-8"))
            tokens.append((m.lastgroup, m.group(), offset))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, offset = self.peek()
        if text != value or kind != "op":
            raise ExprSyntaxError(f"unexpected {_describe(kind, text)}", offset, (repr(value),))
        return self.take()

    def parse(self):
        node = self.expr()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {_describe(kind, text)}", offset,
                                  ("'+'", "'-'", "'*'", "'/'", "'^'", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Unary("-", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        kind, text, offset = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in VARIABLES:
                return Var(text)
            raise UnknownIdentifierError(f"unknown identifier {text!r}", offset,
                                         VARIABLES + FUNCTIONS)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {_describe(kind, text)}", offset,
                              ("number", "variable", "function", "'('", "'-'"))


def _describe(kind, text):
    return "end of input" if kind == "end" else repr(text)


def parse(text: str) -> Expr:
    """Parse ``text`` into an immutable expression tree."""
    return _Parser(text).parse()


def to_string(e: Expr) -> str:
    """Canonical fully parenthesized form; ``parse(to_string(e)) == e``."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        return f"(-{to_string(e.operand)})"
    if isinstance(e, Binary):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    return f"{e.func}({to_string(e.arg)})"


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Unary):
        return variables(e.operand)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    return variables(e.arg)


def functions_used(e: Expr) -> set[str]:
    if isinstance(e, (Var, Num)):
        return set()
    if isinstance(e, Unary):
        return functions_used(e.operand)
    if isinstance(e, Binary):
        return functions_used(e.left) | functions_used(e.right)
    return {e.func} | functions_used(e.arg)


def substitute(e: Expr, mapping: dict) -> Expr:
    """Replace variables by expressions, e.g. ``{"v": Var("u")}``."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Num):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.operand, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    return Call(e.func, substitute(e.arg, mapping))


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalEnv:
    """Point (or arrays of points) at which an expression is evaluated."""

    t: float = 0.0
    x: float = 0.0
    u: float = 0.0
    v: float = 0.0


def _fail(message, node):
    raise ExprDomainError(f"{message} in {to_string(node)}", node)


def _eval(e, env, want):
    """Return (value, [d/dx, d/du, d/dv]) or (value, None) when ``want`` is False."""
    if isinstance(e, Num):
        return e.value, ([0.0, 0.0, 0.0] if want else None)
    if isinstance(e, Var):
        val = getattr(env, e.name)
        if not want:
            return val, None
        grad = [1.0 if e.name == name else 0.0 for name in _DIFF_VARS]
        return val, grad
    if isinstance(e, Unary):
        a, da = _eval(e.operand, env, want)
        return -a, ([-d for d in da] if want else None)
    if isinstance(e, Call):
        return _eval_call(e, env, want)

    a, da = _eval(e.left, env, want)
    if e.op == "^":
        return _eval_power(e, a, da, env, want)
    b, db = _eval(e.right, env, want)
    if e.op == "+":
        return a + b, ([p + q for p, q in zip(da, db)] if want else None)
    if e.op == "-":
        return a - b, ([p - q for p, q in zip(da, db)] if want else None)
    if e.op == "*":
        return a * b, ([p * b + a * q for p, q in zip(da, db)] if want else None)
    if np.any(np.asarray(b) == 0):
        _fail("division by zero", e)
    val = a / b
    return val, ([(p - val * q) / b for p, q in zip(da, db)] if want else None)


def _eval_power(e, a, da, env, want):
    if not (variables(e.right) & set(_DIFF_VARS)):
        c, _ = _eval(e.right, env, False)
        arr_a = np.asarray(a, dtype=float)
        arr_c = np.asarray(c, dtype=float)
        integral = np.all(arr_c == np.round(arr_c))
        if not integral and np.any(arr_a < 0):
            _fail("negative base with non-integer exponent", e)
        if np.any((arr_a == 0) & (arr_c < 0)):
            _fail("zero base with negative exponent", e)
        val = a**c
        if not want:
            return val, None
        if np.any((arr_a == 0) & (arr_c < 1) & (arr_c != 0)):
            _fail("derivative of power is unbounded at zero base", e)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(arr_c == 0, 0.0, c * np.asarray(a, dtype=float) ** (arr_c - 1))
        if slope.ndim == 0:
            slope = float(slope)
        return val, [slope * d for d in da]
    if np.any(np.asarray(a) <= 0):
        _fail("variable exponent needs a positive base", e)
    b, db = _eval(e.right, env, want)
    val = np.exp(b * np.log(a))
    if not want:
        return val, None
    return val, [val * (q * np.log(a) + b * p / a) for p, q in zip(da, db)]


def _eval_call(e, env, want):
    a, da = _eval(e.arg, env, want)
    f = e.func
    if f == "sin":
        val, slope = np.sin(a), (np.cos(a) if want else None)
    elif f == "cos":
        val, slope = np.cos(a), (-np.sin(a) if want else None)
    elif f == "exp":
        val = np.exp(a)
        slope = val
    elif f == "log":
        if np.any(np.asarray(a) <= 0):
            _fail("log of non-positive argument", e)
        val, slope = np.log(a), (1.0 / a if want else None)
    elif f == "sqrt":
        if np.any(np.asarray(a) < 0) or (want and np.any(np.asarray(a) == 0)):
            _fail("sqrt outside its (differentiable) domain", e)
        val = np.sqrt(a)
        slope = 0.5 / val if want else None
    else:
        val, slope = np.abs(a), (np.sign(a) if want else None)
    if isinstance(val, np.generic):
        val = float(val)
    if not want:
        return val, None
    return val, [slope * d for d in da]


def _coerce_env(env) -> EvalEnv:
    if isinstance(env, EvalEnv):
        return env
    return EvalEnv(**env)


def _finish(val, shape_like):
    if isinstance(shape_like, np.ndarray):
        return np.broadcast_to(np.asarray(val, dtype=float), shape_like.shape).copy()
    return float(val)


def evaluate(e: Expr, env) -> float | np.ndarray:
    """Value of ``e`` at ``env`` (an :class:`EvalEnv` or a mapping)."""
    env = _coerce_env(env)
    val, _ = _eval(e, env, False)
    return _finish(val, _template(env))


def eval_with_partials(e: Expr, env):
    """``(value, d/dx, d/du, d/dv)`` by forward-mode propagation.

    Raises
    ------
    ExprDomainError
        When a subexpression leaves its domain (``log(-1)``, ``1/0``, ...);
        the offending node is attached as ``.node``.
    """
    env = _coerce_env(env)
    val, grad = _eval(e, env, True)
    like = _template(env)
    return (_finish(val, like),) + tuple(_finish(g, like) for g in grad)


def _template(env: EvalEnv):
    for name in VARIABLES:
        val = getattr(env, name)
        if isinstance(val, np.ndarray) and val.ndim > 0:
            return val
    return 0.0
