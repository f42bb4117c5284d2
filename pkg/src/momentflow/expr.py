"""Expression trees for potentials and test functions.

The grammar is closed under differentiation, so every coefficient field a
geometry needs (up to eighth derivatives of a potential) is evaluated exactly,
never by finite differences. This matters for toric symplectic potentials,
whose log terms are singular on the polytope boundary.

Grammar (EBNF, also in docs/grammar.md)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = "-" unary | power ;
    power    = atom [ "^" integer ] ;
    atom     = number | "pi" | variable | function "(" expr ")" | "(" expr ")" ;
    function = "sin" | "cos" | "exp" | "log" ;
    variable = "x" digits ;          (* x1, x2, ... *)

Angles are radians and "pi" is reserved. Exponents are (possibly negative)
integer literals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownIdentifier

MAX_DERIVATIVE_ORDER = 8

__all__ = [
    "Expr", "parse", "derive", "evaluate", "to_text", "MAX_DERIVATIVE_ORDER",
]


class Expr:
    """Base node. Immutable; evaluation is pure and thread-safe."""

    __slots__ = ()

    def __repr__(self):
        return f"{type(self).__name__}({to_text(self)!r})"


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: float
    label: str | None = None


@dataclass(frozen=True, repr=False)
class Var(Expr):
    axis: int


@dataclass(frozen=True, repr=False)
class Add(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True, repr=False)
class Sub(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True, repr=False)
class Mul(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True, repr=False)
class Div(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    a: Expr


@dataclass(frozen=True, repr=False)
class Call(Expr):
    func: str  # sin | cos | exp | log
    arg: Expr


PI = Const(math.pi, "pi")
ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


# Smart constructors fold constants and absorb 0/1 so derivative trees stay
# small through eight orders.

def c_add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def c_sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return c_neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Sub(a, b)


def c_mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def c_div(a, b):
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def c_pow(base, exponent):
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const) and not (base.value == 0.0 and exponent < 0):
        return Const(base.value ** exponent)
    return Pow(base, exponent)


def c_neg(a):
    if isinstance(a, Neg):
        return a.a
    if isinstance(a, Const):
        return Const(-a.value)
    return Neg(a)


# ---------------------------------------------------------------------------
# Parser: hand-rolled recursive descent with byte offsets in errors.

_FUNCTIONS = ("sin", "cos", "exp", "log")


class _Scanner:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch):
        if self.peek() != ch:
            raise ExprSyntaxError(f"expected {ch!r}", self.pos)
        self.pos += 1


def parse(text: str) -> Expr:
    """Parse expression text into a tree.

    Raises ExprSyntaxError with the byte offset of the problem, or
    UnknownIdentifier for names outside the grammar.
    """
    sc = _Scanner(text)
    e = _parse_expr(sc)
    sc.skip_ws()
    if sc.pos != len(text):
        raise ExprSyntaxError("trailing input", sc.pos)
    return e


def _parse_expr(sc):
    e = _parse_term(sc)
    while True:
        ch = sc.peek()
        if ch == "+":
            sc.pos += 1
            e = Add(e, _parse_term(sc))
        elif ch == "-":
            sc.pos += 1
            e = Sub(e, _parse_term(sc))
        else:
            return e


def _parse_term(sc):
    e = _parse_unary(sc)
    while True:
        ch = sc.peek()
        if ch == "*":
            sc.pos += 1
            e = Mul(e, _parse_unary(sc))
        elif ch == "/":
            sc.pos += 1
            e = Div(e, _parse_unary(sc))
        else:
            return e


def _parse_unary(sc):
    if sc.peek() == "-":
        sc.pos += 1
        return Neg(_parse_unary(sc))
    return _parse_power(sc)


def _parse_power(sc):
    base = _parse_atom(sc)
    if sc.peek() == "^":
        sc.pos += 1
        sign = 1
        if sc.peek() == "-":
            sc.pos += 1
            sign = -1
        start = sc.pos
        while sc.pos < len(sc.text) and sc.text[sc.pos].isdigit():
            sc.pos += 1
        if sc.pos == start:
            raise ExprSyntaxError("expected integer exponent", sc.pos)
        return Pow(base, sign * int(sc.text[start:sc.pos]))
    return base


def _parse_atom(sc):
    ch = sc.peek()
    if ch == "":
        raise ExprSyntaxError("unexpected end of input", sc.pos)
    if ch == "(":
        sc.pos += 1
        e = _parse_expr(sc)
        sc.expect(")")
        return e
    if ch.isdigit() or ch == ".":
        return _parse_number(sc)
    if ch.isalpha() or ch == "_":
        start = sc.pos
        while sc.pos < len(sc.text) and (sc.text[sc.pos].isalnum() or sc.text[sc.pos] == "_"):
            sc.pos += 1
        name = sc.text[start:sc.pos]
        if name == "pi":
            return PI
        if name in _FUNCTIONS:
            sc.expect("(")
            arg = _parse_expr(sc)
            sc.expect(")")
            return Call(name, arg)
        if name.startswith("x") and name[1:].isdigit() and len(name) > 1:
            idx = int(name[1:])
            if idx < 1:
                raise UnknownIdentifier(f"variable index must start at 1: {name!r}")
            return Var(idx - 1)
        raise UnknownIdentifier(f"unknown identifier {name!r} at offset {start}")
    raise ExprSyntaxError(f"unexpected character {ch!r}", sc.pos)


def _parse_number(sc):
    start = sc.pos
    text = sc.text
    n = len(text)
    while sc.pos < n and text[sc.pos].isdigit():
        sc.pos += 1
    if sc.pos < n and text[sc.pos] == ".":
        sc.pos += 1
        while sc.pos < n and text[sc.pos].isdigit():
            sc.pos += 1
    if sc.pos < n and text[sc.pos] in "eE":
        mark = sc.pos
        sc.pos += 1
        if sc.pos < n and text[sc.pos] in "+-":
            sc.pos += 1
        if sc.pos < n and text[sc.pos].isdigit():
            while sc.pos < n and text[sc.pos].isdigit():
                sc.pos += 1
        else:
            sc.pos = mark  # not an exponent, back off
    token = text[start:sc.pos]
    try:
        return Const(float(token))
    except ValueError:
        raise ExprSyntaxError(f"bad number {token!r}", start) from None


# ---------------------------------------------------------------------------
# Printer. parse(to_text(e)) is structurally equal to e.

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 2, 3, 4


def _prec(e):
    if isinstance(e, (Add, Sub)):
        return _PREC_ADD
    if isinstance(e, (Mul, Div)):
        return _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _wrap(e, minimum):
    s = to_text(e)
    return f"({s})" if _prec(e) < minimum else s


def to_text(e: Expr) -> str:
    """Canonical text form of a tree."""
    if isinstance(e, Const):
        if e.label:
            return e.label
        if e.value < 0:
            return f"-{-e.value!r}"
        return repr(e.value)
    if isinstance(e, Var):
        return f"x{e.axis + 1}"
    if isinstance(e, Add):
        return f"{_wrap(e.a, _PREC_ADD)}+{_wrap(e.b, _PREC_ADD + 1)}"
    if isinstance(e, Sub):
        return f"{_wrap(e.a, _PREC_ADD)}-{_wrap(e.b, _PREC_ADD + 1)}"
    if isinstance(e, Mul):
        return f"{_wrap(e.a, _PREC_MUL)}*{_wrap(e.b, _PREC_MUL + 1)}"
    if isinstance(e, Div):
        return f"{_wrap(e.a, _PREC_MUL)}/{_wrap(e.b, _PREC_MUL + 1)}"
    if isinstance(e, Neg):
        return f"-{_wrap(e.a, _PREC_NEG + 1)}"
    if isinstance(e, Pow):
        expo = str(e.exponent) if e.exponent >= 0 else f"-{-e.exponent}"
        return f"{_wrap(e.base, _PREC_ATOM)}^{expo}"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# Exact differentiation. Closed in the grammar by construction.

def _d(e, axis):
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.axis == axis else ZERO
    if isinstance(e, Add):
        return c_add(_d(e.a, axis), _d(e.b, axis))
    if isinstance(e, Sub):
        return c_sub(_d(e.a, axis), _d(e.b, axis))
    if isinstance(e, Mul):
        return c_add(c_mul(_d(e.a, axis), e.b), c_mul(e.a, _d(e.b, axis)))
    if isinstance(e, Div):
        num = c_sub(c_mul(_d(e.a, axis), e.b), c_mul(e.a, _d(e.b, axis)))
        return c_div(num, c_pow(e.b, 2))
    if isinstance(e, Neg):
        return c_neg(_d(e.a, axis))
    if isinstance(e, Pow):
        inner = _d(e.base, axis)
        return c_mul(c_mul(Const(float(e.exponent)), c_pow(e.base, e.exponent - 1)), inner)
    if isinstance(e, Call):
        inner = _d(e.arg, axis)
        if e.func == "sin":
            return c_mul(Call("cos", e.arg), inner)
        if e.func == "cos":
            return c_neg(c_mul(Call("sin", e.arg), inner))
        if e.func == "exp":
            return c_mul(e, inner)
        if e.func == "log":
            return c_div(inner, e.arg)
    raise TypeError(f"not an Expr: {e!r}")


def derive(e: Expr, axis: int, order: int = 1) -> Expr:
    """Exact partial derivative d^order/d(x_axis)^order.

    The cap ``order <= MAX_DERIVATIVE_ORDER`` reflects the deepest composition
    any geometry in this package needs (sixth metric derivatives of a
    potential through the worst raising path) and is asserted.
    """
    if order < 0 or order > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order must be in 0..{MAX_DERIVATIVE_ORDER}, got {order}")
    for _ in range(order):
        e = _d(e, axis)
    return e


def derive_multi(e: Expr, alpha) -> Expr:
    """Mixed partial with multi-index alpha (one entry per axis)."""
    if sum(alpha) > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"total derivative order {sum(alpha)} exceeds {MAX_DERIVATIVE_ORDER}")
    for axis, k in enumerate(alpha):
        for _ in range(k):
            e = _d(e, axis)
    return e


# ---------------------------------------------------------------------------
# Evaluation. Vectorized over numpy point arrays.

def evaluate(e: Expr, point):
    """Evaluate at a point (sequence of per-axis scalars or broadcastable arrays)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.axis >= len(point):
            raise DomainError(f"point has no coordinate x{e.axis + 1}")
        return point[e.axis]
    if isinstance(e, Add):
        return evaluate(e.a, point) + evaluate(e.b, point)
    if isinstance(e, Sub):
        return evaluate(e.a, point) - evaluate(e.b, point)
    if isinstance(e, Mul):
        return evaluate(e.a, point) * evaluate(e.b, point)
    if isinstance(e, Div):
        denom = evaluate(e.b, point)
        if np.any(np.asarray(denom) == 0.0):
            raise DomainError("division by zero")
        return evaluate(e.a, point) / denom
    if isinstance(e, Neg):
        return -evaluate(e.a, point)
    if isinstance(e, Pow):
        base = evaluate(e.base, point)
        if e.exponent < 0 and np.any(np.asarray(base) == 0.0):
            raise DomainError("zero raised to a negative power")
        return base ** e.exponent
    if isinstance(e, Call):
        arg = evaluate(e.arg, point)
        if e.func == "sin":
            return np.sin(arg)
        if e.func == "cos":
            return np.cos(arg)
        if e.func == "exp":
            return np.exp(arg)
        if e.func == "log":
            if np.any(np.asarray(arg) <= 0.0):
                raise DomainError("log of a non-positive value")
            return np.log(arg)
    raise TypeError(f"not an Expr: {e!r}")


def max_axis(e: Expr) -> int:
    """Largest variable axis used, or -1 for a constant expression."""
    if isinstance(e, Var):
        return e.axis
    if isinstance(e, (Const,)):
        return -1
    if isinstance(e, (Add, Sub, Mul, Div)):
        return max(max_axis(e.a), max_axis(e.b))
    if isinstance(e, Neg):
        return max_axis(e.a)
    if isinstance(e, Pow):
        return max_axis(e.base)
    if isinstance(e, Call):
        return max_axis(e.arg)
    raise TypeError(f"not an Expr: {e!r}")
