"""Symbolic scalar expressions in the variables x1..xn.

This is the representation layer for every smooth function in the package:
vector-field components, feedback coefficients, quotient sections.  The node
set is deliberately small (constants, variables, +, -, *, /, integer powers,
and the unary functions sin/cos/exp/log/sqrt) so that symbolic
differentiation is closed: the derivative of any expression is again an
expression.

Expressions are immutable and hashable; building them through the module
constructors (``add``, ``mul``, ...) applies constant folding and 0/1
absorption but no other rewriting, so two expressions compare equal exactly
when they have the same folded tree.

Grammar (EBNF)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' INT)?
    base   := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')' | '-' base
    VAR    := 'x' INT
    FUNC   := 'sin' | 'cos' | 'exp' | 'log' | 'sqrt'

The exponent must be a nonnegative integer literal.  Note that per this
grammar a leading minus is part of ``base``, so ``-x1^2`` parses as
``(-x1)^2``; write ``-(x1^2)`` for the other reading.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScalarExpr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Power",
    "ExprError",
    "ExprSyntaxError",
    "EvalDomainError",
    "NotPolynomialError",
    "parse_expr",
    "diff",
    "evaluate",
    "evaluate_many",
    "substitute",
    "to_string",
    "const",
    "var",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "unary",
    "max_var_index",
    "depends_on",
    "collect_powers",
    "integrate_from_zero",
    "expand_monomials",
    "is_zero_expanded",
    "fold_difference",
]

UNARY_FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    """Raised on malformed input text; carries the 0-based position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


class EvalDomainError(ExprError):
    """Raised when evaluation hits an invalid operand; carries the node."""

    def __init__(self, message: str, node: "ScalarExpr"):
        super().__init__(f"{message} in '{to_string(node)}'")
        self.node = node


class NotPolynomialError(ExprError):
    """Raised when an expression is not polynomial in the requested variable."""


@dataclass(frozen=True)
class ScalarExpr:
    """Base node type; concrete nodes are Const, Var, Unary, Binary, Power."""

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Const(ScalarExpr):
    value: float


@dataclass(frozen=True)
class Var(ScalarExpr):
    index: int  # 1-based


@dataclass(frozen=True)
class Unary(ScalarExpr):
    op: str  # "neg" or one of UNARY_FUNCTIONS
    arg: ScalarExpr


@dataclass(frozen=True)
class Binary(ScalarExpr):
    op: str  # one of "+-*/"
    lhs: ScalarExpr
    rhs: ScalarExpr


@dataclass(frozen=True)
class Power(ScalarExpr):
    base: ScalarExpr
    exponent: int  # >= 2 after folding


ZERO = Const(0.0)
ONE = Const(1.0)


def const(value: float) -> Const:
    return Const(float(value))


def var(index: int) -> Var:
    if index < 1:
        raise ValueError(f"variable index must be >= 1, got {index}")
    return Var(index)


def _is_const(e: ScalarExpr, value: float | None = None) -> bool:
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


def add(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Binary("+", a, b)


def sub(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Binary("*", a, b)


def div(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    # 0/e folds to 0: derivatives of quotients must collapse cleanly when the
    # numerator vanishes identically.
    if _is_const(a, 0.0):
        return ZERO
    if isinstance(b, Const) and b.value != 0.0:
        if isinstance(a, Const):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    return Binary("/", a, b)


def neg(a: ScalarExpr) -> ScalarExpr:
    if isinstance(a, Const):
        return Const(-a.value)
    return Unary("neg", a)


def power(base: ScalarExpr, exponent: int) -> ScalarExpr:
    if exponent < 0 or exponent != int(exponent):
        raise ValueError(f"exponent must be a nonnegative integer, got {exponent}")
    exponent = int(exponent)
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const):
        try:
            return Const(base.value**exponent)
        except OverflowError:
            pass
    return Power(base, exponent)


def unary(op: str, a: ScalarExpr) -> ScalarExpr:
    if op == "neg":
        return neg(a)
    if op not in UNARY_FUNCTIONS:
        raise ValueError(f"unknown unary function '{op}'")
    if isinstance(a, Const):
        try:
            return Const(getattr(math, op)(a.value))
        except (ValueError, OverflowError):
            pass  # leave unfolded; evaluation reports the domain error
    return Unary(op, a)


# ---------------------------------------------------------------------------
# parsing


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "number" | "var" | "func" | "op" | "end"
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad = len(text) - len(stripped)
            raise ExprSyntaxError(f"unexpected character '{text[bad]}'", bad)
        pos = m.end()
        if m.lastgroup == "number":
            tokens.append(_Token("number", m.group("number"), m.start("number")))
        elif m.lastgroup == "name":
            name = m.group("name")
            at = m.start("name")
            if re.fullmatch(r"x\d+", name):
                tokens.append(_Token("var", name, at))
            elif name in UNARY_FUNCTIONS:
                tokens.append(_Token("func", name, at))
            else:
                raise ExprSyntaxError(f"unknown identifier '{name}'", at)
        else:
            tokens.append(_Token("op", m.group("op"), m.start("op")))
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], n: int):
        self.tokens = tokens
        self.n = n
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, text: str) -> None:
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            raise ExprSyntaxError(f"expected '{text}'", tok.pos)
        self.advance()

    def expr(self) -> ScalarExpr:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self) -> ScalarExpr:
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            rhs = self.factor()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def factor(self) -> ScalarExpr:
        node = self.base()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            tok = self.peek()
            if tok.kind != "number" or not re.fullmatch(r"\d+", tok.text):
                raise ExprSyntaxError("exponent must be a nonnegative integer literal", tok.pos)
            self.advance()
            node = power(node, int(tok.text))
        return node

    def base(self) -> ScalarExpr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "var":
            self.advance()
            index = int(tok.text[1:])
            if not 1 <= index <= self.n:
                raise ExprSyntaxError(
                    f"variable x{index} out of range for dimension {self.n}", tok.pos
                )
            return Var(index)
        if tok.kind == "func":
            self.advance()
            self.expect_op("(")
            inner = self.expr()
            self.expect_op(")")
            return unary(tok.text, inner)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            inner = self.expr()
            self.expect_op(")")
            return inner
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return neg(self.base())
        raise ExprSyntaxError(f"unexpected token '{tok.text or 'end of input'}'", tok.pos)


def parse_expr(text: str, n: int) -> ScalarExpr:
    """Parse ``text`` into an expression in variables x1..xn.

    Raises ExprSyntaxError with a 0-based position on malformed input or a
    variable index outside 1..n.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    parser = _Parser(_tokenize(text), n)
    node = parser.expr()
    end = parser.peek()
    if end.kind != "end":
        raise ExprSyntaxError(f"trailing input '{end.text}'", end.pos)
    return node


# ---------------------------------------------------------------------------
# printing


_PREC_ADD = 10
_PREC_MUL = 20
_PREC_NEG = 25
_PREC_POW = 30
_PREC_ATOM = 40


def _format_const(value: float) -> str:
    return repr(value)


def _print(e: ScalarExpr) -> tuple[str, int]:
    if isinstance(e, Const):
        text = _format_const(e.value)
        return text, _PREC_NEG if text.startswith("-") else _PREC_ATOM
    if isinstance(e, Var):
        return f"x{e.index}", _PREC_ATOM
    if isinstance(e, Unary):
        inner, prec = _print(e.arg)
        if e.op == "neg":
            if prec < _PREC_ATOM:
                inner = f"({inner})"
            return f"-{inner}", _PREC_NEG
        return f"{e.op}({inner})", _PREC_ATOM
    if isinstance(e, Power):
        inner, prec = _print(e.base)
        if prec < _PREC_ATOM:
            inner = f"({inner})"
        return f"{inner}^{e.exponent}", _PREC_POW
    if isinstance(e, Binary):
        myprec = _PREC_ADD if e.op in "+-" else _PREC_MUL
        ls, lp = _print(e.lhs)
        rs, rp = _print(e.rhs)
        if lp < myprec:
            ls = f"({ls})"
        if rp <= myprec:  # operators are left-associative
            rs = f"({rs})"
        return f"{ls} {e.op} {rs}", myprec
    raise TypeError(f"not an expression node: {e!r}")


def to_string(e: ScalarExpr) -> str:
    """Render ``e`` so that parsing the result rebuilds the same tree."""
    return _print(e)[0]


# ---------------------------------------------------------------------------
# differentiation


def diff(e: ScalarExpr, i: int) -> ScalarExpr:
    """Exact symbolic partial derivative with respect to x_i."""
    if i < 1:
        raise ValueError(f"variable index must be >= 1, got {i}")
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == i else ZERO
    if isinstance(e, Binary):
        da, db = diff(e.lhs, i), diff(e.rhs, i)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, e.rhs), mul(e.lhs, db))
        # quotient rule
        return div(sub(mul(da, e.rhs), mul(e.lhs, db)), power(e.rhs, 2))
    if isinstance(e, Power):
        inner = mul(Const(float(e.exponent)), power(e.base, e.exponent - 1))
        return mul(inner, diff(e.base, i))
    if isinstance(e, Unary):
        da = diff(e.arg, i)
        if e.op == "neg":
            return neg(da)
        if e.op == "sin":
            return mul(unary("cos", e.arg), da)
        if e.op == "cos":
            return mul(neg(unary("sin", e.arg)), da)
        if e.op == "exp":
            return mul(unary("exp", e.arg), da)
        if e.op == "log":
            return div(da, e.arg)
        if e.op == "sqrt":
            return div(da, mul(Const(2.0), unary("sqrt", e.arg)))
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# evaluation


def _evaluate_memo(e: ScalarExpr, q, memo: dict) -> float:
    # memoized on node identity: closed-form coefficients share large
    # subtrees (determinants), which would otherwise be re-evaluated
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        value = e.value
    elif isinstance(e, Var):
        if e.index > len(q):
            raise ExprError(f"variable x{e.index} out of range for point of dimension {len(q)}")
        value = float(q[e.index - 1])
    elif isinstance(e, Binary):
        a = _evaluate_memo(e.lhs, q, memo)
        b = _evaluate_memo(e.rhs, q, memo)
        if e.op == "+":
            value = a + b
        elif e.op == "-":
            value = a - b
        elif e.op == "*":
            value = a * b
        else:
            if b == 0.0:
                raise EvalDomainError("division by zero", e)
            value = a / b
    elif isinstance(e, Power):
        base = _evaluate_memo(e.base, q, memo)
        try:
            value = float(base**e.exponent)
        except OverflowError:
            raise EvalDomainError("overflow", e) from None
    elif isinstance(e, Unary):
        a = _evaluate_memo(e.arg, q, memo)
        if e.op == "neg":
            value = -a
        else:
            if e.op == "log" and a <= 0.0:
                raise EvalDomainError(f"log of non-positive value {a}", e)
            if e.op == "sqrt" and a < 0.0:
                raise EvalDomainError(f"sqrt of negative value {a}", e)
            try:
                value = getattr(math, e.op)(a)
            except (ValueError, OverflowError):
                raise EvalDomainError(f"invalid argument {a}", e) from None
    else:
        raise TypeError(f"not an expression node: {e!r}")
    memo[key] = value
    return value


def evaluate(e: ScalarExpr, q) -> float:
    """Evaluate at a point (sequence of floats); raises EvalDomainError."""
    return _evaluate_memo(e, q, {})


def evaluate_all(exprs, q) -> list[float]:
    """Evaluate several expressions at one point with shared subtree values."""
    memo: dict = {}
    return [_evaluate_memo(e, q, memo) for e in exprs]


def evaluate_many(e: ScalarExpr, points: np.ndarray) -> np.ndarray:
    """Vectorized evaluation over an (N, n) array of points."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError(f"points must be a 2-D array, got shape {points.shape}")
    memo: dict = {}

    def rec(node: ScalarExpr) -> np.ndarray:
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        out = _rec(node)
        memo[id(node)] = out
        return out

    def _rec(node: ScalarExpr) -> np.ndarray:
        if isinstance(node, Const):
            return np.full(points.shape[0], node.value)
        if isinstance(node, Var):
            if node.index > points.shape[1]:
                raise ExprError(
                    f"variable x{node.index} out of range for points of dimension {points.shape[1]}"
                )
            return points[:, node.index - 1]
        if isinstance(node, Binary):
            a, b = rec(node.lhs), rec(node.rhs)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            with np.errstate(divide="ignore", invalid="ignore"):
                out = a / b
            if not np.all(np.isfinite(out)):
                raise EvalDomainError("division by zero", node)
            return out
        if isinstance(node, Power):
            base = rec(node.base)
            with np.errstate(over="ignore"):
                out = base**node.exponent
            if not np.all(np.isfinite(out)):
                raise EvalDomainError("overflow", node)
            return out
        if isinstance(node, Unary):
            a = rec(node.arg)
            if node.op == "neg":
                return -a
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = getattr(np, node.op)(a)
            if not np.all(np.isfinite(out)):
                raise EvalDomainError("invalid argument", node)
            return out
        raise TypeError(f"not an expression node: {node!r}")

    return rec(e)


# ---------------------------------------------------------------------------
# structural helpers


def substitute(e: ScalarExpr, mapping: dict[int, ScalarExpr]) -> ScalarExpr:
    """Replace variables by expressions; the result is re-folded."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.index, e)
    if isinstance(e, Binary):
        a, b = substitute(e.lhs, mapping), substitute(e.rhs, mapping)
        return {"+": add, "-": sub, "*": mul, "/": div}[e.op](a, b)
    if isinstance(e, Power):
        return power(substitute(e.base, mapping), e.exponent)
    if isinstance(e, Unary):
        return unary(e.op, substitute(e.arg, mapping))
    raise TypeError(f"not an expression node: {e!r}")


def max_var_index(e: ScalarExpr) -> int:
    if isinstance(e, Const):
        return 0
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Binary):
        return max(max_var_index(e.lhs), max_var_index(e.rhs))
    if isinstance(e, Power):
        return max_var_index(e.base)
    if isinstance(e, Unary):
        return max_var_index(e.arg)
    raise TypeError(f"not an expression node: {e!r}")


def depends_on(e: ScalarExpr, i: int) -> bool:
    if isinstance(e, Const):
        return False
    if isinstance(e, Var):
        return e.index == i
    if isinstance(e, Binary):
        return depends_on(e.lhs, i) or depends_on(e.rhs, i)
    if isinstance(e, Power):
        return depends_on(e.base, i)
    if isinstance(e, Unary):
        return depends_on(e.arg, i)
    raise TypeError(f"not an expression node: {e!r}")


def collect_powers(e: ScalarExpr, i: int) -> dict[int, ScalarExpr]:
    """Write ``e`` as sum_p c_p * x_i^p with coefficients free of x_i.

    Raises NotPolynomialError when ``e`` is not polynomial in x_i (for
    example when x_i appears inside a function argument or a denominator).
    """
    if not depends_on(e, i):
        return {0: e}
    if isinstance(e, Var):
        return {1: ONE}
    if isinstance(e, Binary):
        if e.op in "+-":
            left = collect_powers(e.lhs, i)
            right = collect_powers(e.rhs, i)
            out = dict(left)
            for p, c in right.items():
                if p in out:
                    out[p] = add(out[p], c) if e.op == "+" else sub(out[p], c)
                else:
                    out[p] = c if e.op == "+" else neg(c)
            return {p: c for p, c in out.items() if not _is_const(c, 0.0)}
        if e.op == "*":
            left = collect_powers(e.lhs, i)
            right = collect_powers(e.rhs, i)
            out: dict[int, ScalarExpr] = {}
            for pa, ca in left.items():
                for pb, cb in right.items():
                    term = mul(ca, cb)
                    out[pa + pb] = add(out[pa + pb], term) if pa + pb in out else term
            return {p: c for p, c in out.items() if not _is_const(c, 0.0)}
        if depends_on(e.rhs, i):
            raise NotPolynomialError(f"x{i} appears in a denominator of '{to_string(e)}'")
        return {p: div(c, e.rhs) for p, c in collect_powers(e.lhs, i).items()}
    if isinstance(e, Power):
        out = {0: ONE}
        base = collect_powers(e.base, i)
        for _ in range(e.exponent):
            nxt: dict[int, ScalarExpr] = {}
            for pa, ca in out.items():
                for pb, cb in base.items():
                    term = mul(ca, cb)
                    nxt[pa + pb] = add(nxt[pa + pb], term) if pa + pb in nxt else term
            out = nxt
        return {p: c for p, c in out.items() if not _is_const(c, 0.0)}
    if isinstance(e, Unary):
        if e.op == "neg":
            return {p: neg(c) for p, c in collect_powers(e.arg, i).items()}
        raise NotPolynomialError(f"x{i} appears inside {e.op}(...)")
    raise TypeError(f"not an expression node: {e!r}")


def integrate_from_zero(e: ScalarExpr, i: int) -> ScalarExpr:
    """Exact integral of ``e`` in x_i from 0 to x_i (polynomial in x_i only)."""
    out: ScalarExpr = ZERO
    for p, c in sorted(collect_powers(e, i).items()):
        out = add(out, mul(div(c, Const(float(p + 1))), power(Var(i), p + 1)))
    return out


# ---------------------------------------------------------------------------
# monomial expansion (zero recognition)
#
# Expands +, -, *, integer powers over "atoms": variables and any subtree
# that is not polynomial (function calls, general quotients).  A quotient
# whose expanded denominator is a single monomial divides through exactly.
# This is only a zero test; expressions handed to users stay unexpanded.


_Monomial = tuple[tuple[ScalarExpr, int], ...]


def _mono_mul(a: _Monomial, b: _Monomial) -> _Monomial:
    powers: dict[ScalarExpr, int] = dict(a)
    for atom, p in b:
        powers[atom] = powers.get(atom, 0) + p
    items = [(atom, p) for atom, p in powers.items() if p != 0]
    items.sort(key=lambda item: to_string(item[0]))
    return tuple(items)


def _poly_mul(a: dict[_Monomial, float], b: dict[_Monomial, float]) -> dict[_Monomial, float]:
    out: dict[_Monomial, float] = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            key = _mono_mul(ma, mb)
            out[key] = out.get(key, 0.0) + ca * cb
    return {m: c for m, c in out.items() if c != 0.0}


def _poly_addto(acc: dict[_Monomial, float], other: dict[_Monomial, float], sign: float) -> None:
    for m, c in other.items():
        acc[m] = acc.get(m, 0.0) + sign * c


def expand_monomials(e: ScalarExpr) -> dict[_Monomial, float]:
    if isinstance(e, Const):
        return {(): e.value} if e.value != 0.0 else {}
    if isinstance(e, Var):
        return {((e, 1),): 1.0}
    if isinstance(e, Binary):
        if e.op in "+-":
            out = dict(expand_monomials(e.lhs))
            _poly_addto(out, expand_monomials(e.rhs), 1.0 if e.op == "+" else -1.0)
            return {m: c for m, c in out.items() if c != 0.0}
        if e.op == "*":
            return _poly_mul(expand_monomials(e.lhs), expand_monomials(e.rhs))
        denom = expand_monomials(e.rhs)
        if len(denom) == 1:
            ((dmono, dcoef),) = denom.items()
            inv = {tuple((atom, -p) for atom, p in dmono): 1.0 / dcoef}
            return _poly_mul(expand_monomials(e.lhs), inv)
        return {((e, 1),): 1.0}
    if isinstance(e, Power):
        out: dict[_Monomial, float] = {(): 1.0}
        base = expand_monomials(e.base)
        for _ in range(e.exponent):
            out = _poly_mul(out, base)
        return out
    if isinstance(e, Unary):
        if e.op == "neg":
            return {m: -c for m, c in expand_monomials(e.arg).items()}
        return {((e, 1),): 1.0}
    raise TypeError(f"not an expression node: {e!r}")


def is_zero_expanded(e: ScalarExpr) -> bool:
    """True when ``e`` cancels to 0 under exact monomial expansion."""
    return not expand_monomials(e)


def fold_difference(e: ScalarExpr) -> ScalarExpr:
    """Return Const(0) when ``e`` expands to zero, else ``e`` unchanged."""
    return ZERO if is_zero_expanded(e) else e
