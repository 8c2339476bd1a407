"""Expression mini-language for integrands f(t, y, v) and outer maps H(z1, ..., zn).

Grammar (operator precedence from loosest to tightest: ``+ -``, ``* /``,
unary ``-``, ``^``; ``^`` is right-associative)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?
    atom  := number | ident | ident '(' expr ')' | '(' expr ')'

so ``-t^2`` is ``-(t^2)`` and ``2^-1`` is ``0.5``.  Functions: ``sin cos exp
ln sqrt abs sign``.  ``sign`` appears as the derivative of ``abs``.

Trees are immutable dataclasses; :func:`evaluate` works on floats and on
numpy arrays alike, so one tree evaluates a whole grid at once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import DomainError, ParseError

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expr", "FUNCTIONS",
    "parse", "evaluate", "differentiate", "to_string", "free_variables",
    "substitute", "denominators", "constant_value", "const",
]

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt", "abs", "sign")


@dataclass(frozen=True)
class Num:
    """Non-negative literal; negative constants are ``Neg(Num(c))``."""

    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError(f"Num requires a finite non-negative value, got {self.value!r}")

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    arg: "Expr"

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"

    def __str__(self):
        return to_string(self)


Expr = Union[Num, Var, Neg, BinOp, Call]


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(text, pos, "a number, identifier or operator", repr(text[pos]))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


def _describe(tok):
    kind, value, _ = tok
    if kind == "end":
        return "end of input"
    if kind == "num":
        return f"number {value}"
    if kind == "ident":
        return f"identifier '{value}'"
    return f"'{value}'"


class _Parser:
    def __init__(self, text, variables):
        self.text = text
        self.variables = frozenset(variables)
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, expected, tok=None):
        tok = tok or self.tok
        return ParseError(self.text, tok[2], expected, _describe(tok))

    def accept(self, op):
        if self.tok[0] == "op" and self.tok[1] == op:
            self.i += 1
            return True
        return False

    def parse(self):
        node = self.expr()
        if self.tok[0] != "end":
            raise self.error("an operator or end of input")
        return node

    def expr(self):
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.accept("^"):
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, value, _ = tok = self.tok
        if kind == "num":
            self.i += 1
            return Num(float(value))
        if kind == "ident":
            self.i += 1
            if value in FUNCTIONS:
                if not self.accept("("):
                    raise self.error(f"'(' after function name '{value}'")
                arg = self.expr()
                if not self.accept(")"):
                    raise self.error("')'")
                return Call(value, arg)
            if value not in self.variables:
                allowed = ", ".join(sorted(self.variables)) or "none"
                raise ParseError(self.text, tok[2], f"a declared variable ({allowed})",
                                 f"unknown identifier '{value}'")
            return Var(value)
        if self.accept("("):
            node = self.expr()
            if not self.accept(")"):
                raise self.error("')'")
            return node
        raise self.error("an operand")


def parse(text: str, variables) -> Expr:
    """Parse ``text`` into an expression tree over the declared ``variables``.

    Raises :class:`ParseError` (with a character offset) on malformed input or
    on an identifier that is neither a declared variable nor a function.
    """
    return _Parser(text, variables).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _format_number(value):
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _render(node):
    if isinstance(node, Num):
        return _format_number(node.value), _ATOM_PREC
    if isinstance(node, Var):
        return node.name, _ATOM_PREC
    if isinstance(node, Call):
        return f"{node.func}({_render(node.arg)[0]})", _ATOM_PREC
    if isinstance(node, Neg):
        s, p = _render(node.arg)
        if p < _NEG_PREC:
            s = f"({s})"
        return "-" + s, _NEG_PREC
    prec = _PREC[node.op]
    ls, lp = _render(node.left)
    rs, rp = _render(node.right)
    if node.op == "^":
        if lp <= prec:
            ls = f"({ls})"
        if rp < _NEG_PREC:
            rs = f"({rs})"
        return f"{ls}^{rs}", prec
    if lp < prec:
        ls = f"({ls})"
    if rp <= prec:
        rs = f"({rs})"
    sep = f" {node.op} " if prec == 1 else node.op
    return ls + sep + rs, prec


def to_string(node: Expr) -> str:
    """Canonical text form; ``parse(to_string(e))`` rebuilds ``e`` exactly."""
    return _render(node)[0]


# ---------------------------------------------------------------------------
# evaluation


def _domain(node, message, strict, mask, result):
    if strict:
        raise DomainError(f"{message} in '{to_string(node)}'")
    result = np.array(result, dtype=float)
    result[np.broadcast_to(mask, result.shape)] = np.nan
    return result


def _first_bad(values, mask):
    vals = np.broadcast_to(np.asarray(values, dtype=float), np.shape(mask))
    return float(vals[mask].flat[0])


def _ev(node, env, strict):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        try:
            return np.asarray(env[node.name], dtype=float)
        except KeyError:
            raise DomainError(f"unbound variable '{node.name}'") from None
    if isinstance(node, Neg):
        return -_ev(node.arg, env, strict)
    if isinstance(node, Call):
        x = _ev(node.arg, env, strict)
        f = node.func
        if f == "ln":
            bad = x <= 0
            if np.any(bad):
                val = _first_bad(x, bad)
                x = np.where(bad, 1.0, x)
                return _domain(node, f"ln of non-positive value {val!r}", strict, bad, np.log(x))
            return np.log(x)
        if f == "sqrt":
            bad = x < 0
            if np.any(bad):
                val = _first_bad(x, bad)
                x = np.where(bad, 0.0, x)
                return _domain(node, f"sqrt of negative value {val!r}", strict, bad, np.sqrt(x))
            return np.sqrt(x)
        if f == "sign":
            bad = x == 0
            if np.any(bad):
                return _domain(node, "sign (derivative of abs) undefined at 0", strict, bad,
                               np.sign(x))
            return np.sign(x)
        return {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}[f](x)
    a = _ev(node.left, env, strict)
    b = _ev(node.right, env, strict)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        bad = b == 0
        if np.any(bad):
            b = np.where(bad, 1.0, b)
            return _domain(node, f"division by zero: denominator '{to_string(node.right)}' = 0",
                           strict, bad, a / b)
        return a / b
    # power
    bad_neg = (a < 0) & (b != np.round(b))
    bad_zero = (a == 0) & (b < 0)
    bad = bad_neg | bad_zero
    if np.any(bad):
        msg = ("negative base with non-integer exponent" if np.any(bad_neg)
               else "zero raised to a negative power")
        a = np.where(bad, 1.0, a)
        return _domain(node, msg, strict, bad, np.power(a, b))
    return np.power(a, b)


def evaluate(node: Expr, env: Mapping[str, object], *, strict: bool = True):
    """Evaluate ``node`` with variable values from ``env``.

    Values may be floats or numpy arrays (broadcast together).  With
    ``strict=True`` any domain violation raises :class:`DomainError`;
    with ``strict=False`` offending entries become NaN, which grid scans use.
    Overflow to a non-finite value is treated as a domain violation.
    """
    with np.errstate(all="ignore"):
        out = _ev(node, env, strict)
    out = np.asarray(out, dtype=float)
    if strict and not np.all(np.isfinite(out)):
        raise DomainError(f"non-finite value while evaluating '{to_string(node)}'")
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# constant folding helpers


def constant_value(node):
    """Return the float value of a literal (``Num`` or ``Neg(Num)``), else None."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg) and isinstance(node.arg, Num):
        return -node.arg.value
    return None


def const(value: float) -> Expr:
    value = float(value)
    if value < 0:
        return Neg(Num(-value))
    return Num(abs(value))


def _fold(value):
    return const(value) if math.isfinite(value) else None


def _add(a, b):
    ca, cb = constant_value(a), constant_value(b)
    if ca == 0:
        return b
    if cb == 0:
        return a
    if ca is not None and cb is not None:
        return _fold(ca + cb) or BinOp("+", a, b)
    return BinOp("+", a, b)


def _sub(a, b):
    ca, cb = constant_value(a), constant_value(b)
    if cb == 0:
        return a
    if ca == 0:
        return _neg(b)
    if ca is not None and cb is not None:
        return _fold(ca - cb) or BinOp("-", a, b)
    return BinOp("-", a, b)


def _mul(a, b):
    ca, cb = constant_value(a), constant_value(b)
    if ca == 0 or cb == 0:
        return Num(0.0)
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca is not None and cb is not None:
        return _fold(ca * cb) or BinOp("*", a, b)
    return BinOp("*", a, b)


def _div(a, b):
    ca, cb = constant_value(a), constant_value(b)
    if cb == 1:
        return a
    if ca == 0 and cb != 0:
        return Num(0.0)
    if ca is not None and cb is not None and cb != 0:
        return _fold(ca / cb) or BinOp("/", a, b)
    return BinOp("/", a, b)


def _pow(a, b):
    ca, cb = constant_value(a), constant_value(b)
    if cb == 1:
        return a
    if cb == 0:
        return Num(1.0)
    if ca is not None and cb is not None:
        if ca > 0 or (ca < 0 and float(cb).is_integer()) or (ca == 0 and cb > 0):
            try:
                return _fold(ca ** cb) or BinOp("^", a, b)
            except OverflowError:
                pass
    return BinOp("^", a, b)


def _neg(a):
    c = constant_value(a)
    if c is not None:
        return const(-c)
    return Neg(a)


# ---------------------------------------------------------------------------
# symbolic differentiation


def differentiate(node: Expr, var: str) -> Expr:
    """Exact derivative of ``node`` with respect to ``var``.

    Simplification is limited to constant folding and 0/1 identities.  The
    derivative of ``abs(u)`` is ``sign(u)*u'``, which fails on evaluation at 0.
    """
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        return _neg(differentiate(node.arg, var))
    if isinstance(node, Call):
        u = node.arg
        du = differentiate(u, var)
        if constant_value(du) == 0:
            return Num(0.0)
        f = node.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = Neg(Call("sin", u))
        elif f == "exp":
            outer = node
        elif f == "ln":
            return _div(du, u)
        elif f == "sqrt":
            return _div(du, _mul(Num(2.0), node))
        elif f == "abs":
            outer = Call("sign", u)
        else:  # sign: piecewise constant
            return Num(0.0)
        return _mul(outer, du)
    a, b = node.left, node.right
    da, db = differentiate(a, var), differentiate(b, var)
    op = node.op
    if op == "+":
        return _add(da, db)
    if op == "-":
        return _sub(da, db)
    if op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if op == "/":
        if constant_value(db) == 0:
            return _div(da, b)
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, Num(2.0)))
    # power
    cb = constant_value(b)
    if constant_value(db) == 0:
        if cb is None:
            # exponent free of var but not a literal
            return _mul(_mul(b, _pow(a, _sub(b, Num(1.0)))), da)
        return _mul(_mul(b, _pow(a, const(cb - 1.0))), da)
    if constant_value(da) == 0:
        return _mul(_mul(node, Call("ln", a)), db)
    return _mul(node, _add(_mul(db, Call("ln", a)), _div(_mul(b, da), a)))


# ---------------------------------------------------------------------------
# structural utilities


def free_variables(node: Expr) -> frozenset:
    if isinstance(node, Var):
        return frozenset([node.name])
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, (Neg, Call)):
        return free_variables(node.arg)
    return free_variables(node.left) | free_variables(node.right)


def substitute(node: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (no simplification)."""
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, mapping))
    if isinstance(node, Call):
        return Call(node.func, substitute(node.arg, mapping))
    return BinOp(node.op, substitute(node.left, mapping), substitute(node.right, mapping))


def denominators(node: Expr) -> list:
    """Subexpressions that must stay away from zero: divisors and negative-power bases."""
    out = []
    if isinstance(node, BinOp):
        if node.op == "/":
            out.append(node.right)
        elif node.op == "^":
            c = constant_value(node.right)
            if c is None or c < 0:
                out.append(node.left)
        out.extend(denominators(node.left))
        out.extend(denominators(node.right))
    elif isinstance(node, (Neg, Call)):
        out.extend(denominators(node.arg))
    return out
