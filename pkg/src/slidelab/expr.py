"""Arithmetic expression language for declaring vector-field components.

Grammar (usual precedence; ^ is right-associative and binds tighter than
unary minus):

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := primary ('^' factor)?
    primary := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'

Identifiers are the declared variables; functions are sin, cos, exp, tanh,
abs.  There is deliberately no sign() and no conditional: discontinuity
must enter through the framework's switching, never through user
expressions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "tanh": math.tanh,
    "abs": abs,
}


class ParseError(ValueError):
    def __init__(self, message: str, position: int, expected: str):
        super().__init__(f"{message} at offset {position} (expected {expected})")
        self.position = position
        self.expected = expected


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # '+', '-', '*', '/', '^'
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, Bin, Call]

_TOKEN = re.compile(r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
  | (?P<ws>\s+)
""", re.VERBOSE)


def _tokenize(text: str):
    tokens = []  # (kind, value, offset)
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, "token")
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = set(variables)

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, pos = self.peek()
        if kind == "op" and val == op:
            return self.advance()
        raise ParseError(f"got {val!r}" if val else "unexpected end of input",
                         pos, f"'{op}'")

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"trailing input {val!r}", pos, "end of input")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                e = Bin(val, e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                e = Bin(val, e, self.factor())
            else:
                return e

    def factor(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return Bin("^", base, self.factor())
        return base

    def primary(self) -> Expr:
        kind, val, pos = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "ident":
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            if val not in self.variables:
                raise ParseError(f"unknown identifier {val!r}", pos,
                                 "one of " + ", ".join(sorted(self.variables)))
            return Var(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ParseError(f"got {val!r}" if val else "unexpected end of input",
                         pos, "operand")


def parse_expr(text: str, variables: Sequence[str]) -> Expr:
    """Parse ``text`` over the given variable names; ParseError carries the
    byte offset and the token class that was expected."""
    return _Parser(text, variables).parse()


def _ipow(base: float, n: int) -> float:
    # exponentiation by squaring; exact sign handling for negative bases
    if n < 0:
        return 1.0 / _ipow(base, -n)
    out = 1.0
    while n:
        if n & 1:
            out *= base
        base *= base
        n >>= 1
    return out


def eval_expr(e: Expr, bindings: dict) -> float:
    """Standard double-precision evaluation; singularities yield inf/nan
    rather than raising, so callers can flag non-finite results."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise EvalError(f"unbound identifier {e.name!r}") from None
    if isinstance(e, Neg):
        return -eval_expr(e.operand, bindings)
    if isinstance(e, Call):
        try:
            return float(FUNCTIONS[e.func](eval_expr(e.arg, bindings)))
        except (ValueError, OverflowError):
            return math.nan
    a = eval_expr(e.left, bindings)
    if e.op == "^":
        if isinstance(e.right, Num) and float(e.right.value).is_integer() \
                and abs(e.right.value) <= 1024:
            return _ipow(a, int(e.right.value))
        b = eval_expr(e.right, bindings)
        try:
            return math.pow(a, b)
        except (ValueError, OverflowError):
            return math.nan
    b = eval_expr(e.right, bindings)
    try:
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
    except (ZeroDivisionError, OverflowError):
        if e.op == "/" and b == 0.0:
            if a == 0.0:
                return math.nan
            return math.copysign(math.inf, a) * math.copysign(1.0, b)
        return math.inf
    raise EvalError(f"unknown operator {e.op!r}")


def variables_of(e: Expr) -> set:
    if isinstance(e, Num):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return variables_of(e.operand)
    if isinstance(e, Call):
        return variables_of(e.arg)
    return variables_of(e.left) | variables_of(e.right)


# precedence levels used by the printer: addition 1, multiplication 2,
# unary minus 3, power 4, atoms 5
_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _fmt(e: Expr, parent_level: int) -> str:
    if isinstance(e, Num):
        s = repr(e.value)
        return s[:-2] if s.endswith(".0") else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_fmt(e.arg, 0)})"
    if isinstance(e, Neg):
        s = "-" + _fmt(e.operand, 3)
        return f"({s})" if parent_level > 3 else s
    lvl = _LEVEL[e.op]
    if e.op == "^":
        s = _fmt(e.left, 5) + " ^ " + _fmt(e.right, 3)
    else:
        s = f"{_fmt(e.left, lvl)} {e.op} {_fmt(e.right, lvl + 1)}"
    return f"({s})" if parent_level > lvl else s


def format_expr(e: Expr) -> str:
    """Minimal-parenthesis rendering; reparsing yields an identical tree."""
    return _fmt(e, 0)
