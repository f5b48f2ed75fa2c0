"""Small analytic-expression language for defining functional inputs.

Grammar (standard precedence, ``^`` binds tightest and is right-associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | FUNC '(' expr ')' | VAR | '(' expr ')'

Variables are ``x1 .. xd``; the supported functions are sin, cos, exp,
sqrt and abs.  Parsing is deterministic and errors report the byte
offset into the source text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ExpressionError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

_VAR_RE = re.compile(r"^x([1-9][0-9]*)$")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, so Var(2) is x2


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expression"
    right: "Expression"


Expression = Union[Num, Var, Call, Neg, BinOp]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            # skip trailing whitespace without complaint
            if text[pos:].strip() == "":
                break
            bad = len(text) - len(text[pos:].lstrip())
            raise ExpressionError(
                f"unexpected character {text[bad]!r}", offset=bad
            )
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}", offset=off)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {val!r}", offset=off)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                node = BinOp(val, node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                node = BinOp(val, node, self.unary())
            else:
                return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            # right-associative, and the exponent may carry a unary minus
            node = BinOp("^", node, self.unary())
        return node

    def atom(self):
        kind, val, off = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "ident":
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            m = _VAR_RE.match(val)
            if m:
                return Var(int(m.group(1)))
            raise ExpressionError(f"unknown identifier {val!r}", offset=off)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "end":
            raise ExpressionError("unexpected end of expression", offset=off)
        raise ExpressionError(f"unexpected token {val!r}", offset=off)


def parse_expression(text: str) -> Expression:
    """Parse ``text`` into an AST, raising ExpressionError with a byte
    offset on malformed input."""
    if not isinstance(text, str) or text.strip() == "":
        raise ExpressionError("empty expression", offset=0)
    return _Parser(text).parse()


# Precedence levels used by the printer; atoms sit above everything.
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return 9


def print_expression(node: Expression) -> str:
    """Render an AST so that parse(print(ast)) == ast."""
    if isinstance(node, Num):
        v = node.value
        if v == int(v) and abs(v) < 1e16:
            return str(int(v))
        return repr(v)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Call):
        return f"{node.func}({print_expression(node.arg)})"
    if isinstance(node, Neg):
        inner = print_expression(node.arg)
        # -(a+b) and -(a*b) reassociate if left bare
        if _prec(node.arg) <= 2:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        lhs = print_expression(node.left)
        rhs = print_expression(node.right)
        p = _PREC[node.op]
        if node.op == "^":
            # left operand of ^ must be atomic to survive a round trip
            if _prec(node.left) <= p:
                lhs = f"({lhs})"
            if _prec(node.right) < _PREC["neg"]:
                rhs = f"({rhs})"
        else:
            if _prec(node.left) < p:
                lhs = f"({lhs})"
            if _prec(node.right) <= p:
                rhs = f"({rhs})"
        return f"{lhs}{node.op}{rhs}"
    raise TypeError(f"not an expression node: {node!r}")


def expression_variables(node: Expression) -> set:
    """Indices of all variables referenced by the AST."""
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Call):
        return expression_variables(node.arg)
    if isinstance(node, Neg):
        return expression_variables(node.arg)
    if isinstance(node, BinOp):
        return expression_variables(node.left) | expression_variables(node.right)
    return set()


def evaluate_expression(node: Expression, points: np.ndarray) -> np.ndarray:
    """Evaluate the AST at each row of ``points`` (shape (n, d)).

    Raises ExpressionError if a variable index exceeds d.  Non-finite
    values are returned as-is; callers decide whether to reject them.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ExpressionError("points must be a 2-d array")
    d = points.shape[1]

    def ev(n):
        if isinstance(n, Num):
            return np.full(points.shape[0], n.value)
        if isinstance(n, Var):
            if n.index > d:
                raise ExpressionError(
                    f"undefined variable x{n.index} (domain has {d} dimension(s))"
                )
            return points[:, n.index - 1].copy()
        if isinstance(n, Call):
            return FUNCTIONS[n.func](ev(n.arg))
        if isinstance(n, Neg):
            return -ev(n.arg)
        if isinstance(n, BinOp):
            a, b = ev(n.left), ev(n.right)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            if n.op == "/":
                with np.errstate(divide="ignore", invalid="ignore"):
                    return a / b
            with np.errstate(invalid="ignore"):
                return np.power(a, b)
        raise TypeError(f"not an expression node: {n!r}")

    return ev(node)
