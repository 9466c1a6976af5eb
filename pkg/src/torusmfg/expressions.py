"""A closed coefficient-expression grammar for config files.

Grammar (and nothing else):

    expr  := term (('+' | '-') term)*
    term  := unary ('*' unary)*
    unary := '-' unary | atom
    atom  := NUMBER | 'pi' | 'x' | 'y' | 'cos(' expr ')' | 'sin(' expr ')'
             | '(' expr ')'

Trigonometric arguments must be affine in the coordinates with integer
multiples of 2*pi, so every expressible field is periodic on the unit
torus; that keeps configs portable and the positivity checks decidable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np


class ExpressionError(ValueError):
    pass


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*()]))"
)

_TWO_PI = 2.0 * math.pi
_INT_TOL = 1e-9


@dataclass
class _Affine:
    """Affine part a x + b y + c of a subexpression, or None if not affine."""

    a: float
    b: float
    c: float


class Node:
    def eval(self, x, y=None):
        raise NotImplementedError

    def affine(self):
        """Return an _Affine description or None."""
        return None


class Num(Node):
    def __init__(self, value):
        self.value = float(value)

    def eval(self, x, y=None):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def affine(self):
        return _Affine(0.0, 0.0, self.value)


class Coord(Node):
    def __init__(self, name):
        self.name = name

    def eval(self, x, y=None):
        if self.name == "x":
            return np.asarray(x, dtype=float) + 0.0
        if y is None:
            raise ExpressionError("'y' used in a one-dimensional model")
        return np.asarray(y, dtype=float) + 0.0 * np.asarray(x, dtype=float)

    def affine(self):
        return _Affine(1.0, 0.0, 0.0) if self.name == "x" else _Affine(0.0, 1.0, 0.0)


class Unary(Node):
    def __init__(self, child):
        self.child = child

    def eval(self, x, y=None):
        return -self.child.eval(x, y)

    def affine(self):
        aff = self.child.affine()
        return _Affine(-aff.a, -aff.b, -aff.c) if aff else None


class BinOp(Node):
    def __init__(self, op, left, right):
        self.op, self.left, self.right = op, left, right

    def eval(self, x, y=None):
        lv, rv = self.left.eval(x, y), self.right.eval(x, y)
        if self.op == "+":
            return lv + rv
        if self.op == "-":
            return lv - rv
        return lv * rv

    def affine(self):
        la, ra = self.left.affine(), self.right.affine()
        if la is None or ra is None:
            return None
        if self.op == "+":
            return _Affine(la.a + ra.a, la.b + ra.b, la.c + ra.c)
        if self.op == "-":
            return _Affine(la.a - ra.a, la.b - ra.b, la.c - ra.c)
        # a product of affines is affine only when one factor is constant
        if la.a == la.b == 0.0:
            return _Affine(la.c * ra.a, la.c * ra.b, la.c * ra.c)
        if ra.a == ra.b == 0.0:
            return _Affine(ra.c * la.a, ra.c * la.b, ra.c * la.c)
        return None


class Trig(Node):
    def __init__(self, fn, child):
        self.fn, self.child = fn, child

    def eval(self, x, y=None):
        inner = self.child.eval(x, y)
        return np.cos(inner) if self.fn == "cos" else np.sin(inner)

    def affine(self):
        return None


def _validate_periodicity(node: Node):
    """Every trig argument must be 2*pi*(k x + l y) + const with integer k, l."""
    if isinstance(node, Trig):
        aff = node.child.affine()
        if aff is None:
            raise ExpressionError(
                f"{node.fn} argument must be affine in the coordinates"
            )
        for coef, name in ((aff.a, "x"), (aff.b, "y")):
            cycles = coef / _TWO_PI
            if abs(cycles - round(cycles)) > _INT_TOL:
                raise ExpressionError(
                    f"{node.fn} argument has a non-integer number of cycles in {name}: "
                    f"coefficient {coef!r} is not an integer multiple of 2*pi"
                )
        _validate_periodicity(node.child)
    elif isinstance(node, BinOp):
        _validate_periodicity(node.left)
        _validate_periodicity(node.right)
    elif isinstance(node, Unary):
        _validate_periodicity(node.child)


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                if text[pos:].strip():
                    raise ExpressionError(f"cannot tokenize {text[pos:].strip()!r}")
                break
            pos = m.end()
            if m.group("num"):
                self.tokens.append(("num", m.group("num")))
            elif m.group("name"):
                self.tokens.append(("name", m.group("name")))
            else:
                self.tokens.append(("op", m.group("op")))
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def pop(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val = self.pop()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}, found {val!r}")

    def parse(self) -> Node:
        node = self.expr()
        if self.i != len(self.tokens):
            raise ExpressionError(f"unexpected trailing input near {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.pop()
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*"):
            self.pop()
            node = BinOp("*", node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.pop()
            return Unary(self.unary())
        return self.atom()

    def atom(self):
        kind, val = self.pop()
        if kind == "num":
            return Num(val)
        if kind == "name":
            if val == "pi":
                return Num(math.pi)
            if val in ("x", "y"):
                return Coord(val)
            if val in ("cos", "sin"):
                self.expect_op("(")
                inner = self.expr()
                self.expect_op(")")
                return Trig(val, inner)
            raise ExpressionError(f"unknown name {val!r} (grammar allows pi, x, y, cos, sin)")
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise ExpressionError(f"unexpected token {val!r}")


def parse_expression(text: str, dim: int) -> Node:
    """Parse and validate one coefficient expression for the given dimension."""
    if not text.strip():
        raise ExpressionError("empty expression")
    node = _Parser(text).parse()
    _validate_periodicity(node)
    if dim == 1:
        _reject_y(node)
    return node


def _reject_y(node: Node):
    if isinstance(node, Coord) and node.name == "y":
        raise ExpressionError("'y' used in a one-dimensional model")
    for attr in ("child", "left", "right"):
        sub = getattr(node, attr, None)
        if isinstance(sub, Node):
            _reject_y(sub)


def as_field_fn(text: str, dim: int):
    """Compile an expression into a coefficient callable for ModelSpec."""
    node = parse_expression(text, dim)

    def fn(x, y=None):
        return node.eval(x, y)

    return fn
