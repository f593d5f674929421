"""Scalar-field expression language and truncated Taylor arithmetic.

Grammar (whitespace ignored)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom ('^' unary)?
    atom    := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'

``name`` is a variable from the evaluation context, a constant (``pi``, ``e``)
or a unary function (``exp``, ``sin``, ``cos``, ``abs``, ``sqrt``, ``log``).
Columns in diagnostics are 1-based.

Every parsed expression can be evaluated on numpy arrays or on :class:`Jet`
objects, which carry truncated Taylor series and give exact high-order
derivatives of the rule without finite differences.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ExpressionError",
    "Expression",
    "Jet",
    "parse_expression",
]


class ExpressionError(ValueError):
    """Syntax or name error in an expression, carrying a 1-based column."""

    def __init__(self, message: str, column: int, text: str = ""):
        self.column = column
        self.text = text
        super().__init__(f"column {column}: {message}")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)

_CONSTANTS = {"pi": math.pi, "e": math.e}
_FUNCTIONS = ("exp", "sin", "cos", "abs", "sqrt", "log")


@dataclass(frozen=True)
class _Tok:
    kind: str
    value: str
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionError(f"unexpected character {text[col - 1]!r}", col, text)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    toks.append(_Tok("end", "", len(text) + 1))
    return toks


# AST nodes are plain tuples: ("num", v) ("var", name) ("neg", a)
# ("bin", op, a, b) ("call", fn, a)


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.variables = tuple(variables)

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise ExpressionError(msg, tok.col, self.text)

    def expect(self, op: str) -> _Tok:
        tok = self.peek()
        if tok.kind != "op" or tok.value != op:
            found = "end of input" if tok.kind == "end" else repr(tok.value)
            self.fail(f"expected {op!r}, found {found}")
        return self.take()

    def parse(self):
        if self.peek().kind == "end":
            self.fail("empty expression")
        node = self.expr()
        if self.peek().kind != "end":
            self.fail(f"unexpected {self.peek().value!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().value in "+-":
            op = self.take().value
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().value in "*/":
            op = self.take().value
            node = ("bin", op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.value in "+-":
            self.take()
            inner = self.unary()
            return ("neg", inner) if tok.value == "-" else inner
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().kind == "op" and self.peek().value == "^":
            self.take()
            return ("bin", "^", base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        if tok.kind == "num":
            self.take()
            return ("num", float(tok.value))
        if tok.kind == "op" and tok.value == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "name":
            self.take()
            nxt = self.peek()
            if nxt.kind == "op" and nxt.value == "(":
                if tok.value not in _FUNCTIONS:
                    self.fail(f"unknown function {tok.value!r}", tok)
                self.take()
                args = [self.expr()]
                while self.peek().kind == "op" and self.peek().value == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    self.fail(f"{tok.value} takes 1 argument, got {len(args)}", tok)
                return ("call", tok.value, args[0])
            if tok.value in self.variables:
                return ("var", tok.value)
            if tok.value in _CONSTANTS:
                return ("num", _CONSTANTS[tok.value])
            if tok.value in _FUNCTIONS:
                self.fail(f"function {tok.value!r} needs an argument list", nxt)
            self.fail(f"unknown variable {tok.value!r}", tok)
        if tok.kind == "end":
            self.fail("unexpected end of input")
        self.fail(f"unexpected {tok.value!r}")


class Jet:
    """Truncated Taylor series ``sum_k c[k] (x - x0)^k`` with array-valued coefficients."""

    __slots__ = ("c",)

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    @property
    def order(self) -> int:
        return self.c.shape[0] - 1

    @classmethod
    def variable(cls, x0, order: int) -> "Jet":
        x0 = np.asarray(x0, dtype=float)
        c = np.zeros((order + 1,) + x0.shape)
        c[0] = x0
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @classmethod
    def constant(cls, value, like: "Jet") -> "Jet":
        c = np.zeros_like(like.c)
        c[0] = value
        return cls(c)

    def derivatives(self) -> np.ndarray:
        """Return ``f^{(k)}(x0)`` for every order ``k``."""
        fact = np.array([math.factorial(k) for k in range(self.order + 1)], dtype=float)
        return self.c * fact.reshape((-1,) + (1,) * (self.c.ndim - 1))

    def _lift(self, other) -> "Jet":
        return other if isinstance(other, Jet) else Jet.constant(other, self)

    def __add__(self, other):
        return Jet(self.c + self._lift(other).c)

    __radd__ = __add__

    def __sub__(self, other):
        return Jet(self.c - self._lift(other).c)

    def __rsub__(self, other):
        return Jet(self._lift(other).c - self.c)

    def __neg__(self):
        return Jet(-self.c)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * other)
        a, b = self.c, other.c
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for k in range(out.shape[0]):
            out[k] = np.sum(a[: k + 1] * b[k::-1], axis=0)
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c / other)
        a, b = self.c, other.c
        q = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for k in range(q.shape[0]):
            acc = a[k] - np.sum(b[1 : k + 1] * q[k - 1 :: -1][:k], axis=0) if k else a[0]
            q[k] = acc / b[0]
        return Jet(q)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def exp(self) -> "Jet":
        a = self.c
        e = np.zeros_like(a)
        e[0] = np.exp(a[0])
        j = np.arange(1, a.shape[0]).reshape((-1,) + (1,) * (a.ndim - 1))
        for k in range(1, a.shape[0]):
            e[k] = np.sum(j[:k] * a[1 : k + 1] * e[k - 1 :: -1][:k], axis=0) / k
        return Jet(e)

    def log(self) -> "Jet":
        a = self.c
        out = np.zeros_like(a)
        out[0] = np.log(a[0])
        for k in range(1, a.shape[0]):
            acc = k * a[k]
            for j in range(1, k):
                acc = acc - j * out[j] * a[k - j]
            out[k] = acc / (k * a[0])
        return Jet(out)

    def _sincos(self):
        a = self.c
        s = np.zeros_like(a)
        c = np.zeros_like(a)
        s[0], c[0] = np.sin(a[0]), np.cos(a[0])
        for k in range(1, a.shape[0]):
            ss = np.zeros_like(a[0])
            cc = np.zeros_like(a[0])
            for j in range(1, k + 1):
                ss = ss + j * a[j] * c[k - j]
                cc = cc - j * a[j] * s[k - j]
            s[k], c[k] = ss / k, cc / k
        return Jet(s), Jet(c)

    def sin(self) -> "Jet":
        return self._sincos()[0]

    def cos(self) -> "Jet":
        return self._sincos()[1]

    def abs(self) -> "Jet":
        return Jet(self.c * np.sign(self.c[0]))

    def __pow__(self, p):
        if isinstance(p, Jet):
            if np.any(p.c[1:] != 0):
                return (p * self.log()).exp()
            pv = p.c[0]
            if np.ndim(pv) and np.all(pv == pv.flat[0]):
                pv = float(pv.flat[0])
            p = pv
        p = float(p)
        if p.is_integer():
            n = int(p)
            if n < 0:
                return 1.0 / (self ** (-n))
            result = Jet.constant(1.0, self)
            base = self
            while n:
                if n & 1:
                    result = result * base
                n >>= 1
                if n:
                    base = base * base
            return result
        a = self.c
        y = np.zeros_like(a)
        y[0] = a[0] ** p
        for k in range(1, a.shape[0]):
            acc = np.zeros_like(a[0])
            for j in range(1, k + 1):
                acc = acc + (p * j - (k - j)) * a[j] * y[k - j]
            y[k] = acc / (k * a[0])
        return Jet(y)

    def sqrt(self) -> "Jet":
        return self ** 0.5


_NUMPY_FUNCS: Mapping[str, Callable] = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "sqrt": np.sqrt,
    "log": np.log,
}


def _eval(node, env):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        return env[node[1]]
    if kind == "neg":
        return -_eval(node[1], env)
    if kind == "call":
        arg = _eval(node[2], env)
        if isinstance(arg, Jet):
            return getattr(arg, node[1])()
        return _NUMPY_FUNCS[node[1]](arg)
    op, a, b = node[1], _eval(node[2], env), _eval(node[3], env)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if isinstance(a, Jet):
        return a ** b
    if isinstance(b, Jet):
        return (b * np.log(a)).exp()
    return np.power(a, b) if np.ndim(a) or np.ndim(b) else float(a) ** float(b)


def _uses(node, names: set):
    if node[0] == "var":
        names.add(node[1])
    for child in node[1:]:
        if isinstance(child, tuple):
            _uses(child, names)
    return names


@dataclass(frozen=True)
class Expression:
    """A parsed rule bound to an ordered tuple of variable names."""

    text: str
    variables: tuple
    ast: tuple

    def __call__(self, *args):
        if len(args) != len(self.variables):
            raise TypeError(f"expected {len(self.variables)} arguments, got {len(args)}")
        env = dict(zip(self.variables, args))
        with np.errstate(all="ignore"):
            out = _eval(self.ast, env)
        if isinstance(out, Jet):
            return out
        shape = np.broadcast_shapes(*(np.shape(a) for a in args)) if args else ()
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def jet(self, x0, order: int, variable: str | None = None, **fixed) -> Jet:
        """Taylor jet of the rule in one variable around ``x0``; others held at ``fixed``."""
        var = variable or self.variables[0]
        env = dict(fixed)
        env[var] = Jet.variable(x0, order)
        with np.errstate(all="ignore"):
            out = _eval(self.ast, env)
        if not isinstance(out, Jet):
            out = Jet.constant(out, env[var])
        return out

    @property
    def free_variables(self) -> set:
        return _uses(self.ast, set())


def parse_expression(text: str, variables: Sequence[str] = ("x",)) -> Expression:
    """Parse ``text`` in a context where exactly ``variables`` are defined."""
    ast = _Parser(text, variables).parse()
    return Expression(text, tuple(variables), ast)
