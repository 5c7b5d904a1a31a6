"""A small expression language for user-defined scalar fields.

Grammar (standard precedence, ``^`` right associative, everything else left
associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' exponent)?
    exponent:= '-'? atom ('^' exponent)?       # must fold to k or k/2
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are the chart's coordinate names; the only callable names are
``exp log sqrt sin cos tan sinh cosh atan``. Exponents must be constant
integers or half-integers; half-integers are evaluated as powers of ``sqrt``.

Trees are immutable and evaluate on floats, numpy arrays or :class:`Jet`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .jets import Jet

__all__ = [
    "ExpressionError",
    "ParseError",
    "UnknownIdentifierError",
    "ArityError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "FUNCTIONS",
    "parse",
    "to_text",
]

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "tan", "sinh", "cosh", "atan")

_BINOP_NAMES = {"+": "add", "-": "sub", "*": "mul", "/": "div"}


class ExpressionError(ValueError):
    """Base class for expression errors; ``offset`` is a UTF-8 byte offset."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class ParseError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    pass


class ArityError(ExpressionError):
    pass


# -- tree -------------------------------------------------------------------


def _fmt_number(v):
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


@dataclass(frozen=True)
class Num:
    value: float

    def evaluate(self, env):
        return self.value

    def sexpr(self):
        return _fmt_number(self.value)


@dataclass(frozen=True)
class Var:
    name: str

    def evaluate(self, env):
        return env[self.name]

    def sexpr(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    arg: "Node"

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def sexpr(self):
        return f"neg({self.arg.sexpr()})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a / b

    def sexpr(self):
        return f"{_BINOP_NAMES[self.op]}({self.left.sexpr()},{self.right.sexpr()})"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    twice_exponent: int

    @property
    def exponent(self):
        return self.twice_exponent / 2

    def evaluate(self, env):
        b = self.base.evaluate(env)
        n = self.twice_exponent
        if isinstance(b, Jet):
            return b ** (n / 2)
        if n % 2 == 0:
            k = n // 2
            out = np.power(b, abs(k)) if k else b * 0 + 1.0
        else:
            out = np.power(np.sqrt(b), abs(n))
        if n < 0:
            out = 1.0 / out
        return out

    def sexpr(self):
        return f"pow({self.base.sexpr()},{_fmt_number(self.exponent)})"


def _call_numeric(fn, x):
    if fn == "atan":
        return np.arctan(x)
    return getattr(np, fn)(x)


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"

    def evaluate(self, env):
        x = self.arg.evaluate(env)
        if isinstance(x, Jet):
            return x.arctan() if self.fn == "atan" else getattr(x, self.fn)()
        return _call_numeric(self.fn, x)

    def sexpr(self):
        return f"{self.fn}({self.arg.sexpr()})"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]


def free_names(node):
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return free_names(node.arg)
    if isinstance(node, Pow):
        return free_names(node.base)
    return free_names(node.left) | free_names(node.right)


# -- printing ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_text(node):
    """Render a tree as parseable text; ``parse(to_text(t)) == t``."""
    if isinstance(node, Num):
        v = float(node.value)
        if math.copysign(1.0, v) < 0:
            return f"-({repr(-v)})"
        return repr(v)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({to_text(node.arg)})"
    if isinstance(node, Neg):
        return f"-({to_text(node.arg)})"
    if isinstance(node, Pow):
        base = to_text(node.base)
        # a leading minus would bind looser than '^'
        if not isinstance(node.base, (Num, Var, Call)) or base.startswith(("(", "-")):
            base = f"({base})"
        n = node.twice_exponent
        exp = str(n // 2) if n % 2 == 0 else f"({n}/2)"
        if n < 0 and n % 2 == 0:
            exp = f"({exp})"
        return f"{base}^{exp}"
    left = to_text(node.left)
    right = to_text(node.right)
    p = _PREC[node.op]
    if isinstance(node.left, BinOp) and _PREC[node.left.op] < p:
        left = f"({left})"
    if isinstance(node.right, BinOp) and _PREC[node.right.op] <= p:
        right = f"({right})"
    return f"{left}{node.op}{right}"


# -- tokenizer ----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[^\W\d]\w*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE | re.UNICODE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int  # byte offset


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        byte_off = len(text[:pos].encode("utf-8"))
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", byte_off)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), byte_off))
        pos = m.end()
    tokens.append(_Token("end", "", len(text.encode("utf-8"))))
    return tokens


class _Parser:
    def __init__(self, text, names):
        self.tokens = _tokenize(text)
        self.i = 0
        self.names = tuple(names)

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.advance()
        if tok.text != text:
            found = tok.text or "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", tok.offset)
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected token {tok.text!r}", tok.offset)
        return node

    def expr(self):
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek().text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().text == "^":
            tok = self.advance()
            exponent = self.exponent()
            return Pow(base, self._twice_constant(exponent, tok.offset))
        return base

    def exponent(self):
        if self.peek().text == "-":
            self.advance()
            return Neg(self.exponent())
        base = self.atom()
        if self.peek().text == "^":
            tok = self.advance()
            return Pow(base, self._twice_constant(self.exponent(), tok.offset))
        return base

    def _twice_constant(self, node, offset):
        if free_names(node):
            raise ParseError("exponent must be a constant", offset)
        value = float(node.evaluate({}))
        twice = 2 * value
        if not math.isfinite(value) or abs(twice - round(twice)) > 1e-12:
            raise ParseError(
                f"exponent {value!r} is not an integer or half-integer", offset
            )
        return int(round(twice))

    def atom(self):
        tok = self.advance()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if self.peek().text == "(":
                if tok.text not in FUNCTIONS:
                    raise UnknownIdentifierError(
                        f"unknown function {tok.text!r}", tok.offset
                    )
                self.advance()
                if self.peek().text == ")":
                    raise ArityError(f"{tok.text} expects 1 argument, got 0", tok.offset)
                arg = self.expr()
                if self.peek().text == ",":
                    raise ArityError(
                        f"{tok.text} expects 1 argument, got more", self.peek().offset
                    )
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in FUNCTIONS:
                raise ArityError(f"{tok.text} expects 1 argument", tok.offset)
            if tok.text not in self.names:
                raise UnknownIdentifierError(
                    f"unknown identifier {tok.text!r}; coordinates are {self.names}",
                    tok.offset,
                )
            return Var(tok.text)
        if tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise ParseError(f"unexpected {found!r}", tok.offset)


def parse(text, names):
    """Parse ``text`` into an immutable tree over the coordinate ``names``."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return _Parser(text, names).parse()
