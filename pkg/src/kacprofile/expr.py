"""Small arithmetic expression language for fields on the torus.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("**" unary)?
    atom   := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

Names are the coordinates ``u`` (d = 1) or ``u1``, ``u2`` and the constants
``pi`` and ``e``; functions are ``cos``, ``sin``, ``exp``, ``sqrt`` and ``abs``.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError

FUNCTIONS: dict[str, Callable] = {"cos": np.cos, "sin": np.sin, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs}
CONSTANTS = {"pi": np.pi, "e": np.e}
COORDINATES = ("u", "u1", "u2")

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>\*\*|[-+*/()^]))")


class ExpressionError(ConfigurationError):
    """Syntax or name error with the character offset where it was detected."""

    def __init__(self, message: str, offset: int, text: str):
        super().__init__(f"{message} at offset {offset} in {text!r}")
        self.offset = offset
        self.text = text


Node = Callable[[dict], np.ndarray]
_OPERATORS = {"+": operator.add, "-": operator.sub, "*": operator.mul, "/": operator.truediv}


def _binary(fn, lhs: Node, rhs: Node) -> Node:
    return lambda env: fn(lhs(env), rhs(env))


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        match = _TOKEN.match(text, pos)
        if match is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[bad]!r}", bad, text)
        kind = match.lastgroup
        tokens.append((kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.names: set[str] = set()

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise ExpressionError(message, tok[2], self.text)

    def expect(self, op):
        tok = self.take()
        if tok[1] != op:
            self.fail(f"expected {op!r}", tok)

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = _binary(_OPERATORS[op], node, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = _binary(_OPERATORS[op], node, rhs)
        return node

    def unary(self) -> Node:
        if self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            inner = self.unary()
            return inner if op == "+" else (lambda env: -inner(env))
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[1] in ("**", "^"):
            self.take()
            exponent = self.unary()
            return _binary(operator.pow, base, exponent)
        return base

    def atom(self) -> Node:
        tok = self.take()
        kind, value, _ = tok
        if kind == "num":
            number = float(value)
            return lambda env: number
        if kind == "name":
            if self.peek()[1] == "(":
                if value not in FUNCTIONS:
                    self.fail(f"unknown function {value!r}", tok)
                self.take()
                arg = self.expr()
                self.expect(")")
                fn = FUNCTIONS[value]
                return lambda env: fn(arg(env))
            if value in CONSTANTS:
                const = CONSTANTS[value]
                return lambda env: const
            if value in COORDINATES:
                self.names.add(value)
                return lambda env: env[value]
            self.fail(f"unknown name {value!r}", tok)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            self.fail("unexpected end of expression", tok)
        self.fail(f"unexpected {value!r}", tok)


@dataclass(frozen=True)
class Expression:
    """A parsed expression, callable on per-axis coordinate arrays."""

    text: str
    variables: frozenset
    _node: Callable = None

    def __call__(self, *axes):
        if "u" in self.variables and len(axes) != 1:
            raise ConfigurationError(f"{self.text!r} uses 'u' but the torus is {len(axes)}-dimensional")
        if any(v != "u" and int(v[1:]) > len(axes) for v in self.variables):
            raise ConfigurationError(f"{self.text!r} uses a coordinate beyond dimension {len(axes)}")
        env = {f"u{a + 1}": x for a, x in enumerate(axes)}
        if len(axes) == 1:
            env["u"] = axes[0]
        with np.errstate(divide="raise", invalid="raise", over="raise", under="ignore"):
            try:
                return self._node(env)
            except FloatingPointError as exc:
                raise ConfigurationError(f"{self.text!r} is not finite on the grid") from exc


def parse_expression(text: str) -> Expression:
    """Parse ``text``; raises :class:`ExpressionError` with the failing offset."""
    parser = _Parser(text)
    node = parser.parse()
    return Expression(text, frozenset(parser.names), node)
