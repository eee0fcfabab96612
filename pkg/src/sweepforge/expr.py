"""Small arithmetic expression language.

Two dialects share one parser:

* ``condition`` -- aggregation keys over numeric parameter names:
  ``+ - * / ^``, unary minus, parentheses, ``log``/``exp``/``floor``,
  and top-level tuples ``(x1, x2)``.
* ``plot`` -- the same arithmetic plus quoted string literals, text
  concatenation with ``&``, and dotted binding names (``table.final.file``).

Evaluation is pure; errors are reported as exceptions, never partial
results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

Value = Union[int, float, str, tuple]

FUNCTIONS = ("log", "exp", "floor")


class ExprError(ValueError):
    """Raised for malformed expression text."""


class EvalError(ValueError):
    """Raised when a well-formed expression cannot be evaluated."""


@dataclass(frozen=True)
class Num:
    value: Union[int, float]


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


@dataclass(frozen=True)
class TupleExpr:
    items: tuple


Node = Union[Num, Str, Name, Unary, Binary, Call, TupleExpr]

_DIGITS = "0123456789"


class _Tokenizer:
    def __init__(self, text: str, dotted: bool, strings: bool):
        self.text = text
        self.pos = 0
        self.dotted = dotted
        self.strings = strings

    def error(self, msg: str) -> ExprError:
        return ExprError(f"{msg} at position {self.pos} in {self.text!r}")

    def next(self):
        """Return (kind, value) with kind in number|name|string|op|end."""
        t = self.text
        n = len(t)
        while self.pos < n and t[self.pos] in " \t":
            self.pos += 1
        if self.pos >= n:
            return ("end", "")
        c = t[self.pos]
        if c in "+-*/^&(),":
            self.pos += 1
            return ("op", c)
        if c == '"':
            if not self.strings:
                raise self.error("string literal not allowed here")
            return ("string", self._string())
        if c in _DIGITS or (c == "." and self.pos + 1 < n and t[self.pos + 1] in _DIGITS):
            return ("number", self._number())
        if c.isalpha() or c == "_":
            return ("name", self._name())
        raise self.error(f"unexpected character {c!r}")

    def _string(self) -> str:
        t = self.text
        i = self.pos + 1
        out = []
        while i < len(t):
            c = t[i]
            if c == "\\" and i + 1 < len(t):
                out.append(t[i + 1])
                i += 2
                continue
            if c == '"':
                self.pos = i + 1
                return "".join(out)
            out.append(c)
            i += 1
        raise self.error("unterminated string literal")

    def _number(self):
        t = self.text
        i = self.pos
        j = i
        while j < len(t) and (t[j] in _DIGITS or t[j] == "."):
            j += 1
        if j < len(t) and t[j] in "eE":
            k = j + 1
            if k < len(t) and t[k] in "+-":
                k += 1
            if k < len(t) and t[k] in _DIGITS:
                j = k
                while j < len(t) and t[j] in _DIGITS:
                    j += 1
        text = t[i:j]
        self.pos = j
        try:
            if text.isdigit():
                return int(text)
            value = float(text)
        except ValueError:
            raise self.error(f"bad number {text!r}") from None
        if not math.isfinite(value):
            raise self.error(f"non-finite number {text!r}")
        return value

    def _name(self) -> str:
        t = self.text
        i = self.pos
        j = i
        while j < len(t) and (t[j].isalnum() or t[j] == "_" or (t[j] == "." and self.dotted)):
            j += 1
        self.pos = j
        return t[i:j]


class _Parser:
    def __init__(self, text: str, dialect: str):
        if dialect not in ("condition", "plot"):
            raise ValueError(f"unknown dialect {dialect!r}")
        self.plot = dialect == "plot"
        self.tok = _Tokenizer(text, dotted=self.plot, strings=self.plot)
        self.cur = self.tok.next()

    def advance(self):
        self.cur = self.tok.next()

    def expect_op(self, op: str):
        if self.cur != ("op", op):
            raise self.tok.error(f"expected {op!r}, found {self.cur[1]!r}")
        self.advance()

    def parse(self) -> Node:
        node = self.expression()
        if self.cur[0] != "end":
            raise self.tok.error(f"unexpected trailing {self.cur[1]!r}")
        return node

    def expression(self) -> Node:
        node = self.additive()
        while self.plot and self.cur == ("op", "&"):
            self.advance()
            node = Binary("&", node, self.additive())
        return node

    def additive(self) -> Node:
        node = self.term()
        while self.cur[0] == "op" and self.cur[1] in "+-":
            op = self.cur[1]
            self.advance()
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.cur[0] == "op" and self.cur[1] in "*/":
            op = self.cur[1]
            self.advance()
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.cur == ("op", "-"):
            self.advance()
            return Unary("-", self.unary())
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        if self.cur == ("op", "^"):
            self.advance()
            node = Binary("^", node, self.unary())
        return node

    def atom(self) -> Node:
        kind, value = self.cur
        if kind == "number":
            self.advance()
            return Num(value)
        if kind == "string":
            self.advance()
            return Str(value)
        if kind == "name":
            self.advance()
            if self.cur == ("op", "("):
                if value not in FUNCTIONS:
                    raise self.tok.error(f"unknown function {value!r}")
                self.advance()
                arg = self.expression()
                self.expect_op(")")
                return Call(value, arg)
            return Name(value)
        if (kind, value) == ("op", "("):
            self.advance()
            items = [self.expression()]
            while self.cur == ("op", ","):
                self.advance()
                items.append(self.expression())
            self.expect_op(")")
            if len(items) == 1:
                return items[0]
            for item in items:
                if isinstance(item, TupleExpr):
                    raise self.tok.error("nested tuple")
            return TupleExpr(tuple(items))
        raise self.tok.error(f"expected a value, found {value!r}" if value else "unexpected end of expression")


def parse(text: str, dialect: str = "condition") -> Node:
    """Parse expression text into an AST. Raises ExprError on bad syntax."""
    if not text.strip():
        raise ExprError("empty expression")
    return _Parser(text, dialect).parse()


def names_in(node: Node) -> set:
    """All binding names referenced by the expression."""
    out: set = set()
    _walk_names(node, out)
    return out


def _walk_names(node: Node, out: set) -> None:
    if isinstance(node, Name):
        out.add(node.ident)
    elif isinstance(node, Unary):
        _walk_names(node.operand, out)
    elif isinstance(node, Binary):
        _walk_names(node.left, out)
        _walk_names(node.right, out)
    elif isinstance(node, Call):
        _walk_names(node.arg, out)
    elif isinstance(node, TupleExpr):
        for item in node.items:
            _walk_names(item, out)


_PREC = {"&": 1, "+": 2, "-": 2, "*": 3, "/": 3, "u-": 4, "^": 5}


def _prec(node: Node) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _PREC["u-"]
    return 9


def to_text(node: Node) -> str:
    """Canonical text; reparsing it yields an identical AST."""
    if isinstance(node, Num):
        return format_number(node.value)
    if isinstance(node, Str):
        escaped = node.value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(node, Name):
        return node.ident
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    if isinstance(node, TupleExpr):
        return "(" + ", ".join(to_text(item) for item in node.items) + ")"
    if isinstance(node, Unary):
        inner = to_text(node.operand)
        if _prec(node.operand) < _PREC["u-"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Binary):
        prec = _PREC[node.op]
        left = to_text(node.left)
        right = to_text(node.right)
        if node.op == "^":
            # right-associative: parenthesize an explicit ^ on the left
            if _prec(node.left) <= prec:
                left = f"({left})"
            if _prec(node.right) < prec:
                right = f"({right})"
        else:
            if _prec(node.left) < prec:
                left = f"({left})"
            if _prec(node.right) <= prec:
                right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def format_number(value) -> str:
    """Canonical number text: ints plain, floats shortest round-trip."""
    if isinstance(value, bool):
        raise TypeError("bool is not an expression value")
    if isinstance(value, int):
        return str(value)
    return repr(value)


def format_value(value: Value) -> str:
    """Canonical text for an evaluated result (used by plot rendering)."""
    if isinstance(value, str):
        return value
    if isinstance(value, tuple):
        return "(" + ", ".join(format_value(v) for v in value) + ")"
    return format_number(value)


def evaluate(node: Node, env: Mapping[str, Value]) -> Value:
    """Evaluate against name bindings. Raises EvalError on bad arithmetic
    or unknown names; results are always finite."""
    result = _eval(node, env)
    _check_finite(result)
    return result


def _check_finite(value: Value) -> None:
    if isinstance(value, tuple):
        for v in value:
            _check_finite(v)
    elif isinstance(value, float) and not math.isfinite(value):
        raise EvalError("non-finite result")


def _eval(node: Node, env: Mapping[str, Value]) -> Value:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Str):
        return node.value
    if isinstance(node, Name):
        try:
            return env[node.ident]
        except KeyError:
            raise EvalError(f"unknown name {node.ident!r}") from None
    if isinstance(node, TupleExpr):
        return tuple(_eval(item, env) for item in node.items)
    if isinstance(node, Unary):
        return -_number(_eval(node.operand, env), "-")
    if isinstance(node, Call):
        arg = _number(_eval(node.arg, env), node.func)
        if node.func == "floor":
            return math.floor(arg)
        if node.func == "exp":
            try:
                return math.exp(arg)
            except OverflowError:
                raise EvalError("overflow in exp") from None
        if arg <= 0:
            raise EvalError(f"log of non-positive value {arg!r}")
        return math.log(arg)
    if isinstance(node, Binary):
        left = _eval(node.left, env)
        right = _eval(node.right, env)
        if node.op == "&":
            return format_value(left) + format_value(right)
        a = _number(left, node.op)
        b = _number(right, node.op)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if b == 0:
                raise EvalError("division by zero")
            return a / b
        try:
            result = a ** b
        except (OverflowError, ZeroDivisionError) as exc:
            raise EvalError(f"bad power: {exc}") from None
        if isinstance(result, complex):
            raise EvalError("complex result from ^")
        return result
    raise TypeError(f"not an expression node: {node!r}")


def _number(value: Value, op: str):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise EvalError(f"{op!r} needs a numeric operand, got {value!r}")
    return value
