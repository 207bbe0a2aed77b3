"""Expression language for coefficient functions.

Arithmetic over real literals, the constants ``pi`` and ``e``, coordinate
variables ``x1 .. xd``, unary minus, binary ``+ - * / ^`` and the functions
``sin``, ``cos``, ``exp``, ``sqrt``.  Precedence, tightest first:
``^``, unary ``-``, ``* /``, ``+ -``.  Exponents are integer literals only,
which keeps differentiation closed over the node set (the derivative of any
expression is again an expression).

ASTs are immutable.  ``parse_expr`` and ``str()`` round-trip: parsing the
printed form of an AST reproduces the AST.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr",
    "Num",
    "Var",
    "ConstSym",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "ExprSyntaxError",
    "ExprNameError",
    "parse_expr",
    "symbolic_diff",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "powi",
    "call",
]

FUNCTIONS = ("sin", "cos", "exp", "sqrt")
CONSTANTS = {"pi": math.pi, "e": math.e}

# precedence levels used by the printer
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


class ExprSyntaxError(ValueError):
    """Malformed expression text; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ExprNameError(ValueError):
    """Identifier that is not a variable, function or known constant."""

    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} (offset {offset})")
        self.name = name
        self.offset = offset


class Expr:
    """Base class for expression nodes."""

    _prec = _PREC_ATOM

    def evaluate(self, coords):
        """Evaluate on coordinate arrays.

        ``coords`` is a sequence indexed by variable number minus one; the
        entries may be scalars or broadcastable numpy arrays.
        """
        raise NotImplementedError

    def derivative(self, axis: int) -> "Expr":
        """Exact partial derivative with respect to ``x<axis>`` (1-based)."""
        raise NotImplementedError

    def max_var_index(self) -> int:
        return 0

    def substitute(self, mapping: dict[int, "Expr"]) -> "Expr":
        """Replace variables by expressions (for composing with maps)."""
        raise NotImplementedError

    def __str__(self) -> str:
        raise NotImplementedError

    def _wrap(self, child: "Expr", min_prec: int) -> str:
        text = str(child)
        return f"({text})" if child._prec < min_prec else text


@dataclass(frozen=True)
class Num(Expr):
    value: float

    _prec = _PREC_ATOM

    def evaluate(self, coords):
        return self.value

    def derivative(self, axis):
        return Num(0.0)

    def substitute(self, mapping):
        return self

    def __str__(self):
        if self.value < 0:
            # negative literals only arise from constant folding
            return f"({self.value!r})"
        return repr(self.value)


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based; prints as x<index>

    _prec = _PREC_ATOM

    def evaluate(self, coords):
        return coords[self.index - 1]

    def derivative(self, axis):
        return Num(1.0 if axis == self.index else 0.0)

    def max_var_index(self):
        return self.index

    def substitute(self, mapping):
        return mapping.get(self.index, self)

    def __str__(self):
        return f"x{self.index}"


@dataclass(frozen=True)
class ConstSym(Expr):
    name: str  # "pi" or "e"

    _prec = _PREC_ATOM

    def evaluate(self, coords):
        return CONSTANTS[self.name]

    def derivative(self, axis):
        return Num(0.0)

    def substitute(self, mapping):
        return self

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    _prec = _PREC_NEG

    def evaluate(self, coords):
        return -self.arg.evaluate(coords)

    def derivative(self, axis):
        return neg(self.arg.derivative(axis))

    def max_var_index(self):
        return self.arg.max_var_index()

    def substitute(self, mapping):
        return neg(self.arg.substitute(mapping))

    def __str__(self):
        return f"-{self._wrap(self.arg, _PREC_NEG)}"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of "+-*/"
    left: Expr
    right: Expr

    def __post_init__(self):
        object.__setattr__(self, "_prec", _PREC_ADD if self.op in "+-" else _PREC_MUL)

    def evaluate(self, coords):
        a = self.left.evaluate(coords)
        b = self.right.evaluate(coords)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a / b

    def derivative(self, axis):
        da = self.left.derivative(axis)
        db = self.right.derivative(axis)
        if self.op == "+":
            return add(da, db)
        if self.op == "-":
            return sub(da, db)
        if self.op == "*":
            return add(mul(da, self.right), mul(self.left, db))
        return div(sub(mul(da, self.right), mul(self.left, db)), powi(self.right, 2))

    def max_var_index(self):
        return max(self.left.max_var_index(), self.right.max_var_index())

    def substitute(self, mapping):
        table = {"+": add, "-": sub, "*": mul, "/": div}
        return table[self.op](self.left.substitute(mapping), self.right.substitute(mapping))

    def __str__(self):
        prec = self._prec
        left = self._wrap(self.left, prec)
        # binary ops parse left associative; parenthesize same-level right
        # operands so printing and reparsing reproduce the tree exactly
        right = self._wrap(self.right, prec + 1)
        return f"{left} {self.op} {right}"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    _prec = _PREC_POW

    def evaluate(self, coords):
        return self.base.evaluate(coords) ** self.exponent

    def derivative(self, axis):
        db = self.base.derivative(axis)
        return mul(mul(Num(float(self.exponent)), powi(self.base, self.exponent - 1)), db)

    def max_var_index(self):
        return self.base.max_var_index()

    def substitute(self, mapping):
        return powi(self.base.substitute(mapping), self.exponent)

    def __str__(self):
        return f"{self._wrap(self.base, _PREC_ATOM)}^{self.exponent}"


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    _prec = _PREC_ATOM

    def evaluate(self, coords):
        x = self.arg.evaluate(coords)
        if self.func == "sin":
            return np.sin(x)
        if self.func == "cos":
            return np.cos(x)
        if self.func == "exp":
            return np.exp(x)
        return np.sqrt(x)

    def derivative(self, axis):
        dx = self.arg.derivative(axis)
        if self.func == "sin":
            return mul(Call("cos", self.arg), dx)
        if self.func == "cos":
            return neg(mul(Call("sin", self.arg), dx))
        if self.func == "exp":
            return mul(self, dx)
        return div(dx, mul(Num(2.0), self))

    def max_var_index(self):
        return self.arg.max_var_index()

    def substitute(self, mapping):
        return Call(self.func, self.arg.substitute(mapping))

    def __str__(self):
        return f"{self.func}({self.arg})"


# ---------------------------------------------------------------------------
# smart constructors with light constant folding
# ---------------------------------------------------------------------------


def _is_num(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Num) and (value is None or e.value == value)


def add(a: Expr, b: Expr) -> Expr:
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a, -1.0):
        return neg(b)
    if _is_num(b, -1.0):
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_num(b) and b.value != 0.0:
        if _is_num(a):
            return Num(a.value / b.value)
        if b.value == 1.0:
            return a
    if _is_num(a, 0.0) and not _is_num(b, 0.0):
        return Num(0.0)
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def powi(base: Expr, exponent: int) -> Expr:
    if exponent == 0:
        return Num(1.0)
    if exponent == 1:
        return base
    if _is_num(base):
        return Num(base.value**exponent)
    return Pow(base, exponent)


def call(func: str, arg: Expr) -> Expr:
    if func not in FUNCTIONS:
        raise ValueError(f"unsupported function {func!r}")
    return Call(func, arg)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Num(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def symbolic_diff(e: Expr, axis: int) -> Expr:
    """Exact derivative of ``e`` with respect to coordinate ``x<axis>``."""
    if axis < 1:
        raise ValueError("axis is 1-based")
    return e.derivative(axis)


# ---------------------------------------------------------------------------
# tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


_VAR_RE = re.compile(r"x(\d+)$")


class _Parser:
    def __init__(self, tokens, dim: int):
        self.tokens = tokens
        self.pos = 0
        self.dim = dim

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, text, offset = self.peek()
        if kind != "op" or text != op:
            raise ExprSyntaxError(f"expected {op!r}", offset)
        self.take()

    def parse(self) -> Expr:
        e = self.sum()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", offset)
        return e

    def sum(self) -> Expr:
        e = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                rhs = self.term()
                e = BinOp(text, e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                rhs = self.factor()
                e = BinOp(text, e, rhs)
            else:
                return e

    def factor(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, offset = self.peek()
        if kind == "op" and text == "^":
            self.take()
            exponent = self._integer()
            kind2, text2, offset2 = self.peek()
            if kind2 == "op" and text2 == "^":
                raise ExprSyntaxError("chained ^ is not supported; parenthesize", offset2)
            return Pow(base, exponent)
        return base

    def _integer(self) -> int:
        sign = 1
        kind, text, offset = self.peek()
        if kind == "op" and text == "-":
            self.take()
            sign = -1
            kind, text, offset = self.peek()
        if kind != "number" or any(c in text for c in ".eE"):
            raise ExprSyntaxError("exponent must be an integer literal", offset)
        self.take()
        return sign * int(text)

    def atom(self) -> Expr:
        kind, text, offset = self.take()
        if kind == "number":
            return Num(float(text))
        if kind == "op" and text == "(":
            e = self.sum()
            self.expect_op(")")
            return e
        if kind == "name":
            if text in CONSTANTS:
                return ConstSym(text)
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.sum()
                self.expect_op(")")
                return Call(text, arg)
            m = _VAR_RE.match(text)
            if m:
                index = int(m.group(1))
                if index < 1 or index > self.dim:
                    raise ValueError(
                        f"variable index out of range: {text} (dimension {self.dim})"
                    )
                return Var(index)
            raise ExprNameError(text, offset)
        raise ExprSyntaxError(f"unexpected token {text!r}", offset)


def parse_expr(text: str, dim: int) -> Expr:
    """Parse expression ``text`` over the variables ``x1 .. x<dim>``.

    Raises ``ExprSyntaxError`` (with byte offset) on malformed input,
    ``ExprNameError`` for unknown identifiers and ``ValueError`` when a
    variable index exceeds ``dim``.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    return _Parser(_tokenize(text), dim).parse()
