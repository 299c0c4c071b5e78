"""Scalar expressions in the variables x1..xn.

Grammar, loosest binding first::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom (('^' | '**') unary)?
    atom    := number | 'x' digits | func '(' expr ')' | '(' expr ')'
    func    := exp | log | sqrt | abs | sin | cos

So ``-x1^2`` is ``-(x1^2)``, ``2^3^2`` is ``2^(3^2)`` and ``2^-1`` is 0.5.

Parsed expressions are compiled twice: once to a plain Python function for
fast scalar evaluation, and once to a numpy function that evaluates whole
batches of points, returning NaN wherever the scalar path would raise.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Expr",
    "ExprError",
    "ParseError",
    "DomainError",
    "parse",
    "parse_constraint",
    "evaluate",
    "eval_partial",
    "FUNCTIONS",
]

FUNCTIONS = ("exp", "log", "sqrt", "abs", "sin", "cos")


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    """Malformed source text. ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int, source: str = ""):
        self.message = message
        self.position = position
        self.source = source
        super().__init__(f"{message} (at offset {position})")


class DomainError(ExprError, ArithmeticError):
    """An operation was applied outside its real domain."""

    def __init__(self, operation: str, operand: float, detail: str = ""):
        self.operation = operation
        self.operand = operand
        msg = detail or f"{operation} undefined for operand {operand!r}"
        super().__init__(msg)


# --------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or one of FUNCTIONS
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str  # '+', '-', '*', '/', '^'
    left: "Node"
    right: "Node"


Node = Union[Const, Var, Unary, Binary]


# --------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|<=|>=|==|[-+*/^(),<>=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            if kind == "op" and text == "**":
                text = "^"
            tokens.append(_Token(kind, text, pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, n_vars: int):
        self.source = source
        self.n_vars = n_vars
        self.tokens = _tokenize(source)
        self.k = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.k]

    def advance(self) -> _Token:
        t = self.tokens[self.k]
        self.k += 1
        return t

    def error(self, message: str, tok: _Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.pos, self.source)

    def expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind == "end":
            found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            raise self.error(f"expected {text!r}, found {found}")
        self.advance()

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.advance().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Unary("neg", self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.advance()
            name = tok.text
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(name, arg)
            m = re.fullmatch(r"x(\d+)", name)
            if m is None:
                raise self.error(f"unknown identifier {name!r}", tok)
            idx = int(m.group(1))
            if not 1 <= idx <= self.n_vars:
                raise self.error(
                    f"variable {name} out of range (n_vars = {self.n_vars})", tok
                )
            return Var(idx - 1)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected token {tok.text!r}")


# --------------------------------------------------------------------------
# Scalar semantics (reference tree walker; also used to produce diagnostics)

def _pow(a: float, b: float) -> float:
    if a < 0 and not float(b).is_integer():
        raise DomainError("^", a, f"non-integer power {b!r} of negative base {a!r}")
    if a == 0 and b < 0:
        raise DomainError("^", a, f"zero raised to negative power {b!r}")
    try:
        r = math.pow(a, b)
    except OverflowError:
        raise DomainError("^", a, f"overflow in {a!r}^{b!r}") from None
    return r


def _unary(op: str, a: float) -> float:
    if op == "neg":
        return -a
    if op == "abs":
        return abs(a)
    if op == "exp":
        try:
            return math.exp(a)
        except OverflowError:
            raise DomainError("exp", a, f"overflow in exp({a!r})") from None
    if op == "log":
        if not a > 0:
            raise DomainError("log", a, f"log of non-positive value {a!r}")
        return math.log(a)
    if op == "sqrt":
        if a < 0:
            raise DomainError("sqrt", a, f"sqrt of negative value {a!r}")
        return math.sqrt(a)
    if op in ("sin", "cos"):
        if not math.isfinite(a):
            raise DomainError(op, a, f"{op} of non-finite value {a!r}")
        return math.sin(a) if op == "sin" else math.cos(a)
    raise ValueError(f"unknown unary op {op!r}")


def _walk(node: Node, x: Sequence[float]) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(x[node.index])
    if isinstance(node, Unary):
        return _unary(node.op, _walk(node.arg, x))
    a = _walk(node.left, x)
    b = _walk(node.right, x)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise DomainError("/", b, f"division by zero ({a!r}/{b!r})")
        return a / b
    return _pow(a, b)


# --------------------------------------------------------------------------
# Code generation

def _int_exponent(node: Node) -> int | None:
    if isinstance(node, Const) and node.value.is_integer() and abs(node.value) <= 64:
        return int(node.value)
    return None


def _scalar_src(node: Node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x[{node.index}]"
    if isinstance(node, Unary):
        a = _scalar_src(node.arg)
        if node.op == "neg":
            return f"(-{a})"
        if node.op == "abs":
            return f"abs({a})"
        return f"_m.{node.op}({a})"
    a, b = _scalar_src(node.left), _scalar_src(node.right)
    if node.op == "^":
        k = _int_exponent(node.right)
        if k is not None and k >= 0:
            return f"({a})**{k}"
        return f"_pow({a}, {b})"
    return f"({a} {node.op} {b})"


def _nan_where_nonfinite(r):
    return np.where(np.isfinite(r), r, np.nan)


def _bdiv(a, b):
    b = np.asarray(b, dtype=float)
    safe = np.where(b == 0, 1.0, b)
    return np.where(b == 0, np.nan, a / safe)


def _blog(a):
    a = np.asarray(a, dtype=float)
    ok = a > 0
    return np.where(ok, np.log(np.where(ok, a, 1.0)), np.nan)


def _bsqrt(a):
    a = np.asarray(a, dtype=float)
    ok = a >= 0
    return np.where(ok, np.sqrt(np.where(ok, a, 0.0)), np.nan)


def _bexp(a):
    return _nan_where_nonfinite(np.exp(a))


def _bpow(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    bad = ((a < 0) & (b != np.floor(b))) | ((a == 0) & (b < 0))
    bad |= np.isnan(a) | np.isnan(b)
    r = np.power(np.where(bad, 1.0, a), np.where(bad, 1.0, b))
    return np.where(bad, np.nan, _nan_where_nonfinite(r))


def _batch_src(node: Node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x[{node.index}]"
    if isinstance(node, Unary):
        a = _batch_src(node.arg)
        if node.op == "neg":
            return f"(-{a})"
        if node.op == "abs":
            return f"_np.abs({a})"
        if node.op in ("sin", "cos"):
            return f"_np.{node.op}({a})"
        return f"_b{node.op}({a})"
    a, b = _batch_src(node.left), _batch_src(node.right)
    if node.op == "/":
        return f"_bdiv({a}, {b})"
    if node.op == "^":
        k = _int_exponent(node.right)
        if k is not None and k >= 0:
            return f"_nf(({a})**{k})"
        return f"_bpow({a}, {b})"
    return f"({a} {node.op} {b})"


_SCALAR_ENV = {"_m": math, "_pow": _pow, "__builtins__": {"abs": abs}}
_BATCH_ENV = {
    "_np": np,
    "_nf": _nan_where_nonfinite,
    "_bdiv": _bdiv,
    "_blog": _blog,
    "_bsqrt": _bsqrt,
    "_bexp": _bexp,
    "_bpow": _bpow,
    "__builtins__": {},
}


def _compile(src: str, env: dict) -> Callable:
    return eval(compile(f"lambda x: {src}", "<expr>", "eval"), dict(env))


# --------------------------------------------------------------------------
# Printing

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(node: Node) -> int:
    if isinstance(node, Const):
        return _PREC_UNARY if node.value < 0 else _PREC_ATOM
    if isinstance(node, Var):
        return _PREC_ATOM
    if isinstance(node, Unary):
        return _PREC_UNARY if node.op == "neg" else _PREC_ATOM
    return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL}.get(
        node.op, _PREC_POW
    )


def _fmt(node: Node, min_prec: int = 0) -> str:
    if isinstance(node, Const):
        s = repr(node.value)
        if s.endswith(".0"):
            s = s[:-2]
    elif isinstance(node, Var):
        s = f"x{node.index + 1}"
    elif isinstance(node, Unary):
        if node.op == "neg":
            s = "-" + _fmt(node.arg, _PREC_UNARY)
        else:
            s = f"{node.op}({_fmt(node.arg)})"
    elif node.op == "^":
        s = f"{_fmt(node.left, _PREC_ATOM)}^{_fmt(node.right, _PREC_UNARY)}"
    else:
        p = _prec(node)
        # Right operands are bracketed at equal precedence so that the tree,
        # and hence floating-point evaluation order, survives a round trip.
        s = f"{_fmt(node.left, p)} {node.op} {_fmt(node.right, p + 1)}"
    return f"({s})" if _prec(node) < min_prec else s


def _variables(node: Node, acc: set) -> set:
    if isinstance(node, Var):
        acc.add(node.index)
    elif isinstance(node, Unary):
        _variables(node.arg, acc)
    elif isinstance(node, Binary):
        _variables(node.left, acc)
        _variables(node.right, acc)
    return acc


# --------------------------------------------------------------------------

class Expr:
    """An immutable, compiled expression over ``n_vars`` variables.

    Points are indexed from 0 in Python (``x[0]`` is ``x1``).
    """

    __slots__ = ("root", "n_vars", "variables", "_fn", "_batch", "_text")

    def __init__(self, root: Node, n_vars: int):
        self.root = root
        self.n_vars = n_vars
        self.variables = frozenset(_variables(root, set()))
        if self.variables and max(self.variables) >= n_vars:
            raise ExprError(
                f"expression references x{max(self.variables) + 1} but n_vars = {n_vars}"
            )
        self._fn = _compile(_scalar_src(root), _SCALAR_ENV)
        self._batch = _compile(_batch_src(root), _BATCH_ENV)
        self._text = None

    def __reduce__(self):
        return (_rebuild, (self.root, self.n_vars))

    def __repr__(self) -> str:
        return f"Expr({self.to_source()!r}, n_vars={self.n_vars})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Expr)
            and self.root == other.root
            and self.n_vars == other.n_vars
        )

    def __hash__(self) -> int:
        return hash((self.root, self.n_vars))

    def to_source(self) -> str:
        if self._text is None:
            self._text = _fmt(self.root)
        return self._text

    __str__ = to_source

    def depends_on(self, i: int) -> bool:
        return i in self.variables

    def __call__(self, x: Sequence[float]) -> float:
        return self.evaluate(x)

    def evaluate(self, x: Sequence[float]) -> float:
        """Evaluate at ``x``; raises :class:`DomainError` on a domain violation."""
        if type(x) is not list and type(x) is not tuple:
            x = [float(v) for v in x]
        try:
            r = self._fn(x)
        except (ArithmeticError, ValueError):
            # Re-run the reference walker to get a precise diagnostic.
            r = _walk(self.root, x)
        if not math.isfinite(r):
            raise DomainError("overflow", r, f"non-finite result {r!r}")
        return r

    def eval_partial(self, x: Sequence[float], i: int, v: float) -> float:
        y = [float(v_) for v_ in x]
        y[i] = float(v)
        return self.evaluate(y)

    def restrict(self, x: Sequence[float], i: int) -> Callable[[float], float]:
        """Return ``t -> evaluate(x with x[i] = t)`` with the other coordinates frozen."""
        y = [float(v) for v in x]
        fn = self._fn
        root = self.root

        def restricted(t: float) -> float:
            y[i] = t
            try:
                r = fn(y)
            except (ArithmeticError, ValueError):
                r = _walk(root, y)
            if not math.isfinite(r):
                raise DomainError("overflow", r, f"non-finite result {r!r}")
            return r

        return restricted

    def evaluate_batch(self, X) -> np.ndarray:
        """Evaluate at every row of the ``(m, n)`` array ``X``.

        Rows where the scalar evaluation would raise come back as NaN.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("evaluate_batch expects a 2-D array")
        cols = [X[:, j] for j in range(X.shape[1])]
        with np.errstate(all="ignore"):
            r = self._batch(cols)
            r = np.broadcast_to(np.asarray(r, dtype=float), (X.shape[0],))
            return np.where(np.isfinite(r), r, np.nan)

    def walk(self, x: Sequence[float]) -> float:
        """Slow reference evaluation by direct tree recursion."""
        return _walk(self.root, x)


def _rebuild(root: Node, n_vars: int) -> Expr:
    return Expr(root, n_vars)


def parse(source: str, n_vars: int) -> Expr:
    """Parse ``source`` into an :class:`Expr` over variables ``x1..x{n_vars}``."""
    if not isinstance(source, str) or not source.strip():
        raise ParseError("empty expression", 0, source or "")
    p = _Parser(source, n_vars)
    node = p.expr()
    if p.tok.kind != "end":
        raise p.error(f"unexpected token {p.tok.text!r}")
    return Expr(node, n_vars)


def parse_constraint(source: str, n_vars: int) -> Expr:
    """Parse an inequality and normalize it to ``g`` with meaning ``g(x) <= 0``.

    Accepted forms: ``E <= 0``, ``E >= 0``, ``E1 <= E2``, ``E1 >= E2``.
    A bare expression ``E`` is read as ``E <= 0``.
    """
    if not isinstance(source, str) or not source.strip():
        raise ParseError("empty constraint", 0, source or "")
    p = _Parser(source, n_vars)
    lhs = p.expr()
    tok = p.tok
    if tok.kind == "end":
        return Expr(lhs, n_vars)
    if tok.text in ("=", "=="):
        raise p.error("equality constraints are not supported; use inequalities")
    if tok.text in ("<", ">"):
        raise p.error(f"strict inequality {tok.text!r} not supported; use <= or >=")
    if tok.text not in ("<=", ">="):
        raise p.error(f"unexpected token {tok.text!r}")
    p.advance()
    rhs = p.expr()
    if p.tok.kind != "end":
        raise p.error(f"unexpected token {p.tok.text!r}")
    rhs_zero = isinstance(rhs, Const) and rhs.value == 0.0
    if tok.text == "<=":
        node = lhs if rhs_zero else Binary("-", lhs, rhs)
    else:
        node = Unary("neg", lhs) if rhs_zero else Binary("-", rhs, lhs)
    return Expr(node, n_vars)


def evaluate(e: Expr, x: Sequence[float]) -> float:
    return e.evaluate(x)


def eval_partial(e: Expr, x: Sequence[float], i: int, v: float) -> float:
    return e.eval_partial(x, i, v)
