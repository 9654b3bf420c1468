"""ACSL loop-invariant expressions: AST, parser, printers and evaluator.

The same expression tree is used for C expressions parsed by
:mod:`invforge.cminus`; the two languages share every operator except the
ACSL-only implication ``==>`` and chained comparisons (``a <= b <= c``),
which the parser desugars into conjunctions.

Invariants are evaluated over mathematical (unbounded) integers. Values read
from a :class:`~invforge.cminus.State` are already lifted to their integer
meaning per C type, so a ``u32`` holding ``2**32 - 1`` compares as
4294967295.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

from ._lexer import Token, tokenize
from .errors import ParseError, UnboundVariable, UnsupportedConstruct, UnsupportedSymbol


@dataclass(frozen=True)
class Const:
    value: int
    suffix: str = ""

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("Const holds non-negative literals; use Unary('-', ...)")


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # '-' or '!'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Unary, Binary]

ARITH_OPS = frozenset({"+", "-", "*", "/", "%", "<<", ">>"})
COMPARE_OPS = frozenset({"==", "!=", "<", "<=", ">", ">="})
LOGIC_OPS = frozenset({"&&", "||", "==>"})
BINARY_OPS = ARITH_OPS | COMPARE_OPS | LOGIC_OPS
UNARY_OPS = frozenset({"-", "!"})

# Shifts beyond this many bits are reported as undefined instead of building
# astronomically large integers.
MAX_SHIFT = 4096

_LOGIC_CONSTANTS = {"\\true": 1, "\\false": 0}
_C_TYPE_WORDS = frozenset(
    "int unsigned signed char short long float double void _Bool const volatile".split()
)


# -- parsing ---------------------------------------------------------------


class ExprParser:
    """Precedence-climbing parser over a token list.

    ``mode`` is ``"acsl"`` (implication, chained comparisons, calls rejected as
    :class:`UnsupportedSymbol`) or ``"c"`` (C precedence, calls and casts
    rejected as :class:`UnsupportedConstruct`). ``on_ident`` lets the C
    frontend check declarations as identifiers are consumed.
    """

    def __init__(self, tokens: list[Token], pos: int = 0, mode: str = "acsl",
                 on_ident: Callable[[Token], None] | None = None):
        self.toks = tokens
        self.pos = pos
        self.mode = mode
        self.on_ident = on_ident

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "id") and t.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            t = self.tok
            found = t.text or "end of input"
            raise ParseError(t.line, f"expected '{text}', found '{found}'")
        return self.advance()

    def parse(self) -> Expr:
        if self.mode == "acsl":
            return self._implication()
        return self._level(0)

    # ACSL: '==>' (right assoc) < '||' < '&&' < comparisons (chained) < shifts ...
    def _implication(self) -> Expr:
        left = self._logic_or()
        if self.at("==>"):
            self.advance()
            return Binary("==>", left, self._implication())
        if self.at("<==>"):
            raise UnsupportedSymbol("<==>")
        return left

    def _logic_or(self) -> Expr:
        left = self._logic_and()
        while self.at("||"):
            self.advance()
            left = Binary("||", left, self._logic_and())
        return left

    def _logic_and(self) -> Expr:
        left = self._comparison()
        while self.at("&&"):
            self.advance()
            left = Binary("&&", left, self._comparison())
        return left

    def _comparison(self) -> Expr:
        operands = [self._level(4)]
        ops = []
        while self.tok.kind == "op" and self.tok.text in COMPARE_OPS:
            ops.append(self.advance().text)
            operands.append(self._level(4))
        if not ops:
            return operands[0]
        links = [Binary(op, operands[i], operands[i + 1]) for i, op in enumerate(ops)]
        return conjoin_left(links)

    # Binary levels shared by both modes, tightest last.
    _C_LEVELS = [
        ("||",),
        ("&&",),
        ("==", "!="),
        ("<", "<=", ">", ">="),
        ("<<", ">>"),
        ("+", "-"),
        ("*", "/", "%"),
    ]

    def _level(self, level: int) -> Expr:
        if level == len(self._C_LEVELS):
            return self._unary()
        ops = self._C_LEVELS[level]
        left = self._level(level + 1)
        while self.tok.kind == "op" and self.tok.text in ops:
            op = self.advance().text
            left = Binary(op, left, self._level(level + 1))
        return left

    def _unary(self) -> Expr:
        t = self.tok
        if t.kind == "op" and t.text in ("-", "!", "+"):
            self.advance()
            operand = self._unary()
            return operand if t.text == "+" else Unary(t.text, operand)
        if t.kind == "op" and t.text in ("~", "*", "&", "++", "--"):
            self._reject(t.text, t)
        return self._primary()

    def _reject(self, what: str, t: Token):
        if self.mode == "acsl":
            raise UnsupportedSymbol(what)
        raise UnsupportedConstruct(f"operator {what}", t.line)

    def _primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Const(t.value, t.text[len(t.text.rstrip("uUlL")):])
        if t.kind == "id":
            if t.text in _LOGIC_CONSTANTS and self.mode == "acsl":
                self.advance()
                return Const(_LOGIC_CONSTANTS[t.text])
            if self.peek().kind == "op" and self.peek().text == "(":
                if self.mode == "acsl":
                    raise UnsupportedSymbol(t.text)
                raise UnsupportedConstruct(f"call to {t.text}", t.line)
            if t.text.startswith("\\") or t.text == "sizeof":
                self._reject(t.text, t)
            if self.mode == "c" and t.text in _C_TYPE_WORDS:
                raise ParseError(t.line, f"unexpected type keyword '{t.text}'")
            self.advance()
            if self.on_ident is not None:
                self.on_ident(t)
            if self.tok.kind == "op" and self.tok.text in ("[", ".", "->"):
                self._reject(self.tok.text, self.tok)
            return Var(t.text)
        if t.kind == "op" and t.text == "(":
            nxt = self.peek()
            if nxt.kind == "id" and nxt.text in _C_TYPE_WORDS:
                if self.mode == "acsl":
                    raise UnsupportedSymbol(f"cast to {nxt.text}")
                raise UnsupportedConstruct("cast", t.line)
            self.advance()
            inner = self.parse()
            self.expect(")")
            return inner
        found = t.text or "end of input"
        raise ParseError(t.line, f"unexpected '{found}' in expression")


def parse_invariant(raw: str) -> Expr:
    """Parse an ACSL predicate in the supported subset.

    Raises :class:`ParseError` on malformed text and :class:`UnsupportedSymbol`
    for calls (``pow(2, x)``), logic built-ins (``\\at``, ``\\forall``) and
    other operators outside the subset.
    """
    tokens = tokenize(raw)
    for t in tokens:
        if t.kind in ("str", "char", "directive"):
            raise ParseError(t.line, f"unexpected {t.kind} in invariant")
    p = ExprParser(tokens, mode="acsl")
    if p.tok.kind == "eof":
        raise ParseError(1, "empty invariant")
    e = p.parse()
    if p.tok.kind != "eof":
        if p.tok.kind == "op" and p.tok.text in ("[", ".", "->", "?", "~", "&", "|", "^"):
            raise UnsupportedSymbol(p.tok.text)
        raise ParseError(p.tok.line, f"unexpected '{p.tok.text}' after expression")
    return e


# -- printing --------------------------------------------------------------


def print_invariant(e: Expr) -> str:
    """Canonical, fully parenthesized form used for annotations and dedup."""
    if isinstance(e, Const):
        return f"{e.value}{e.suffix}"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        return f"({e.op}{print_invariant(e.operand)})"
    return f"({print_invariant(e.left)} {e.op} {print_invariant(e.right)})"


_C_PREC = {
    "||": 1, "&&": 2,
    "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "<<": 5, ">>": 5,
    "+": 6, "-": 6,
    "*": 7, "/": 7, "%": 7,
}
_UNARY_PREC = 8


def to_c(e: Expr) -> str:
    """Print with C operator spellings and minimal parentheses.

    Implication is rewritten as ``(!(a)) || (b)``.
    """
    return _to_c(e)[0]


def _to_c(e: Expr) -> tuple[str, int]:
    if isinstance(e, Const):
        return f"{e.value}{e.suffix}", 9
    if isinstance(e, Var):
        return e.name, 9
    if isinstance(e, Unary):
        inner, prec = _to_c(e.operand)
        if prec < 9 or isinstance(e.operand, Unary):
            inner = f"({inner})"
        return f"{e.op}{inner}", _UNARY_PREC
    if e.op == "==>":
        return f"(!({to_c(e.left)})) || ({to_c(e.right)})", 1
    prec = _C_PREC[e.op]
    left, lp = _to_c(e.left)
    right, rp = _to_c(e.right)
    if lp < prec or _needs_clarity_parens(e.op, e.left):
        left = f"({left})"
    if rp <= prec or _needs_clarity_parens(e.op, e.right):
        right = f"({right})"
    return f"{left} {e.op} {right}", prec


def _needs_clarity_parens(op: str, child: Expr) -> bool:
    if not isinstance(child, Binary):
        return False
    if op in COMPARE_OPS and child.op in COMPARE_OPS:
        return True
    if op == "||" and child.op == "&&":
        return True
    if op in ("<<", ">>") and child.op in ("+", "-"):
        return True
    return False


# -- structure helpers ------------------------------------------------------


def conjoin(es: Iterable[Expr]) -> Expr:
    """Right-nested conjunction preserving order; a singleton is returned as is."""
    es = list(es)
    if not es:
        raise ValueError("conjoin needs at least one expression")
    result = es[-1]
    for e in reversed(es[:-1]):
        result = Binary("&&", e, result)
    return result


def conjoin_left(es: list[Expr]) -> Expr:
    result = es[0]
    for e in es[1:]:
        result = Binary("&&", result, e)
    return result


def conjuncts(e: Expr) -> list[Expr]:
    """Top-level conjuncts of ``e``, flattening nested ``&&`` in order."""
    if isinstance(e, Binary) and e.op == "&&":
        return conjuncts(e.left) + conjuncts(e.right)
    return [e]


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Unary):
        return free_vars(e.operand)
    return free_vars(e.left) | free_vars(e.right)


# -- evaluation --------------------------------------------------------------


class Undefined:
    """Result of evaluating an expression with no defined value."""

    __slots__ = ("reason",)

    def __init__(self, reason: str):
        self.reason = reason

    def __eq__(self, other):
        return isinstance(other, Undefined) and other.reason == self.reason

    def __hash__(self):
        return hash(("Undefined", self.reason))

    def __repr__(self):
        return f"Undefined({self.reason!r})"

    def __bool__(self):
        raise TypeError("Undefined has no truth value; compare with `is True`")


class UndefinedValue(Exception):
    """Raised inside compiled predicates; carries the reason."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


def trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _undef_div(a, b):
    if b == 0:
        raise UndefinedValue("division by zero")
    return trunc_div(a, b)


def _undef_mod(a, b):
    if b == 0:
        raise UndefinedValue("modulo by zero")
    return a - b * trunc_div(a, b)


def _shift_amount(b):
    if b < 0:
        raise UndefinedValue("negative shift amount")
    if b > MAX_SHIFT:
        raise UndefinedValue("shift amount too large")
    return b


_MATH_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _undef_div,
    "%": _undef_mod,
    "<<": lambda a, b: a << _shift_amount(b),
    ">>": lambda a, b: a >> _shift_amount(b),
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def compile_math(e: Expr) -> Callable[[Mapping[str, int]], int]:
    """Compile ``e`` into a closure over an environment of integers.

    Comparisons yield bools (which are ints); logical connectives treat any
    non-zero value as true and short-circuit. Undefined operations raise
    :class:`UndefinedValue`, missing variables :class:`UnboundVariable`.
    """
    if isinstance(e, Const):
        v = e.value
        return lambda env: v
    if isinstance(e, Var):
        name = e.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariable(name) from None

        return var
    if isinstance(e, Unary):
        f = compile_math(e.operand)
        if e.op == "-":
            return lambda env: -f(env)
        return lambda env: not f(env)
    lf, rf = compile_math(e.left), compile_math(e.right)
    if e.op == "&&":
        return lambda env: bool(lf(env)) and bool(rf(env))
    if e.op == "||":
        return lambda env: bool(lf(env)) or bool(rf(env))
    if e.op == "==>":
        return lambda env: (not lf(env)) or bool(rf(env))
    op = _MATH_BINOPS[e.op]
    return lambda env: op(lf(env), rf(env))


def evaluate(e: Expr, state: Mapping[str, int]) -> bool | Undefined:
    """Truth value of ``e`` in ``state``: ``True``, ``False`` or :class:`Undefined`.

    Raises :class:`UnboundVariable` if ``e`` mentions a name missing from ``state``.
    """
    try:
        return bool(compile_math(e)(state))
    except UndefinedValue as exc:
        return Undefined(exc.reason)


@dataclass(frozen=True)
class InvariantText:
    """A candidate as extracted from a generator response, plus its parse."""

    raw: str
    parsed: Expr | None = None
    error: str | None = None
    symbol: str | None = None  # set when parsing failed with UnsupportedSymbol

    @classmethod
    def from_raw(cls, raw: str) -> "InvariantText":
        try:
            return cls(raw, parse_invariant(raw))
        except UnsupportedSymbol as exc:
            return cls(raw, None, str(exc), exc.name)
        except (ParseError, UnsupportedConstruct) as exc:
            return cls(raw, None, str(exc))

    @property
    def canonical(self) -> str:
        """Dedup key: canonical print if parsed, else whitespace-normalised raw text."""
        if self.parsed is not None:
            return print_invariant(self.parsed)
        return " ".join(self.raw.split())
