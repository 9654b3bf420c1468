"""Frontend for the single-loop C subset used by verification tasks.

Supported: ``int``/``unsigned int`` scalars, declarations, assignments
(``=``, ``+=``, ``-=``, ``*=``, ``/=``, ``%=``), ``++``/``--``, guard returns
``if (E) return;`` before the loop, ``__VERIFIER_assume``, exactly one
``while`` (or ``for``, desugared) loop whose body may contain ``if``/``else``,
and one assertion after the loop via ``assert`` or ``__VERIFIER_assert``.
The SV-COMP harness (``reach_error``, ``__VERIFIER_assert`` definitions,
``extern`` prototypes, ``#include`` lines) is recognised and skipped.

Execution uses 32-bit two's-complement wraparound for both types, including
signed overflow (ISO C leaves that undefined; the oracle needs a total
semantics). ``/`` and ``%`` truncate toward zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Union

from ._lexer import Token, tokenize
from .acsl import Binary, Const, Expr, ExprParser, Unary, Var, to_c, trunc_div
from .errors import DivisionByZero, ExecutionError, ParseError, UnsupportedConstruct


class CType(enum.Enum):
    I32 = "int"
    U32 = "unsigned int"

    @property
    def lo(self) -> int:
        return -(2**31) if self is CType.I32 else 0

    @property
    def hi(self) -> int:
        return 2**31 - 1 if self is CType.I32 else 2**32 - 1

    def wrap(self, v: int) -> int:
        v &= 0xFFFFFFFF
        if self is CType.I32 and v >= 2**31:
            v -= 2**32
        return v


@dataclass(frozen=True)
class SourcePos:
    line: int
    col: int


@dataclass(frozen=True)
class Nondet:
    """``__VERIFIER_nondet_*()`` call used as an initializer or assigned value."""

    func: str

    @property
    def ctype(self) -> CType:
        return NONDET_FUNCS[self.func]


@dataclass(frozen=True)
class VarDecl:
    name: str
    ctype: CType
    init: Union[Expr, Nondet, None] = None  # None: uninitialized, treated as an input


@dataclass(frozen=True)
class Assign:
    target: str
    op: str
    value: Union[Expr, Nondet]


@dataclass(frozen=True)
class IncDec:
    target: str
    op: str  # '++' or '--'


@dataclass(frozen=True)
class Guard:
    """``if (cond) return [value];`` in the prologue."""

    cond: Expr
    value: Expr | None = None


@dataclass(frozen=True)
class Assume:
    cond: Expr
    func: str = "__VERIFIER_assume"


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple
    orelse: tuple = ()


@dataclass(frozen=True)
class Assert:
    cond: Expr
    func: str = "assert"


@dataclass(frozen=True)
class Return:
    value: Expr | None = None


Stmt = Union[VarDecl, Assign, IncDec, Guard, Assume, If]


@dataclass(frozen=True)
class Loop:
    condition: Expr
    body: tuple
    site: SourcePos = field(default=SourcePos(0, 0), compare=False)
    kind: str = field(default="while", compare=False)


@dataclass(frozen=True)
class Program:
    name: str
    params: tuple
    prologue: tuple
    loop: Loop
    post_assertion: Expr
    subcategory: str = ""
    function: str = "main"
    ret_type: str = "int"
    assert_func: str = "assert"
    epilogue: tuple = ()

    @property
    def declarations(self) -> list[VarDecl]:
        return list(self.params) + [s for s in self.prologue if isinstance(s, VarDecl)]

    @property
    def loop_vars(self) -> dict[str, CType]:
        """Variables in scope at the loop head, in declaration order."""
        return {d.name: d.ctype for d in self.declarations}

    @property
    def inputs(self) -> list[tuple[str, CType]]:
        """Nondeterministic inputs (parameters, nondet/uninitialized locals)."""
        types = self.loop_vars
        out = [(d.name, d.ctype) for d in self.params]
        for s in self.prologue:
            if isinstance(s, VarDecl) and (s.init is None or isinstance(s.init, Nondet)):
                out.append((s.name, s.ctype))
            elif isinstance(s, Assign) and isinstance(s.value, Nondet):
                out.append((s.target, types[s.target]))
        return out


NONDET_FUNCS = {
    "__VERIFIER_nondet_int": CType.I32,
    "__VERIFIER_nondet_uint": CType.U32,
    "__VERIFIER_nondet_unsigned": CType.U32,
}
ASSERT_FUNCS = ("assert", "__VERIFIER_assert")
ASSUME_FUNCS = ("__VERIFIER_assume", "assume_abort_if_not")
HARNESS_FUNCS = frozenset(
    {"reach_error", "abort", "__assert_fail", "__VERIFIER_error"} | set(ASSERT_FUNCS) | set(ASSUME_FUNCS)
)
ASSIGN_OPS = ("=", "+=", "-=", "*=", "/=", "%=")
_TYPE_WORDS = frozenset(
    "int unsigned signed char short long float double void _Bool const volatile static inline".split()
)
_UNSUPPORTED_TYPES = frozenset("char short long float double void _Bool".split())


# -- parsing -----------------------------------------------------------------


@dataclass
class _FuncDef:
    name: str
    type_words: list[str]
    params_pos: int
    body_pos: int
    line: int


class _TaskParser(ExprParser):
    def __init__(self, tokens: list[Token]):
        super().__init__(tokens, mode="c", on_ident=self._check_declared)
        self.scopes: list[dict[str, CType]] = [{}]

    # scope handling
    def _lookup(self, name: str) -> CType | None:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def _check_declared(self, t: Token):
        if self._lookup(t.text) is None:
            raise ParseError(t.line, f"undeclared identifier '{t.text}'")

    def _declare(self, t: Token, ctype: CType):
        if self._lookup(t.text) is not None:
            raise ParseError(t.line, f"redeclaration of '{t.text}'")
        self.scopes[-1][t.text] = ctype

    def expr(self) -> Expr:
        return self._level(0)

    # token skipping
    def _skip_balanced(self, open_: str, close: str):
        self.expect(open_)
        depth = 1
        while depth:
            t = self.advance()
            if t.kind == "eof":
                raise ParseError(t.line, f"unbalanced '{open_}'")
            if t.kind == "op":
                depth += (t.text == open_) - (t.text == close)

    def _skip_attributes(self):
        while self.at("__attribute__"):
            self.advance()
            self._skip_balanced("(", ")")

    def _skip_to_semicolon(self):
        depth = 0
        while True:
            t = self.advance()
            if t.kind == "eof":
                raise ParseError(t.line, "missing ';'")
            if t.kind == "op":
                if t.text in "({[":
                    depth += 1
                elif t.text in ")}]":
                    depth -= 1
                elif t.text == ";" and depth == 0:
                    return

    # translation unit
    def translation_unit(self) -> _FuncDef:
        funcs: list[_FuncDef] = []
        while self.tok.kind != "eof":
            t = self.tok
            if t.kind == "directive":
                if not t.text.startswith("#include"):
                    raise UnsupportedConstruct("preprocessor directive", t.line)
                self.advance()
            elif self.at(";"):
                self.advance()
            elif self.at("extern"):
                self._skip_to_semicolon()
            elif self.at("typedef") or self.at("struct") or self.at("union") or self.at("enum"):
                raise UnsupportedConstruct(t.text, t.line)
            else:
                words = []
                while self.tok.kind == "id" and self.tok.text in _TYPE_WORDS | {"__attribute__"}:
                    if self.at("__attribute__"):
                        self._skip_attributes()
                    else:
                        words.append(self.advance().text)
                pointer = False
                while self.at("*"):
                    pointer = True
                    self.advance()
                if self.tok.kind != "id":
                    raise ParseError(self.tok.line, f"unexpected '{self.tok.text}' at top level")
                name_tok = self.advance()
                if not self.at("("):
                    raise UnsupportedConstruct("global variable", name_tok.line)
                params_pos = self.pos
                self._skip_balanced("(", ")")
                self._skip_attributes()
                if self.at(";"):
                    self.advance()
                    continue
                body_pos = self.pos
                self._skip_balanced("{", "}")
                if self._is_harness(name_tok.text):
                    continue
                if pointer:
                    raise UnsupportedConstruct("pointer", name_tok.line)
                funcs.append(_FuncDef(name_tok.text, words, params_pos, body_pos, name_tok.line))
        if not funcs:
            raise ParseError(None, "no task function found")
        mains = [f for f in funcs if f.name == "main"]
        if mains:
            others = [f for f in funcs if f.name != "main"]
            if others:
                raise UnsupportedConstruct(f"function definition '{others[0].name}'", others[0].line)
            return mains[0]
        if len(funcs) > 1:
            raise UnsupportedConstruct(f"function definition '{funcs[1].name}'", funcs[1].line)
        return funcs[0]

    @staticmethod
    def _is_harness(name: str) -> bool:
        return name in HARNESS_FUNCS or name.startswith("__VERIFIER_nondet")

    # types and declarations
    def _ctype(self) -> CType:
        words = []
        line = self.tok.line
        while self.tok.kind == "id" and self.tok.text in _TYPE_WORDS:
            words.append(self.advance().text)
        if not words:
            raise ParseError(line, f"expected a type, found '{self.tok.text}'")
        for w in words:
            if w in _UNSUPPORTED_TYPES:
                raise UnsupportedConstruct(f"type {w}", line)
        if self.at("*"):
            raise UnsupportedConstruct("pointer", line)
        if "unsigned" in words:
            return CType.U32
        if "int" in words or "signed" in words:
            return CType.I32
        raise ParseError(line, "missing type")

    def _params(self) -> tuple:
        self.expect("(")
        params = []
        if self.at("void") and self.peek().text == ")":
            self.advance()
        while not self.at(")"):
            ctype = self._ctype()
            name = self._ident()
            if self.at("["):
                raise UnsupportedConstruct("array", name.line)
            self._declare(name, ctype)
            params.append(VarDecl(name.text, ctype, None))
            if not self.at(")"):
                self.expect(",")
        self.expect(")")
        return tuple(params)

    def _ident(self) -> Token:
        t = self.tok
        if t.kind != "id":
            raise ParseError(t.line, f"expected identifier, found '{t.text}'")
        return self.advance()

    def _nondet_or_expr(self, allow_nondet: bool) -> Union[Expr, Nondet]:
        t = self.tok
        if t.kind == "id" and t.text.startswith("__VERIFIER_nondet") and self.peek().text == "(":
            if t.text not in NONDET_FUNCS:
                raise UnsupportedConstruct(f"call to {t.text}", t.line)
            if not allow_nondet:
                raise UnsupportedConstruct("nondeterministic value inside the loop", t.line)
            self.advance()
            self.expect("(")
            self.expect(")")
            return Nondet(t.text)
        return self.expr()

    def _declaration(self, in_loop: bool) -> list[VarDecl]:
        ctype = self._ctype()
        decls = []
        while True:
            name = self._ident()
            if self.at("["):
                raise UnsupportedConstruct("array", name.line)
            init = None
            if self.at("="):
                self.advance()
                init = self._nondet_or_expr(not in_loop)
            elif in_loop:
                raise UnsupportedConstruct("uninitialized declaration inside the loop", name.line)
            self._declare(name, ctype)
            decls.append(VarDecl(name.text, ctype, init))
            if self.at(","):
                self.advance()
                continue
            self.expect(";")
            return decls

    def _simple(self, in_loop: bool, terminator: str = ";") -> Stmt:
        """Assignment or increment; consumes the terminator."""
        t = self.tok
        if self.at("++") or self.at("--"):
            op = self.advance().text
            target = self._ident()
            self._check_declared(target)
            self.expect(terminator)
            return IncDec(target.text, op)
        target = self._ident()
        self._check_declared(target)
        if self.at("++") or self.at("--"):
            op = self.advance().text
            self.expect(terminator)
            return IncDec(target.text, op)
        if self.tok.kind == "op" and self.tok.text in ASSIGN_OPS:
            op = self.advance().text
            value = self._nondet_or_expr(allow_nondet=(op == "=" and not in_loop))
            self.expect(terminator)
            return Assign(target.text, op, value)
        if self.tok.kind == "op" and self.tok.text.endswith("=") and len(self.tok.text) >= 2:
            raise UnsupportedConstruct(f"operator {self.tok.text}", self.tok.line)
        raise ParseError(t.line, f"unexpected '{self.tok.text}' after '{target.text}'")

    def _block_or_stmt(self, ctx: str) -> list:
        if self.at("{"):
            self.advance()
            self.scopes.append({})
            stmts = []
            while not self.at("}"):
                if self.tok.kind == "eof":
                    raise ParseError(self.tok.line, "missing '}'")
                stmts.extend(self.statement(ctx))
            self.advance()
            self.scopes.pop()
            return stmts
        return self.statement(ctx)

    def statement(self, ctx: str) -> list:
        """Parse one statement. ``ctx`` is 'top' (function body) or 'loop'."""
        t = self.tok
        in_loop = ctx == "loop"
        if t.kind == "directive":
            raise UnsupportedConstruct("preprocessor directive", t.line)
        if t.kind == "op" and t.text == ";":
            self.advance()
            return []
        if t.kind == "op" and t.text == "{":
            if ctx == "top":
                raise UnsupportedConstruct("nested block", t.line)
            return self._block_or_stmt(ctx)
        if t.kind != "id" and not (t.kind == "op" and t.text in ("++", "--")):
            raise ParseError(t.line, f"unexpected '{t.text or 'end of input'}'")
        word = t.text
        if word in _TYPE_WORDS:
            return self._declaration(in_loop)
        if word in ("while", "for"):
            if in_loop:
                raise UnsupportedConstruct("nested loop", t.line)
            return [self._loop()]
        if word == "do":
            raise UnsupportedConstruct("do-while loop", t.line)
        if word in ("break", "continue", "goto", "switch", "case", "default"):
            raise UnsupportedConstruct(word, t.line)
        if word == "return":
            if in_loop:
                raise UnsupportedConstruct("return inside the loop", t.line)
            self.advance()
            value = None if self.at(";") else self.expr()
            self.expect(";")
            return [Return(value)]
        if word == "if":
            return [self._if(ctx)]
        if t.kind == "id" and self.peek().text == ":" and self.peek().kind == "op":
            raise UnsupportedConstruct("label", t.line)
        if t.kind == "id" and self.peek().text == "(":
            return [self._call(in_loop)]
        return [self._simple(in_loop)]

    def _call(self, in_loop: bool):
        name = self.advance()
        if name.text in ASSERT_FUNCS:
            if in_loop:
                raise UnsupportedConstruct("assertion inside the loop", name.line)
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            self.expect(";")
            return Assert(cond, name.text)
        if name.text in ASSUME_FUNCS:
            if in_loop:
                raise UnsupportedConstruct("assumption inside the loop", name.line)
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            self.expect(";")
            return Assume(cond, name.text)
        raise UnsupportedConstruct(f"call to {name.text}", name.line)

    def _if(self, ctx: str):
        t = self.expect("if")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        if ctx == "top":
            braced = self.at("{")
            if braced:
                self.advance()
            if not self.at("return"):
                raise UnsupportedConstruct("conditional statement outside the loop body", t.line)
            self.advance()
            value = None if self.at(";") else self.expr()
            self.expect(";")
            if braced:
                self.expect("}")
            if self.at("else"):
                raise UnsupportedConstruct("else branch outside the loop body", t.line)
            return Guard(cond, value)
        then = self._block_or_stmt(ctx)
        orelse: list = []
        if self.at("else"):
            self.advance()
            orelse = self._block_or_stmt(ctx)
        return If(cond, tuple(then), tuple(orelse))

    def _loop(self):
        t = self.advance()
        site = SourcePos(t.line, t.col)
        init: list = []
        if t.text == "while":
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            body = self._block_or_stmt("loop")
            return ("loop", init, Loop(cond, tuple(body), site, "while"))
        self.expect("(")
        if self.at(";"):
            self.advance()
        elif self.tok.text in _TYPE_WORDS:
            init = self._declaration(in_loop=False)
        else:
            init = [self._simple(in_loop=False)]
        if self.at(";"):
            cond = Const(1)
        else:
            cond = self.expr()
        self.expect(";")
        step = [] if self.at(")") else [self._simple(in_loop=True, terminator=")")]
        if not step:
            self.expect(")")
        body = self._block_or_stmt("loop")
        return ("loop", init, Loop(cond, tuple(body) + tuple(step), site, "for"))

    # task function
    def function(self, fdef: _FuncDef, name: str, subcategory: str) -> Program:
        ret = "void" if "void" in fdef.type_words else "int"
        self.pos = fdef.params_pos
        params = self._params()
        self.pos = fdef.body_pos
        self.expect("{")
        prologue: list = []
        loop: Loop | None = None
        assertion: Assert | None = None
        epilogue: list = []
        early: UnsupportedConstruct | None = None
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise ParseError(self.tok.line, "missing '}'")
            line = self.tok.line
            for s in self.statement("top"):
                if isinstance(s, tuple):
                    if loop is not None:
                        raise UnsupportedConstruct("multiple loops", line)
                    prologue.extend(s[1])
                    loop = s[2]
                elif loop is None:
                    if isinstance(s, (Assert, Return)) and early is None:
                        what = "assertion" if isinstance(s, Assert) else "return"
                        early = UnsupportedConstruct(f"{what} before the loop", line)
                    prologue.append(s)
                elif assertion is None:
                    if not isinstance(s, Assert):
                        raise UnsupportedConstruct("statement between the loop and the assertion", line)
                    assertion = s
                elif isinstance(s, Return) and not epilogue:
                    epilogue.append(s)
                elif isinstance(s, Assert):
                    raise UnsupportedConstruct("multiple assertions", line)
                else:
                    raise UnsupportedConstruct("statement after the assertion", line)
        if loop is None:
            raise UnsupportedConstruct("no loop")
        if early is not None:
            raise early
        if assertion is None:
            raise UnsupportedConstruct("missing assertion after the loop")
        return Program(
            name=name,
            params=params,
            prologue=tuple(prologue),
            loop=loop,
            post_assertion=assertion.cond,
            subcategory=subcategory,
            function=fdef.name,
            ret_type=ret,
            assert_func=assertion.func,
            epilogue=tuple(epilogue),
        )


def parse_task(source: str, name: str = "task", subcategory: str = "") -> Program:
    """Parse a single-loop verification task.

    Raises :class:`ParseError` for malformed input and
    :class:`UnsupportedConstruct` for anything outside the subset, including
    loop-free and multi-loop programs.
    """
    parser = _TaskParser(tokenize(source))
    fdef = parser.translation_unit()
    return parser.function(fdef, name, subcategory)


# -- printing ----------------------------------------------------------------


def _print_value(v) -> str:
    return f"{v.func}()" if isinstance(v, Nondet) else to_c(v)


def _print_stmts(stmts, indent: int) -> list[str]:
    pad = " " * indent
    out = []
    for s in stmts:
        if isinstance(s, VarDecl):
            init = "" if s.init is None else f" = {_print_value(s.init)}"
            out.append(f"{pad}{s.ctype.value} {s.name}{init};")
        elif isinstance(s, Assign):
            out.append(f"{pad}{s.target} {s.op} {_print_value(s.value)};")
        elif isinstance(s, IncDec):
            out.append(f"{pad}{s.target}{s.op};")
        elif isinstance(s, Guard):
            ret = "return;" if s.value is None else f"return {to_c(s.value)};"
            out.append(f"{pad}if ({to_c(s.cond)}) {ret}")
        elif isinstance(s, Assume):
            out.append(f"{pad}{s.func}({to_c(s.cond)});")
        elif isinstance(s, If):
            out.append(f"{pad}if ({to_c(s.cond)}) {{")
            out.extend(_print_stmts(s.then, indent + 2))
            if s.orelse:
                out.append(f"{pad}}} else {{")
                out.extend(_print_stmts(s.orelse, indent + 2))
            out.append(f"{pad}}}")
        elif isinstance(s, Return):
            out.append(f"{pad}return;" if s.value is None else f"{pad}return {to_c(s.value)};")
        else:
            raise TypeError(f"cannot print {s!r}")
    return out


def _nondet_funcs(p: Program) -> list[str]:
    used = set()

    def visit(stmts):
        for s in stmts:
            if isinstance(s, VarDecl) and isinstance(s.init, Nondet):
                used.add(s.init.func)
            elif isinstance(s, Assign) and isinstance(s.value, Nondet):
                used.add(s.value.func)

    visit(p.prologue)
    return sorted(used)


def print_program(p: Program) -> str:
    """Render ``p`` as compilable C source that parses back to an equal AST."""
    lines = []
    if p.assert_func == "assert":
        lines.append("#include <assert.h>")
    else:
        lines.append(f"extern void {p.assert_func}(int cond);")
    for func in _nondet_funcs(p):
        lines.append(f"extern {NONDET_FUNCS[func].value} {func}(void);")
    params = ", ".join(f"{d.ctype.value} {d.name}" for d in p.params) or "void"
    lines.append(f"{p.ret_type} {p.function}({params})")
    lines.append("{")
    lines.extend(_print_stmts(p.prologue, 2))
    lines.append(f"  while ({to_c(p.loop.condition)}) {{")
    lines.extend(_print_stmts(p.loop.body, 4))
    lines.append("  }")
    lines.append(f"  {p.assert_func}({to_c(p.post_assertion)});")
    lines.extend(_print_stmts(p.epilogue, 2))
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- execution ---------------------------------------------------------------


class State(Mapping[str, int]):
    """Immutable variable environment; values are kept in their C type's range."""

    __slots__ = ("_values", "_types")

    def __init__(self, values: Mapping[str, int], types: Mapping[str, CType]):
        missing = set(values) - set(types)
        if missing:
            raise KeyError(f"no C type for {sorted(missing)}")
        self._types = dict(types)
        self._values = {k: self._types[k].wrap(v) for k, v in values.items()}

    @property
    def types(self) -> dict[str, CType]:
        return dict(self._types)

    def __getitem__(self, name: str) -> int:
        return self._values[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __eq__(self, other):
        if isinstance(other, State):
            return self._values == other._values and self._types == other._types
        if isinstance(other, Mapping):
            return self._values == dict(other)
        return NotImplemented

    def __hash__(self):
        return hash(tuple(sorted(self._values.items())))

    def __repr__(self):
        inner = ", ".join(f"{k}: {v}" for k, v in self._values.items())
        return f"State({{{inner}}})"

    def as_dict(self) -> dict[str, int]:
        return dict(self._values)


class _Return(Exception):
    pass


def _literal_type(c: Const) -> CType:
    if "u" in c.suffix.lower() or c.value > CType.I32.hi:
        return CType.U32
    return CType.I32


def _convert(f, src: CType, dst: CType):
    if src is dst:
        return f
    return lambda env: dst.wrap(f(env))


def compile_c(e: Expr, types: Mapping[str, CType]) -> tuple[Callable[[dict], int], CType]:
    """Compile a C expression to ``(closure, result type)`` with C semantics."""
    if isinstance(e, Const):
        if e.value > CType.U32.hi:
            raise UnsupportedConstruct(f"integer literal {e.value} wider than 32 bits")
        t = _literal_type(e)
        v = t.wrap(e.value)
        return (lambda env: v), t
    if isinstance(e, Var):
        name = e.name
        return (lambda env: env[name]), types[name]
    if isinstance(e, Unary):
        f, t = compile_c(e.operand, types)
        if e.op == "-":
            return (lambda env: t.wrap(-f(env))), t
        return (lambda env: int(not f(env))), CType.I32
    if e.op == "==>":
        raise UnsupportedConstruct("implication in C code")
    lf, lt = compile_c(e.left, types)
    rf, rt = compile_c(e.right, types)
    if e.op == "&&":
        return (lambda env: int(bool(lf(env)) and bool(rf(env)))), CType.I32
    if e.op == "||":
        return (lambda env: int(bool(lf(env)) or bool(rf(env)))), CType.I32
    if e.op in ("<<", ">>"):
        left = e.op == "<<"

        def shift(env):
            a, b = lf(env), rf(env)
            if not 0 <= b < 32:
                raise ExecutionError("shift amount out of range")
            return lt.wrap(a << b) if left else a >> b

        return shift, lt
    common = CType.U32 if CType.U32 in (lt, rt) else CType.I32
    lf, rf = _convert(lf, lt, common), _convert(rf, rt, common)
    op = e.op
    if op == "+":
        return (lambda env: common.wrap(lf(env) + rf(env))), common
    if op == "-":
        return (lambda env: common.wrap(lf(env) - rf(env))), common
    if op == "*":
        return (lambda env: common.wrap(lf(env) * rf(env))), common
    if op in ("/", "%"):
        is_div = op == "/"

        def div(env):
            a, b = lf(env), rf(env)
            if b == 0:
                raise DivisionByZero()
            q = trunc_div(a, b)
            return common.wrap(q if is_div else a - b * q)

        return div, common
    cmp = {
        "==": lambda a, b: a == b,
        "!=": lambda a, b: a != b,
        "<": lambda a, b: a < b,
        "<=": lambda a, b: a <= b,
        ">": lambda a, b: a > b,
        ">=": lambda a, b: a >= b,
    }[op]
    return (lambda env: int(cmp(lf(env), rf(env)))), CType.I32


_COMPOUND = {"+=": "+", "-=": "-", "*=": "*", "/=": "/", "%=": "%"}


def _stmt_text(s) -> str:
    return _print_stmts([s], 0)[0]


def _compile_stmt(s, types: dict[str, CType], inputs: Mapping[str, int] | None):
    """Compile ``s`` to a function mutating an env dict.

    ``inputs`` is consulted for nondet values (prologue only). ``types`` is
    extended with declarations as they are compiled.
    """
    text = _stmt_text(s)

    def guarded(fn):
        def run(env):
            try:
                fn(env)
            except ExecutionError as exc:
                if not exc.stmt:
                    exc.stmt = text
                    exc.args = (f"{exc.reason} in `{text}`",)
                raise
        return run

    def value_fn(value, target_type: CType, name: str):
        if isinstance(value, Nondet):
            def nondet(env):
                try:
                    return target_type.wrap(inputs[name])
                except (KeyError, TypeError):
                    raise ValueError(f"missing input for nondeterministic variable '{name}'") from None
            return nondet
        f, t = compile_c(value, types)
        return lambda env: target_type.wrap(f(env))

    if isinstance(s, VarDecl):
        name, ctype = s.name, s.ctype
        if s.init is None:
            fn = value_fn(Nondet("__VERIFIER_nondet_int"), ctype, name)
        else:
            fn = value_fn(s.init, ctype, name)
        types[name] = ctype

        def decl(env):
            env[name] = fn(env)
        return guarded(decl)
    if isinstance(s, Assign):
        name, ctype = s.target, types[s.target]
        if s.op == "=":
            fn = value_fn(s.value, ctype, name)
        else:
            fn = value_fn(Binary(_COMPOUND[s.op], Var(name), s.value), ctype, name)

        def assign(env):
            env[name] = fn(env)
        return guarded(assign)
    if isinstance(s, IncDec):
        name, ctype = s.target, types[s.target]
        delta = 1 if s.op == "++" else -1
        return lambda env: env.__setitem__(name, ctype.wrap(env[name] + delta))
    if isinstance(s, (Guard, Assume)):
        f, _ = compile_c(s.cond, types)
        fires = (lambda env: f(env)) if isinstance(s, Guard) else (lambda env: not f(env))

        def guard(env):
            if fires(env):
                raise _Return()
        return guarded(guard)
    if isinstance(s, If):
        f, _ = compile_c(s.cond, types)
        then = _compile_block(s.then, dict(types), inputs)
        orelse = _compile_block(s.orelse, dict(types), inputs)

        def branch(env):
            (then if f(env) else orelse)(env)
        return guarded(branch)
    raise TypeError(f"cannot execute {s!r}")


def _compile_block(stmts, types, inputs):
    fns = [_compile_stmt(s, types, inputs) for s in stmts]

    def block(env):
        for fn in fns:
            fn(env)
    return block


class CompiledProgram:
    """Closures for the loop condition, body and assertion of a program."""

    def __init__(self, p: Program):
        self.program = p
        self.types = p.loop_vars
        self.var_names = list(self.types)
        cond, _ = compile_c(p.loop.condition, self.types)
        assertion, _ = compile_c(p.post_assertion, self.types)
        self.cond = lambda env: bool(cond(env))
        self.assertion = lambda env: bool(assertion(env))
        self._body = _compile_block(p.loop.body, dict(self.types), None)
        self._inputs: dict[str, int] = {}
        self._prologue = _compile_block(p.prologue, {d.name: d.ctype for d in p.params}, self._inputs)

    def run_prologue(self, inputs: Mapping[str, int]) -> dict[str, int] | None:
        self._inputs.clear()
        self._inputs.update(inputs)
        env = {}
        for d in self.program.params:
            if d.name not in inputs:
                raise ValueError(f"missing input for parameter '{d.name}'")
            env[d.name] = d.ctype.wrap(inputs[d.name])
        try:
            self._prologue(env)
        except _Return:
            return None
        return env

    def step(self, env: Mapping[str, int]) -> dict[str, int]:
        new = dict(env)
        self._body(new)
        if len(new) != len(self.var_names):
            new = {k: new[k] for k in self.var_names}
        return new


def run_prologue(p: Program, inputs: Mapping[str, int]) -> State | None:
    """Execute the prologue; the loop-head state, or ``None`` if a guard returned early."""
    env = CompiledProgram(p).run_prologue(inputs)
    return None if env is None else State(env, p.loop_vars)


def step_body(p: Program, s: Mapping[str, int]) -> State:
    """Execute the loop body once from ``s``.

    Raises :class:`~invforge.errors.ExecutionError` (e.g. ``DivisionByZero``)
    on undefined behaviour.
    """
    types = p.loop_vars
    env = {k: types[k].wrap(s[k]) for k in types}
    return State(CompiledProgram(p).step(env), types)
