"""Bounded brute-force validator and verifier.

Validity means established (every loop-entry state reachable from inputs in
the nondet ranges satisfies the invariant) and inductive (every state in the
per-variable enumeration ranges that satisfies the invariant and the loop
condition still satisfies it after one body execution). The inductive check
ranges over arbitrary states, not just reachable ones, as WP-style provers
do; successors may leave the enumeration range and are evaluated exactly.

A ``Valid`` verdict is a bounded claim. Counterexamples are concrete, so
failures stay failures when the ranges grow.

States are visited smallest first (by sum of absolute values, preferring
non-negative values), so reported counterexamples are minimal within the
domain.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

from .acsl import Expr, InvariantText, UndefinedValue, compile_math, free_vars
from .cminus import CompiledProgram, CType, Program
from .errors import ExecutionError


@dataclass(frozen=True)
class DomainConfig:
    nondet_range_unsigned: tuple[int, int] = (0, 16)
    nondet_range_signed: tuple[int, int] = (-8, 8)
    state_range_unsigned: tuple[int, int] = (0, 16)
    state_range_signed: tuple[int, int] = (-8, 8)
    max_states: int = 10**6

    def __post_init__(self):
        for name in ("nondet_range_unsigned", "nondet_range_signed",
                     "state_range_unsigned", "state_range_signed"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (int(lo), int(hi)))
            ctype = CType.U32 if name.endswith("unsigned") else CType.I32
            if lo > hi:
                raise ValueError(f"{name}: lo > hi")
            if lo < ctype.lo or hi > ctype.hi:
                raise ValueError(f"{name}: range exceeds {ctype.value}")
        if self.max_states < 1:
            raise ValueError("max_states must be positive")

    def nondet_range(self, t: CType) -> tuple[int, int]:
        return self.nondet_range_unsigned if t is CType.U32 else self.nondet_range_signed

    def state_range(self, t: CType) -> tuple[int, int]:
        return self.state_range_unsigned if t is CType.U32 else self.state_range_signed

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DomainConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


# -- verdicts -----------------------------------------------------------------


class Verdict:
    @property
    def kind(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class Holds(Verdict):
    pass


@dataclass(frozen=True)
class Valid(Verdict):
    pass


@dataclass(frozen=True)
class ParseFailed(Verdict):
    message: str


@dataclass(frozen=True)
class Unsupported(Verdict):
    symbol: str
    detail: str = ""


@dataclass(frozen=True)
class NotEstablished(Verdict):
    cex: dict  # nondet input vector


@dataclass(frozen=True)
class NotInductive(Verdict):
    cex: dict  # pre-state
    successor: dict = field(default_factory=dict)


@dataclass(frozen=True)
class UndefinedSemantics(Verdict):
    state: dict
    reason: str = "undefined-semantics"


@dataclass(frozen=True)
class Unknown(Verdict):
    reason: str


@dataclass(frozen=True)
class Useful(Verdict):
    pass


@dataclass(frozen=True)
class NotUseful(Verdict):
    cex: dict | None = None


_VERDICTS = {cls.__name__: cls for cls in (
    Holds, Valid, ParseFailed, Unsupported, NotEstablished, NotInductive,
    UndefinedSemantics, Unknown, Useful, NotUseful)}


def verdict_from_dict(d: Mapping) -> Verdict:
    d = dict(d)
    cls = _VERDICTS[d.pop("kind")]
    return cls(**d)


# -- enumeration --------------------------------------------------------------


class _Budget(Exception):
    pass


def _order_key(values: tuple[int, ...]):
    return (
        sum(abs(v) for v in values),
        sum(v < 0 for v in values),
        tuple(-abs(v) for v in values),
        tuple(v < 0 for v in values),
    )


@functools.lru_cache(maxsize=16)
def _enumerate(ranges: tuple[tuple[int, int], ...], max_states: int) -> tuple[tuple[int, ...], ...]:
    total = 1
    for lo, hi in ranges:
        total *= hi - lo + 1
    if total > max_states:
        raise _Budget()
    combos = itertools.product(*(range(lo, hi + 1) for lo, hi in ranges))
    return tuple(sorted(combos, key=_order_key))


def _inputs_space(cp: CompiledProgram, d: DomainConfig):
    names, ranges = [], []
    for name, ctype in cp.program.inputs:
        if name not in names:
            names.append(name)
            ranges.append(d.nondet_range(ctype))
    return names, _enumerate(tuple(ranges), d.max_states)


def _state_space(cp: CompiledProgram, d: DomainConfig):
    names = cp.var_names
    ranges = tuple(d.state_range(cp.types[n]) for n in names)
    return names, _enumerate(ranges, d.max_states)


Predicate = Callable[[dict], bool]


def _established(cp: CompiledProgram, pred: Predicate, d: DomainConfig) -> Verdict:
    try:
        names, space = _inputs_space(cp, d)
    except _Budget:
        return Unknown("budget")
    for combo in space:
        inputs = dict(zip(names, combo))
        try:
            env = cp.run_prologue(inputs)
        except ExecutionError as exc:
            return UndefinedSemantics(inputs, str(exc))
        if env is None:
            continue
        try:
            ok = pred(env)
        except UndefinedValue as exc:
            return UndefinedSemantics(env, exc.reason)
        if not ok:
            return NotEstablished(inputs)
    return Holds()


def _inductive(cp: CompiledProgram, pred: Predicate, d: DomainConfig) -> Verdict:
    try:
        names, space = _state_space(cp, d)
    except _Budget:
        return Unknown("budget")
    cond, step = cp.cond, cp.step
    for combo in space:
        env = dict(zip(names, combo))
        try:
            if not pred(env):
                continue
        except UndefinedValue as exc:
            return UndefinedSemantics(env, exc.reason)
        try:
            if not cond(env):
                continue
            succ = step(env)
        except ExecutionError as exc:
            return UndefinedSemantics(env, str(exc))
        try:
            ok = pred(succ)
        except UndefinedValue as exc:
            return UndefinedSemantics(succ, exc.reason)
        if not ok:
            return NotInductive(env, succ)
    return Holds()


def _invariant_predicate(inv: Expr) -> Predicate:
    f = compile_math(inv)
    return lambda env: bool(f(env))


def _scope_failure(p: Program, inv: Expr) -> Unsupported | None:
    unknown = sorted(free_vars(inv) - set(p.loop_vars))
    if unknown:
        return Unsupported(unknown[0], "identifier not in scope at the loop head")
    return None


def check_established(p: Program, inv: Expr, d: DomainConfig = DomainConfig()) -> Verdict:
    """``Holds``, ``NotEstablished`` (first failing input vector), ``UndefinedSemantics`` or ``Unknown``."""
    return _established(CompiledProgram(p), _invariant_predicate(inv), d)


def check_inductive(p: Program, inv: Expr, d: DomainConfig = DomainConfig()) -> Verdict:
    return _inductive(CompiledProgram(p), _invariant_predicate(inv), d)


def _as_expr(c) -> Expr | Verdict:
    text = getattr(c, "text", c)
    if isinstance(text, str):
        text = InvariantText.from_raw(text)
    if isinstance(text, InvariantText):
        if text.parsed is None:
            if text.symbol:
                return Unsupported(text.symbol, text.error or "")
            return ParseFailed(text.error or "unparsable invariant")
        return text.parsed
    return text


def validate(p: Program, c, d: DomainConfig = DomainConfig()) -> Verdict:
    """Validity verdict for a candidate.

    ``c`` may be an :class:`~invforge.generation.InvariantCandidate`, an
    :class:`InvariantText`, raw text or a parsed expression. Parse failures
    propagate as ``ParseFailed``/``Unsupported``; otherwise establishment is
    checked before inductiveness and the first failure wins.
    """
    inv = _as_expr(c)
    if isinstance(inv, Verdict):
        return inv
    bad = _scope_failure(p, inv)
    if bad:
        return bad
    cp = CompiledProgram(p)
    pred = _invariant_predicate(inv)
    verdict = _established(cp, pred, d)
    if isinstance(verdict, Holds):
        verdict = _inductive(cp, pred, d)
    return Valid() if isinstance(verdict, Holds) else verdict


def check_useful(p: Program, inv: Expr, d: DomainConfig = DomainConfig()) -> Verdict:
    """``Useful`` iff every enumerated exit state satisfying ``inv`` satisfies the assertion."""
    bad = _scope_failure(p, inv)
    if bad:
        return Unknown(f"identifier '{bad.symbol}' not in scope")
    cp = CompiledProgram(p)
    pred = _invariant_predicate(inv)
    try:
        names, space = _state_space(cp, d)
    except _Budget:
        return Unknown("budget")
    for combo in space:
        env = dict(zip(names, combo))
        try:
            if not pred(env) or cp.cond(env):
                continue
            ok = cp.assertion(env)
        except (UndefinedValue, ExecutionError) as exc:
            return Unknown(f"undefined-semantics: {getattr(exc, 'reason', exc)} at {env}")
        if not ok:
            return NotUseful(env)
    return Useful()


def verify(p: Program, inv: Expr | None = None, d: DomainConfig = DomainConfig()) -> Verdict:
    """Prove the post-loop assertion by 1-induction, optionally strengthened by ``inv``.

    The safety property at the loop head is ``cond || assertion`` (C
    semantics). Without ``inv`` this is plain k-induction with k = 1 and no
    unrolling; with ``inv`` the checked predicate is ``inv && property``.
    Returns ``Holds`` when the program is proved.
    """
    cp = CompiledProgram(p)

    def prop(env):
        return cp.cond(env) or cp.assertion(env)

    if inv is not None:
        bad = _scope_failure(p, inv)
        if bad:
            return bad
        inv_pred = _invariant_predicate(inv)
        pred = lambda env: inv_pred(env) and prop(env)  # noqa: E731
    else:
        pred = prop

    def safe(env):
        try:
            return pred(env)
        except ExecutionError as exc:
            raise UndefinedValue(str(exc)) from None

    verdict = _established(cp, safe, d)
    if isinstance(verdict, Holds):
        verdict = _inductive(cp, safe, d)
    return verdict
