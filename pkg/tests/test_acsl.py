import operator
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invforge.acsl import (
    Binary,
    Const,
    InvariantText,
    Undefined,
    Unary,
    Var,
    conjoin,
    evaluate,
    free_vars,
    parse_invariant,
    print_invariant,
    to_c,
)
from invforge.cminus import CType, State
from invforge.errors import ParseError, UnboundVariable, UnsupportedSymbol

x, y, n, j, k = (Var(v) for v in "xynjk")


def test_parse_count_invariant():
    assert parse_invariant("x + y == n") == Binary("==", Binary("+", x, y), n)


def test_pow_is_unsupported():
    with pytest.raises(UnsupportedSymbol) as exc:
        parse_invariant("x <= 6 && y == pow(2, x)")
    assert exc.value.name == "pow"


def test_chained_comparison_desugars():
    assert parse_invariant("j <= n <= k + j") == Binary(
        "&&", Binary("<=", j, n), Binary("<=", n, Binary("+", k, j)))


def test_chained_comparison_is_left_to_right():
    a, b, c, d = (Var(v) for v in "abcd")
    assert parse_invariant("a < b <= c < d") == Binary(
        "&&", Binary("&&", Binary("<", a, b), Binary("<=", b, c)), Binary("<", c, d))


def test_implication_binds_loosest_and_associates_right():
    e = parse_invariant("x > 0 || y > 0 ==> n > 0 ==> k > 0")
    assert e.op == "==>"
    assert e.left.op == "||"
    assert e.right.op == "==>"


@pytest.mark.parametrize("raw, symbol", [
    ("\\at(x, Pre) == x", "\\at"),
    ("\\forall integer i; i >= 0", "\\forall"),
    ("a[0] == 1", "["),
    ("x == (int) y", "cast to int"),
])
def test_unsupported_symbols(raw, symbol):
    with pytest.raises(UnsupportedSymbol) as exc:
        parse_invariant(raw)
    assert exc.value.name == symbol


@pytest.mark.parametrize("raw", ["", "x +", "(x == 1", "x == 1)", "x y"])
def test_parse_errors(raw):
    with pytest.raises(ParseError):
        parse_invariant(raw)


def test_logic_constants():
    assert parse_invariant("\\true") == Const(1)
    assert parse_invariant("\\false || x") == Binary("||", Const(0), x)


@pytest.mark.parametrize("e, text", [
    (Binary("==", Binary("+", x, y), n), "((x + y) == n)"),
    (Binary("&&", Var("a"), Var("b")), "(a && b)"),
    (Binary("<<", Const(1), x), "(1 << x)"),
    (Unary("-", Const(3)), "(-3)"),
])
def test_canonical_printing(e, text):
    assert print_invariant(e) == text


def test_to_c_rewrites_implication():
    e = parse_invariant("j <= n ==> k >= n - j")
    assert to_c(e) == "(!(j <= n)) || (k >= n - j)"


def test_to_c_minimal_parentheses_keep_meaning():
    for raw in ("x + y == n", "y == 1 << x", "a - (b - c) == 0", "x * (y + 1) > 2", "-(-x) == x"):
        e = parse_invariant(raw)
        assert parse_invariant(to_c(e)) == e


def test_conjoin():
    a, b, c = parse_invariant("j >= 0"), parse_invariant("k >= 0"), parse_invariant("n > 0")
    assert conjoin([a]) is a
    assert conjoin([a, b]) == Binary("&&", a, b)
    assert conjoin([a, b, c]) == Binary("&&", a, Binary("&&", b, c))
    with pytest.raises(ValueError):
        conjoin([])


@pytest.mark.parametrize("raw, names", [
    ("x + y == n", {"x", "y", "n"}),
    ("1 == 1", set()),
    ("(j <= n) ==> (k >= n - j)", {"j", "n", "k"}),
])
def test_free_vars(raw, names):
    assert free_vars(parse_invariant(raw)) == names


def test_evaluate():
    assert evaluate(parse_invariant("x + y == n"), {"x": 2, "y": 1, "n": 3}) is True
    assert evaluate(parse_invariant("x + y == n"), {"x": 2, "y": 2, "n": 3}) is False
    assert evaluate(parse_invariant("0 ==> 1 / 0 == 1"), {}) is True


def test_evaluate_undefined():
    r = evaluate(parse_invariant("1 / x == 1"), {"x": 0})
    assert isinstance(r, Undefined)
    assert "zero" in r.reason
    assert isinstance(evaluate(parse_invariant("1 << x == 0"), {"x": -1}), Undefined)


def test_evaluate_unbound():
    with pytest.raises(UnboundVariable):
        evaluate(parse_invariant("z == 1"), {"x": 0})


def test_unsigned_lifting_of_max_value():
    s = State({"k": 2**32 - 1}, {"k": CType.U32})
    assert evaluate(parse_invariant("k >= 0"), s) is True
    assert evaluate(parse_invariant("k == 4294967295"), s) is True


def test_evaluation_is_over_mathematical_integers():
    s = State({"x": 2**31 - 1}, {"x": CType.I32})
    assert evaluate(parse_invariant("x + 1 > x"), s) is True


def test_truncated_division_and_modulo():
    assert evaluate(parse_invariant("-7 / 2 == -3 && -7 % 2 == -1 && 7 % -2 == 1"), {}) is True


def test_invariant_text():
    ok = InvariantText.from_raw("y + x == n")
    assert ok.parsed is not None and ok.canonical == "((y + x) == n)"
    bad = InvariantText.from_raw("y == pow(2, x)")
    assert bad.parsed is None and bad.symbol == "pow"
    garbage = InvariantText.from_raw("x ==")
    assert garbage.parsed is None and garbage.symbol is None and garbage.error


# -- reference evaluator: oracle for unsigned/signed lifting -----------------------

_REF_OPS = {
    "+": operator.add, "-": operator.sub, "*": operator.mul,
    "==": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le,
    ">": operator.gt, ">=": operator.ge,
}


def _ref_div(a, b):
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _ref_eval(e, env):
    """Independent big-integer evaluator (no shared code with the library)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Unary):
        v = _ref_eval(e.operand, env)
        return -v if e.op == "-" else int(not v)
    a, b = _ref_eval(e.left, env), _ref_eval(e.right, env)
    if e.op == "&&":
        return int(bool(a) and bool(b))
    if e.op == "||":
        return int(bool(a) or bool(b))
    if e.op == "/":
        return _ref_div(a, b)
    if e.op == "%":
        return a - b * _ref_div(a, b)
    return int(_REF_OPS[e.op](a, b))


_LIFT_EXPRS = [
    "k >= 0", "k + j > n", "k - j < n * 2", "k / 3 == j % 5 + 1", "k * j - n != 7",
    "k <= 4294967295 && j >= -2147483648", "-k < j || n == 0", "(k + j) / 2 >= n - 1",
]


def test_lifting_matches_reference_on_random_states():
    rng = random.Random(20230701)
    types = {"k": CType.U32, "j": CType.I32, "n": CType.I32}
    exprs = [parse_invariant(r) for r in _LIFT_EXPRS]
    for _ in range(1000):
        raw = {"k": rng.randrange(2**32), "j": rng.randrange(-(2**31), 2**31),
               "n": rng.choice([rng.randrange(-(2**31), 2**31), rng.randrange(1, 10)])}
        s = State(raw, types)
        assert 0 <= s["k"] <= 2**32 - 1
        assert -(2**31) <= s["j"] <= 2**31 - 1
        for e in exprs:
            assert evaluate(e, s) is bool(_ref_eval(e, raw))


# -- properties ---------------------------------------------------------------------

_names = st.sampled_from(["x", "y", "n", "j", "k"])
_leaves = st.one_of(st.builds(Var, _names), st.builds(Const, st.integers(0, 2**33)))
_BIN = ["+", "-", "*", "/", "%", "<<", ">>", "==", "!=", "<", "<=", ">", ">=", "&&", "||", "==>"]
exprs = st.recursive(
    _leaves,
    lambda sub: st.one_of(
        st.builds(Unary, st.sampled_from(["-", "!"]), sub),
        st.builds(Binary, st.sampled_from(_BIN), sub, sub),
    ),
    max_leaves=12,
)


@given(exprs)
@settings(max_examples=300)
def test_print_parse_round_trip(e):
    assert parse_invariant(print_invariant(e)) == e


_c_exprs = st.recursive(
    _leaves,
    lambda sub: st.one_of(
        st.builds(Unary, st.sampled_from(["-", "!"]), sub),
        st.builds(Binary, st.sampled_from(_BIN[:-1]), sub, sub),
    ),
    max_leaves=10,
)


@given(_c_exprs)
@settings(max_examples=300)
def test_to_c_round_trip(e):
    assert parse_invariant(to_c(e)) == e


_small = st.integers(-20, 20)
_cmp = st.builds(Binary, st.sampled_from(["==", "!=", "<", "<=", ">", ">="]),
                 st.builds(Binary, st.sampled_from(["+", "-", "*"]), _leaves, _leaves), _leaves)


@given(_cmp, _cmp, st.fixed_dictionaries({v: _small for v in "xynjk"}))
def test_conjunction_is_monotone(a, b, env):
    ra, rb = evaluate(a, env), evaluate(b, env)
    assert evaluate(conjoin([a, b]), env) is (ra and rb)


@given(st.integers(0, 2**32 - 1), st.integers(-(2**31), 2**31 - 1))
def test_lifting_ranges(u, i):
    s = State({"u": u, "i": i}, {"u": CType.U32, "i": CType.I32})
    assert 0 <= s["u"] <= 2**32 - 1
    assert -(2**31) <= s["i"] <= 2**31 - 1
