import itertools
import time

import pytest

from invforge.acsl import InvariantText, parse_invariant
from invforge.cminus import parse_task
from invforge.generation import InvariantCandidate
from invforge.oracle import (
    DomainConfig,
    Holds,
    NotEstablished,
    NotInductive,
    NotUseful,
    ParseFailed,
    UndefinedSemantics,
    Unknown,
    Unsupported,
    Useful,
    Valid,
    check_established,
    check_inductive,
    check_useful,
    validate,
    verdict_from_dict,
    verify,
)

from conftest import COUNT_SHORT, DOUBLING_SHORT, CONJ_SHORT

P1, P2, P3 = (parse_task(s) for s in (COUNT_SHORT, DOUBLING_SHORT, CONJ_SHORT))
CONJ_INV = "j >= 0 && k >= 0 && j <= n && k >= n - j"
inv = parse_invariant


# -- independent brute force over the corpus programs, written without the library --

def _count_entry(n):
    return {"n": n, "x": n, "y": 0}


def _conj_step(s):
    return {"k": s["k"] - 1, "j": s["j"] + 1, "n": s["n"]}


def test_reference_count_y_eq_n_first_failure_is_n1():
    failing = [n for n in range(0, 17) if _count_entry(n)["y"] != n]
    assert failing[0] == 1


def _documented_order(values):
    # smallest L1 norm first, then fewest negatives, then larger magnitudes in
    # earlier-declared variables, then non-negative before negative
    return (sum(map(abs, values)), sum(v < 0 for v in values),
            tuple(-abs(v) for v in values), tuple(v < 0 for v in values))


def test_reference_count_x_le_n_first_exit_violation():
    # declaration order n, x, y; exit means x == 0 for unsigned x
    rng = range(0, 17)
    bad = [(n, x, y) for n, x, y in itertools.product(rng, rng, rng) if x <= n and not x > 0 and y != n]
    assert min(bad, key=_documented_order) == (1, 0, 0)


def test_reference_conj_k_ge_0_first_violation():
    # declaration order k, j, n
    rng = range(-8, 9)
    bad = []
    for k, j, n in itertools.product(rng, rng, rng):
        s = {"k": k, "j": j, "n": n}
        if k >= 0 and j <= n - 1 and _conj_step(s)["k"] < 0:
            bad.append((k, j, n))
    assert min(bad, key=_documented_order) == (0, 0, 1)


# -- frozen values from the reference above ------------------------------------------

def test_count_established_examples():
    assert check_established(P1, inv("x+y==n")) == Holds()
    assert check_established(P1, inv("y == n")) == NotEstablished({"n": 1})
    assert check_established(P1, inv("1==1")) == Holds()


def test_count_inductive():
    assert check_inductive(P1, inv("x+y==n")) == Holds()


def test_conj_inductive_examples():
    v = check_inductive(P3, inv("k >= 0"))
    assert v == NotInductive({"k": 0, "j": 0, "n": 1}, {"k": -1, "j": 1, "n": 1})
    assert check_inductive(P3, inv(CONJ_INV)) == Holds()


def test_validate_examples():
    assert validate(P2, InvariantText.from_raw("x <= 6 && y == pow(2, x)")) == Unsupported(
        "pow", "unsupported symbol: pow")
    assert validate(P2, "y == 1 << x") == Valid()
    assert validate(P1, "x+y==n") == Valid()
    assert isinstance(validate(P1, "x + "), ParseFailed)


def test_validate_accepts_candidates():
    c = InvariantCandidate(InvariantText.from_raw("x + y == n"), "test", 0)
    assert validate(P1, c) == Valid()


def test_validate_checks_established_first():
    # fails both checks; the establishment failure wins
    assert isinstance(validate(P1, "y == n && x == 0"), NotEstablished)


def test_validate_out_of_scope():
    v = validate(P1, "m == 0")
    assert isinstance(v, Unsupported) and v.symbol == "m"


def test_usefulness_examples():
    assert check_useful(P1, inv("x+y==n")) == Useful()
    assert check_useful(P1, inv("x <= n")) == NotUseful({"x": 0, "y": 0, "n": 1})
    assert check_useful(P3, inv(CONJ_INV)) == Useful()


def test_undefined_semantics():
    v = validate(P1, "n / x >= 0")
    assert isinstance(v, UndefinedSemantics)
    assert "zero" in v.reason


def test_division_by_zero_in_body_is_undefined_semantics():
    p = parse_task("void f(int n){ int x = n; while (x > 0) { x = 8 / (x - 1); } assert(x <= 0); }")
    v = validate(p, "1 == 1")
    assert isinstance(v, UndefinedSemantics)
    assert v.state == {"n": 0, "x": 1}


def test_budget_exhaustion_is_unknown():
    d = DomainConfig(max_states=100)
    assert validate(P1, "x + y == n", d) == Unknown("budget")


def test_domain_config_rejects_bad_ranges():
    with pytest.raises(ValueError):
        DomainConfig(nondet_range_signed=(3, 1))
    with pytest.raises(ValueError):
        DomainConfig(state_range_unsigned=(-1, 4))


def test_verify_with_and_without():
    assert verify(P1, inv("x+y==n")) == Holds()
    assert isinstance(verify(P1), NotInductive)
    assert verify(P3, inv(CONJ_INV)) == Holds()
    assert isinstance(verify(P3), NotInductive)
    trivial = parse_task("void f(unsigned int n){ unsigned int x = n; while (x > 0) x--; assert(x == 0); }")
    assert verify(trivial) == Holds()


def test_failures_survive_larger_domains():
    big = DomainConfig(nondet_range_unsigned=(0, 40), nondet_range_signed=(-20, 20),
                       state_range_unsigned=(0, 40), state_range_signed=(-20, 20))
    assert isinstance(validate(P1, "y == n", big), NotEstablished)
    assert isinstance(validate(P3, "k >= 0", big), NotInductive)


def test_verdict_serialization_round_trip():
    for v in (Valid(), Holds(), Useful(), Unknown("budget"), NotUseful(None), NotUseful({"x": 0}),
              NotEstablished({"n": 1}), NotInductive({"k": 0}, {"k": -1}), Unsupported("pow", "d"),
              ParseFailed("bad"), UndefinedSemantics({"x": 0}, "division by zero")):
        assert verdict_from_dict(v.to_dict()) == v


def test_count_runtime_is_small():
    t = time.perf_counter()
    validate(P1, "y + x == n")
    check_useful(P1, inv("y + x == n"))
    assert time.perf_counter() - t < 1.0
