"""Property suites for the pipeline invariants.

Candidate pools are filtered through the oracle when the module loads; the
pool sizes are asserted so that a regression cannot quietly shrink them.
"""
import functools
import itertools

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from invforge.acsl import Binary, Const, Unary, Var, conjoin, evaluate, parse_invariant
from invforge.annotator import MASK_LINE, insert_mask, strip_annotations
from invforge.cminus import CompiledProgram, parse_task, run_prologue, step_body
from invforge.generation import GenerationConfig, HeuristicGenerator, ReplayGenerator
from invforge.oracle import (
    NotEstablished,
    NotInductive,
    NotUseful,
    Useful,
    Valid,
    check_useful,
    validate,
)
from invforge.pipeline import BenchmarkReport, PipelineConfig, run_task

from conftest import REPLAY, TASK_PATHS, load
from synthetic import MIXED

POOLS = {
    "count": ["x + y == n", "x <= n", "y <= n", "x >= 0", "y >= 0", "n >= 0", "n - x == y", "y + x <= n",
             "n == n", "x + y >= 0", "y + x == n ==> x <= n", "x <= n + 1"],
    "doubling": ["y == 1 << x", "x <= 6", "y >= 1", "y > 0", "x >= 0", "y <= 64", "y % 2 == 0 || x == 0",
             "y >= x + 1", "y <= 1 << x", "y >= 1 << x", "x <= 7", "y != 0"],
    "conj": ["j >= 0", "j <= n", "k >= n - j", "k + j >= n", "n >= 1", "j >= 0 && k >= 0 && j <= n && k >= n - j",
             "j <= n <= k + j", "k >= n - j - 1", "k + j >= 1", "j >= 0 ==> n >= 1"],
}
PROGRAMS = {key: load(key)[0].program for key in TASK_PATHS}


@functools.cache
def valid_pool(key):
    p = PROGRAMS[key]
    return tuple(parse_invariant(r) for r in POOLS[key] if isinstance(validate(p, r), Valid))


def all_pairs():
    return [(key, a, b) for key in sorted(POOLS) for a, b in itertools.combinations(valid_pool(key), 2)]


def test_pools_are_large_enough():
    assert {k: len(valid_pool(k)) for k in POOLS} == {"count": 11, "doubling": 12, "conj": 9}
    assert len(all_pairs()) >= 50


# -- conjunction closure --------------------------------------------------------------


def test_conjunction_closure_exhaustive():
    failures = [(k, a, b) for k, a, b in all_pairs() if validate(PROGRAMS[k], conjoin([a, b])) != Valid()]
    assert failures == []


@given(st.data())
@settings(max_examples=120, deadline=None)
def test_conjunction_closure_property(data):
    key = data.draw(st.sampled_from(sorted(POOLS)))
    pool = valid_pool(key)
    parts = data.draw(st.lists(st.sampled_from(pool), min_size=2, max_size=4))
    assert validate(PROGRAMS[key], conjoin(parts)) == Valid()


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_usefulness_is_monotone_under_strengthening(data):
    key = data.draw(st.sampled_from(sorted(POOLS)))
    p, pool = PROGRAMS[key], valid_pool(key)
    a, b = data.draw(st.sampled_from(pool)), data.draw(st.sampled_from(pool))
    if check_useful(p, a) == Useful():
        assert check_useful(p, conjoin([a, b])) == Useful()


# -- counterexample soundness ---------------------------------------------------------


def _replay(p, inv, verdict):
    """Re-execute a counterexample with the interpreter and evaluator only."""
    cp = CompiledProgram(p)
    if isinstance(verdict, NotEstablished):
        s = run_prologue(p, verdict.cex)
        assert s is not None
        assert evaluate(inv, s) is False
    elif isinstance(verdict, NotInductive):
        assert evaluate(inv, verdict.cex) is True
        assert cp.cond(verdict.cex)
        succ = step_body(p, verdict.cex)
        assert succ.as_dict() == verdict.successor
        assert evaluate(inv, succ) is False
    elif isinstance(verdict, NotUseful) and verdict.cex is not None:
        assert evaluate(inv, verdict.cex) is True
        assert not cp.cond(verdict.cex)
        assert not cp.assertion(verdict.cex)


def _lit(v):
    return Const(v) if v >= 0 else Unary("-", Const(-v))


def _atoms(names):
    var = st.sampled_from(sorted(names)).map(Var)
    term = st.one_of(var, st.builds(Binary, st.sampled_from(["+", "-"]), var, var),
                     st.builds(Binary, st.just("*"), st.integers(-3, 3).map(_lit), var))
    return st.builds(Binary, st.sampled_from(["==", "!=", "<", "<=", ">", ">="]), term,
                     st.integers(-4, 8).map(_lit))


def _predicates(names):
    return st.recursive(_atoms(names), lambda sub: st.builds(Binary, st.sampled_from(["&&", "||"]), sub, sub),
                        max_leaves=3)


SYNTHETIC = {name: parse_task(src, name) for name, src in MIXED.items()}
ALL_PROGRAMS = {**PROGRAMS, **SYNTHETIC}


@given(st.data())
@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_counterexamples_replay(data):
    key = data.draw(st.sampled_from(sorted(ALL_PROGRAMS)))
    p = ALL_PROGRAMS[key]
    inv = data.draw(_predicates(p.loop_vars))
    _replay(p, inv, validate(p, inv))
    _replay(p, inv, check_useful(p, inv))


def _fixture_reports():
    cfg = PipelineConfig(generation=GenerationConfig(samples_k=1))
    heuristic = HeuristicGenerator(["copy_assertion", "weaken_condition"])
    reports = [(path.read_text(), run_task(path.read_text(), g, cfg, path.stem, path.parent.name))
               for path in TASK_PATHS.values() for g in (heuristic, ReplayGenerator(REPLAY))]
    reports += [(src, run_task(src, heuristic, cfg, name)) for name, src in MIXED.items()]
    return reports


FIXTURE_REPORTS = _fixture_reports()


def test_every_fixture_failure_replays():
    replayed = 0
    for src, report in FIXTURE_REPORTS:
        p = parse_task(strip_annotations(src)[0])
        for c in report.candidates:
            if hasattr(c.verdict, "cex") and c.verdict.cex is not None:
                _replay(p, c.candidate.text.parsed, c.verdict)
                replayed += 1
        if isinstance(report.usefulness, NotUseful) and report.conjoined_invariant:
            _replay(p, parse_invariant(report.conjoined_invariant), report.usefulness)
            replayed += 1
    assert replayed >= 15


# -- usefulness definition and report consistency -------------------------------------


def test_usefulness_definition_on_synthetic_corpus():
    reports = [r for _, r in FIXTURE_REPORTS]
    assert len(MIXED) >= 20
    for r in reports:
        assert r.useful == (r.verified_with_invariant and not r.verified_without_invariant)
    # the corpus exercises both sides of the definition
    assert any(r.useful for r in reports)
    assert any(r.verified_with_invariant and r.verified_without_invariant for r in reports)
    assert any(not r.verified_with_invariant for r in reports)


def test_report_columns_are_ordered():
    reports = [r for _, r in FIXTURE_REPORTS]
    b = BenchmarkReport.from_reports(reports)
    for row in [*b.rows.values(), b.totals]:
        assert row.useful_gpt <= row.verified_gpt <= row.val_invs <= row.total
        assert row.useful_human <= row.verified_human <= row.val_invs
    assert b.totals.total == len(reports)


def test_rounds_never_exceed_budget():
    for budget in (0, 1, 2):
        cfg = PipelineConfig(generation=GenerationConfig(samples_k=1, max_feedback_rounds=budget))
        for path in TASK_PATHS.values():
            r = run_task(path.read_text(), ReplayGenerator(REPLAY), cfg, path.stem, path.parent.name)
            assert 0 <= r.rounds_used <= budget


@given(st.sampled_from(sorted(MIXED)))
@settings(max_examples=25, deadline=None)
def test_exactly_one_placeholder(name):
    p = SYNTHETIC[name]
    assert insert_mask(MIXED[name], p).masked_source.count(MASK_LINE) == 1
