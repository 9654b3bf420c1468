import pytest
from hypothesis import given
from hypothesis import strategies as st

from invforge.acsl import conjoin, parse_invariant
from invforge.annotator import (
    MASK_LINE,
    baseline,
    insert_mask,
    instantiate,
    strip_annotations,
)
from invforge.cminus import parse_task
from invforge.errors import AlreadyMasked, ScopeError

from conftest import COUNT_SHORT, TASK_PATHS, load


def test_strip_extracts_human_invariant():
    source = TASK_PATHS["count"].read_text()
    stripped, human = strip_annotations(source)
    assert human == ["x + y == n"]
    assert "loop invariant" not in stripped
    assert source.replace("  //@ loop invariant x + y == n;\n", "") == stripped


def test_strip_without_annotations_is_identity():
    assert strip_annotations(COUNT_SHORT) == (COUNT_SHORT, [])


def test_strip_two_annotations():
    src = COUNT_SHORT.replace("  while", "  //@ loop invariant x <= n;\n  //@ loop invariant y <= n ;\n  while")
    stripped, human = strip_annotations(src)
    assert stripped == COUNT_SHORT
    assert human == ["x <= n", "y <= n"]


def test_insert_mask_position_and_indent():
    p = parse_task(COUNT_SHORT)
    m = insert_mask(COUNT_SHORT, p)
    lines = m.masked_source.splitlines()
    assert lines[m.site.line - 1] == "  " + MASK_LINE
    assert lines[m.loop_line - 1].startswith("  while")
    assert m.masked_source.count(MASK_LINE) == 1


def test_insert_mask_twice_fails():
    m = insert_mask(COUNT_SHORT, parse_task(COUNT_SHORT))
    with pytest.raises(AlreadyMasked):
        insert_mask(m.masked_source, m.program)


def test_instantiate_count():
    m = insert_mask(COUNT_SHORT, parse_task(COUNT_SHORT))
    a = instantiate(m, parse_invariant("x+y==n"))
    assert "//@ loop invariant ((x + y) == n);" in a.source
    assert a.source == m.masked_source.replace(MASK_LINE, "//@ loop invariant ((x + y) == n);")


def test_instantiate_conjunction_is_one_line(conj):
    inv = parse_invariant("j >= 0 && k >= 0 && j <= n && k >= n - j")
    a = instantiate(conj, inv)
    annotation = [line for line in a.source.splitlines() if "loop invariant" in line]
    assert annotation == ["  //@ loop invariant ((((j >= 0) && (k >= 0)) && (j <= n)) && (k >= (n - j)));"]


def test_instantiate_out_of_scope():
    m = insert_mask(COUNT_SHORT, parse_task(COUNT_SHORT))
    with pytest.raises(ScopeError) as exc:
        instantiate(m, parse_invariant("m > 0 && x >= 0"))
    assert exc.value.names == {"m"}


def test_baseline_removes_placeholder(count):
    assert baseline(count).source == count.original_source
    assert baseline(count).invariant is None


def test_round_trip_on_corpus(corpus_task):
    m = corpus_task
    inv = conjoin([parse_invariant(f"{v} == {v}") for v in m.program.loop_vars])
    stripped = strip_annotations(m.original_source)[0]
    assert strip_annotations(instantiate(m, inv).source)[0] == stripped
    assert m.masked_source.count(MASK_LINE) == 1


@given(st.lists(st.sampled_from(["x <= n", "y >= 0", "x + y == n", "n >= 0"]), min_size=0, max_size=3),
       st.sampled_from(["", "    ", "\t"]))
def test_strip_mask_instantiate_strip(annotations, indent):
    src = COUNT_SHORT.replace("  while(x>0)", indent + "while(x>0)")
    lines = [f"{indent}//@ loop invariant {a};\n" for a in annotations]
    annotated = src.replace(indent + "while(x>0)", "".join(lines) + indent + "while(x>0)")
    stripped, human = strip_annotations(annotated)
    assert stripped == src
    assert human == annotations
    m = insert_mask(stripped, parse_task(stripped))
    assert m.masked_source.splitlines()[m.site.line - 1] == indent + MASK_LINE
    again = strip_annotations(instantiate(m, parse_invariant("x + y == n")).source)[0]
    assert again == stripped


def test_load_helper_matches_corpus():
    for key in TASK_PATHS:
        m, _ = load(key)
        assert m.program.name == TASK_PATHS[key].stem
