from pathlib import Path

import pytest

from invforge.annotator import insert_mask, strip_annotations
from invforge.cminus import parse_task

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "corpus"
REPLAY = FIXTURES / "replay"
GOLDEN_PROMPT = FIXTURES / "golden_prompt_count_up_down-1.txt"

TASK_PATHS = {
    "count": CORPUS / "loops" / "count_up_down-1.c",
    "doubling": CORPUS / "loop-acceleration" / "underapprox_1-2.c",
    "conj": CORPUS / "loop-zilu" / "benchmark04_conjunctive.c",
}

# The three corpus programs in short form, without the verification harness.
COUNT_SHORT = """void func(unsigned int n)
{
  unsigned int x=n, y=0;
  while(x>0) {
    x--; y++;
  }
  assert(y==n);
}
"""
DOUBLING_SHORT = """void func() {
  unsigned int x = 0, y = 1;
  while (x < 6) { x++; y *= 2; }
  assert(y % 3);
}
"""
CONJ_SHORT = """void func(int k, int j, int n) {
  if (!(n>=1 && k>=n && j==0)) return;
  while (j<=n-1) { j++; k--; }
  assert(k>=0);
}
"""


def load(key: str):
    """(masked task, human invariant texts) for a corpus task."""
    path = TASK_PATHS[key]
    stripped, human = strip_annotations(path.read_text(encoding="utf-8"))
    program = parse_task(stripped, path.stem, path.parent.name)
    return insert_mask(stripped, program), human


@pytest.fixture(params=sorted(TASK_PATHS))
def corpus_task(request):
    return load(request.param)[0]


@pytest.fixture
def count():
    return load("count")[0]


@pytest.fixture
def doubling():
    return load("doubling")[0]


@pytest.fixture
def conj():
    return load("conj")[0]


# -- acceptance summary --------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    number, text = marker.args
    status = "SKIP" if rep.skipped else "PASS" if rep.passed else "FAIL"
    if _CRITERIA.get(number, ("PASS",))[0] != "FAIL":
        _CRITERIA[number] = (status, text)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        status, text = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {text}")
