"""Subprocess adapters for external validators/verifiers and witness export.

Supported tools, each discovered on PATH unless a path is configured:

* ``frama-c`` with the WP plugin, for validity (loop-invariant goals only)
  and for verification (all goals of a harness where the assertion function
  carries a ``requires cond != 0`` contract);
* a CPAchecker launcher (``cpa.sh``) running k-induction on a task plus an
  exported GraphML correctness witness.

Tool output is classified with a per-tool pattern table. Output that matches
no pattern is a ``ToolError`` rather than a guess. Every run leaves its log
on disk and :func:`classify_log` on that log reproduces the outcome.
"""

from __future__ import annotations

import contextlib
import enum
import functools
import hashlib
import os
import re
import resource
import shutil
import signal
import subprocess
import tempfile
import threading
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .acsl import Binary, Expr, Unary, to_c
from .annotator import AnnotatedTask, annotation_line
from .cminus import print_program
from .errors import ToolError, ToolNotFound, UnsupportedExpr

VALIDITY_TIMEOUT = 10.0
VERIFY_TIMEOUT = 900.0
TIMEOUT_MARKER = "invforge: wall-clock limit reached"

GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"
_C_OPS = frozenset("+ - * / % << >> < <= > >= == != && || ! ~ ==>".split())


class Outcome(enum.Enum):
    PROVED = "Proved"
    NOT_PROVED = "NotProved"
    TOOL_ERROR = "ToolError"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class ToolConfig:
    frama_c: str | None = None
    cpachecker: str | None = None
    memory_limit_mb: int | None = 4096
    jobs: int = 1
    framac_options: tuple[str, ...] = ()
    kinduction_options: tuple[str, ...] = ()
    spec_file: str | None = None
    work_dir: str | None = None


@dataclass(frozen=True)
class ToolVerdict:
    tool: str
    outcome: Outcome
    wall_time: float
    raw_log_path: str
    detail: str = field(default="", compare=False)

    @property
    def proved(self) -> bool:
        return self.outcome is Outcome.PROVED

    def to_dict(self) -> dict:
        return {"tool": self.tool, "outcome": self.outcome.value, "wall_time": self.wall_time,
                "raw_log_path": self.raw_log_path, "detail": self.detail}

    @classmethod
    def from_dict(cls, d: dict) -> "ToolVerdict":
        return cls(d["tool"], Outcome(d["outcome"]), d["wall_time"], d["raw_log_path"], d.get("detail", ""))


# -- log classification --------------------------------------------------------

_WP_GOALS = re.compile(r"\[wp\] Proved goals:\s*(\d+)\s*/\s*(\d+)")

# Checked in order; the first hit wins. Tuples are (pattern, outcome, detail).
PATTERNS: dict[str, list[tuple[re.Pattern, Outcome, str]]] = {
    "frama-c": [
        (re.compile(re.escape(TIMEOUT_MARKER)), Outcome.TIMEOUT, "wall-clock limit"),
        (re.compile(r"invalid implicit conversion", re.I), Outcome.NOT_PROVED, "type error in annotation"),
        (re.compile(r"unbound (logic )?(function|variable)", re.I), Outcome.NOT_PROVED, "unbound symbol in annotation"),
        (re.compile(r"\[kernel\] User Error"), Outcome.NOT_PROVED, "annotation rejected by the kernel"),
        (re.compile(r"\[kernel\] Plug-in .* aborted"), Outcome.TOOL_ERROR, "plug-in crash"),
    ],
    "cpachecker": [
        (re.compile(re.escape(TIMEOUT_MARKER)), Outcome.TIMEOUT, "wall-clock limit"),
        (re.compile(r"Verification result: TRUE"), Outcome.PROVED, "TRUE"),
        (re.compile(r"Verification result: FALSE"), Outcome.NOT_PROVED, "FALSE"),
        (re.compile(r"Verification result: UNKNOWN"), Outcome.NOT_PROVED, "UNKNOWN"),
        (re.compile(r"Shutdown requested.*time ?limit", re.I), Outcome.TIMEOUT, "tool time limit"),
    ],
}


def classify_log(tool: str, log: str) -> tuple[Outcome, str]:
    for pattern, outcome, detail in PATTERNS[tool]:
        if pattern.search(log):
            return outcome, detail
    if tool == "frama-c":
        goals = _WP_GOALS.findall(log)
        if goals:
            proved, total = map(int, goals[-1])
            if proved == total:
                return Outcome.PROVED, f"{proved}/{total} goals"
            return Outcome.NOT_PROVED, f"{proved}/{total} goals"
    return Outcome.TOOL_ERROR, "unrecognized tool output"


# -- process control ---------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _slots(jobs: int) -> threading.BoundedSemaphore:
    return threading.BoundedSemaphore(jobs)


def _find(configured: str | None, *names: str) -> str:
    if configured:
        if shutil.which(configured) is None:
            raise ToolNotFound(configured)
        return configured
    for name in names:
        found = shutil.which(name)
        if found:
            return found
    raise ToolNotFound(" or ".join(names))


def tool_available(tool: str, cfg: ToolConfig = ToolConfig()) -> bool:
    try:
        if tool == "frama-c":
            _find(cfg.frama_c, "frama-c")
        else:
            _find(cfg.cpachecker, "cpa.sh", "cpachecker")
    except ToolNotFound:
        return False
    return True


def _limits(memory_mb: int | None):
    if memory_mb is None:
        return None

    def apply():
        limit = memory_mb * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))

    return apply


def _run(tool: str, argv: list[str], cwd: Path, log_path: Path, timeout: float,
         cfg: ToolConfig) -> ToolVerdict:
    with _slots(cfg.jobs):
        start = time.monotonic()
        try:
            proc = subprocess.Popen(argv, cwd=cwd, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
                                    start_new_session=True, preexec_fn=_limits(cfg.memory_limit_mb))
        except OSError as exc:
            raise ToolError(tool, str(exc)) from exc
        try:
            out, err = proc.communicate(timeout=timeout)
            timed_out = False
        except subprocess.TimeoutExpired:
            # wrapper scripts (cpa.sh) fork a JVM; take down the whole group
            with contextlib.suppress(ProcessLookupError):
                os.killpg(proc.pid, signal.SIGKILL)
            out, err = proc.communicate()
            timed_out = True
        wall = time.monotonic() - start
    if timed_out or wall >= timeout:
        wall = max(wall, timeout)
        err += f"\n{TIMEOUT_MARKER} ({timeout:g}s)\n"
    log_path.write_text(f"$ {' '.join(argv)}\n{out}\n--- stderr ---\n{err}", encoding="utf-8")
    outcome, detail = classify_log(tool, log_path.read_text(encoding="utf-8"))
    return ToolVerdict(tool, outcome, wall, str(log_path), detail)


def _workdir(cfg: ToolConfig, name: str) -> Path:
    base = Path(cfg.work_dir) if cfg.work_dir else None
    if base:
        base.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=f"{name}.", dir=base))


# -- Frama-C ---------------------------------------------------------------


def wp_harness(a: AnnotatedTask) -> str:
    """A normalized source where reaching a failing assertion is a WP proof obligation."""
    p = a.parent.program
    lines = print_program(p).splitlines()
    contract = "/*@ requires cond != 0; assigns \\nothing; */"
    decl = f"extern void {p.assert_func}(int cond);"
    if decl in lines:
        lines.insert(lines.index(decl), contract)
    else:
        lines[:0] = [contract, decl]
    if a.invariant is not None:
        loop_kw = re.compile(r"^(\s*)(while|for)\b")
        for i, line in enumerate(lines):
            m = loop_kw.match(line)
            if m:
                lines.insert(i, m.group(1) + annotation_line(a.invariant))
                break
    return "\n".join(lines) + "\n"


def run_validity_check(a: AnnotatedTask, timeout: float = VALIDITY_TIMEOUT,
                       cfg: ToolConfig = ToolConfig()) -> ToolVerdict:
    """Frama-C WP on the loop-invariant goals (establishment and preservation)."""
    exe = _find(cfg.frama_c, "frama-c")
    name = a.parent.program.name
    wd = _workdir(cfg, name)
    src = wd / f"{name}.annotated.c"
    src.write_text(a.source, encoding="utf-8")
    argv = [exe, "-wp", "-wp-prop=@invariant", f"-wp-timeout={max(1, int(timeout))}",
            *cfg.framac_options, src.name]
    return _run("frama-c", argv, wd, wd / f"{name}.framac-wp.log", timeout, cfg)


def run_verifier(a: AnnotatedTask, backend: str = "framac_sv", timeout: float = VERIFY_TIMEOUT,
                 cfg: ToolConfig = ToolConfig()) -> ToolVerdict:
    name = a.parent.program.name
    if backend == "framac_sv":
        exe = _find(cfg.frama_c, "frama-c")
        wd = _workdir(cfg, name)
        src = wd / f"{name}.wp.c"
        src.write_text(wp_harness(a), encoding="utf-8")
        argv = [exe, "-wp", f"-wp-timeout={max(1, int(timeout))}", *cfg.framac_options, src.name]
        return _run("frama-c", argv, wd, wd / f"{name}.framac-sv.log", timeout, cfg)
    if backend == "kinduction":
        exe = _find(cfg.cpachecker, "cpa.sh", "cpachecker")
        wd = _workdir(cfg, name)
        src = wd / f"{name}.c"
        src.write_text(a.source, encoding="utf-8")
        argv = [exe, "-kInduction", "-timelimit", f"{int(timeout)}s"]
        if a.invariant is not None:
            witness = wd / f"{name}.witness.graphml"
            witness.write_text(export_witness(a, src), encoding="utf-8")
            argv += ["-witness", witness.name]
        if cfg.spec_file:
            argv += ["-spec", cfg.spec_file]
        argv += [*cfg.kinduction_options, src.name]
        return _run("cpachecker", argv, wd, wd / f"{name}.kinduction.log", timeout, cfg)
    raise ValueError(f"unknown verifier backend {backend!r}")


def tool_versions(cfg: ToolConfig = ToolConfig()) -> dict[str, str]:
    out = {}
    for tool, configured, names, flag in (("frama-c", cfg.frama_c, ("frama-c",), "-version"),
                                          ("cpachecker", cfg.cpachecker, ("cpa.sh", "cpachecker"), "-version")):
        try:
            exe = _find(configured, *names)
            res = subprocess.run([exe, flag], capture_output=True, text=True, timeout=30)
            out[tool] = (res.stdout or res.stderr).strip().splitlines()[0] if (res.stdout or res.stderr) else "?"
        except (ToolNotFound, OSError, subprocess.TimeoutExpired, IndexError):
            continue
    return out


# -- witnesses ---------------------------------------------------------------------

_NODE_KEYS = [("entry", "isEntryNode", "boolean", "false"),
              ("sink", "isSinkNode", "boolean", "false"),
              ("invariant", "invariant", "string", None),
              ("invariant.scope", "invariant.scope", "string", None)]
_EDGE_KEYS = [("startline", "startline", "int"), ("endline", "endline", "int"),
              ("enterLoopHead", "enterLoopHead", "boolean")]
_GRAPH_KEYS = ["witness-type", "sourcecodelang", "producer", "specification", "programfile",
               "programhash", "architecture", "creationtime"]
SPECIFICATION = "CHECK( init(main()), LTL(G ! call(reach_error())) )"


def _check_c_spelling(e: Expr):
    if isinstance(e, (Unary, Binary)):
        if e.op not in _C_OPS:
            raise UnsupportedExpr(f"operator {e.op!r} has no C spelling")
        for child in ((e.operand,) if isinstance(e, Unary) else (e.left, e.right)):
            _check_c_spelling(child)


def export_witness(a: AnnotatedTask, program_file: str | os.PathLike | None = None,
                   creation_time: str | None = None) -> str:
    """GraphML correctness witness (format 1.0) with the invariant at the loop head.

    The automaton has an entry node and one loop-head node joined by an edge
    entering the loop head at the ``while`` line. See docs/witness_format.md.
    """
    if a.invariant is None:
        raise UnsupportedExpr("cannot export a witness without an invariant")
    _check_c_spelling(a.invariant)
    p = a.parent.program
    ET.register_namespace("", GRAPHML_NS)
    root = ET.Element(f"{{{GRAPHML_NS}}}graphml")
    for key, name, typ, default in _NODE_KEYS:
        k = ET.SubElement(root, f"{{{GRAPHML_NS}}}key", {"id": key, "attr.name": name,
                                                          "attr.type": typ, "for": "node"})
        if default is not None:
            ET.SubElement(k, f"{{{GRAPHML_NS}}}default").text = default
    for key, name, typ in _EDGE_KEYS:
        ET.SubElement(root, f"{{{GRAPHML_NS}}}key", {"id": key, "attr.name": name,
                                                      "attr.type": typ, "for": "edge"})
    for key in _GRAPH_KEYS:
        ET.SubElement(root, f"{{{GRAPHML_NS}}}key", {"id": key, "attr.name": key,
                                                      "attr.type": "string", "for": "graph"})
    graph = ET.SubElement(root, f"{{{GRAPHML_NS}}}graph", {"edgedefault": "directed"})

    def data(parent, key, text):
        ET.SubElement(parent, f"{{{GRAPHML_NS}}}data", {"key": key}).text = text

    source_bytes = a.source.encode("utf-8")
    created = creation_time or datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    for key, value in (("witness-type", "correctness_witness"), ("sourcecodelang", "C"),
                       ("producer", "invforge"), ("specification", SPECIFICATION),
                       ("programfile", str(program_file or f"{p.name}.c")),
                       ("programhash", hashlib.sha256(source_bytes).hexdigest()),
                       ("architecture", "32bit"), ("creationtime", created)):
        data(graph, key, value)
    entry = ET.SubElement(graph, f"{{{GRAPHML_NS}}}node", {"id": "N0"})
    data(entry, "entry", "true")
    head = ET.SubElement(graph, f"{{{GRAPHML_NS}}}node", {"id": "N1"})
    data(head, "invariant", to_c(a.invariant))
    data(head, "invariant.scope", p.function)
    line = _loop_line(a)
    edge = ET.SubElement(graph, f"{{{GRAPHML_NS}}}edge", {"source": "N0", "target": "N1"})
    data(edge, "startline", str(line))
    data(edge, "endline", str(line))
    data(edge, "enterLoopHead", "true")
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _loop_line(a: AnnotatedTask) -> int:
    """Line of the loop header in ``a.source`` (the line after the annotation)."""
    if a.invariant is None:
        return a.parent.site.line
    marker = annotation_line(a.invariant)
    for i, line in enumerate(a.source.splitlines(), 1):
        if line.strip() == marker:
            return i + 1
    return a.parent.loop_line


def validate_witness(text: str) -> list[str]:
    """Structural schema check; returns a list of problems (empty when well-formed)."""
    problems = []
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        return [f"not XML: {exc}"]
    ns = {"g": GRAPHML_NS}
    if root.tag != f"{{{GRAPHML_NS}}}graphml":
        problems.append("root element is not graphml")
    declared = {k.get("id"): k.get("for") for k in root.findall("g:key", ns)}
    graphs = root.findall("g:graph", ns)
    if len(graphs) != 1:
        return problems + ["expected exactly one graph"]
    graph = graphs[0]
    meta = {d.get("key"): d.text for d in graph.findall("g:data", ns)}
    for key in _GRAPH_KEYS:
        if key not in meta:
            problems.append(f"missing graph data {key}")
    if meta.get("witness-type") != "correctness_witness":
        problems.append("witness-type is not correctness_witness")
    nodes = {n.get("id"): {d.get("key"): d.text for d in n.findall("g:data", ns)}
             for n in graph.findall("g:node", ns)}
    for n in graph.iter():
        if n.tag == f"{{{GRAPHML_NS}}}data":
            key = n.get("key")
            if key not in declared:
                problems.append(f"undeclared data key {key}")
    entries = [i for i, d in nodes.items() if d.get("entry") == "true"]
    if len(entries) != 1:
        problems.append("expected exactly one entry node")
    with_inv = [i for i, d in nodes.items() if d.get("invariant")]
    if len(with_inv) != 1:
        problems.append("expected exactly one node carrying an invariant")
    for e in graph.findall("g:edge", ns):
        if e.get("source") not in nodes or e.get("target") not in nodes:
            problems.append("edge references an unknown node")
        ed = {d.get("key"): d.text for d in e.findall("g:data", ns)}
        if e.get("target") in with_inv and ed.get("enterLoopHead") != "true":
            problems.append("edge into the invariant node does not enter the loop head")
    return problems


def invariant_of_witness(text: str) -> str:
    root = ET.fromstring(text)
    for d in root.iter(f"{{{GRAPHML_NS}}}data"):
        if d.get("key") == "invariant":
            return d.text or ""
    raise UnsupportedExpr("witness has no invariant")


__all__ = [
    "Outcome", "ToolConfig", "ToolVerdict", "PATTERNS", "classify_log", "tool_available",
    "run_validity_check", "run_verifier", "export_witness", "validate_witness", "wp_harness",
    "tool_versions", "invariant_of_witness",
]
