"""Per-task cooperative loop, benchmark aggregation and run persistence."""

from __future__ import annotations

import concurrent.futures as cf
import csv
import io
import json
import logging
from dataclasses import asdict, astuple, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

import yaml

from . import adapters
from .acsl import Expr, InvariantText, conjoin, print_invariant
from .annotator import MaskedTask, baseline, insert_mask, instantiate, strip_annotations
from .cminus import Program, parse_task
from .errors import (
    GenerationFailed,
    InvforgeError,
    NoTasks,
    SchemaVersionMismatch,
    TruncatedRecord,
)
from .generation import (
    GenerationConfig,
    Generator,
    InvariantCandidate,
    build_feedback_prompt,
    build_prompt,
    candidates_from_responses,
)
from .oracle import (
    DomainConfig,
    Holds,
    NotUseful,
    Unknown,
    Unsupported,
    Valid,
    Verdict,
    check_useful,
    validate,
    verdict_from_dict,
    verify,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TASK_SUFFIXES = (".c", ".i")


@dataclass(frozen=True)
class PipelineConfig:
    generation: GenerationConfig = GenerationConfig()
    domain: DomainConfig = DomainConfig()
    validator: str = "oracle"  # oracle | framac
    verifier: str = "oracle"  # oracle | framac_sv | kinduction
    compare_human: bool = False
    require_annotation: bool = False
    jobs: int = 1
    validity_timeout: float = adapters.VALIDITY_TIMEOUT
    verify_timeout: float = adapters.VERIFY_TIMEOUT
    tools: adapters.ToolConfig = adapters.ToolConfig()
    artifacts_dir: str | None = None

    def __post_init__(self):
        if self.validator not in ("oracle", "framac"):
            raise ValueError(f"unknown validator {self.validator!r}")
        if self.verifier not in ("oracle", "framac_sv", "kinduction"):
            raise ValueError(f"unknown verifier {self.verifier!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "generation": asdict(self.generation),
            "domain": self.domain.to_dict(),
            "validator": self.validator,
            "verifier": self.verifier,
            "compare_human": self.compare_human,
            "require_annotation": self.require_annotation,
            "jobs": self.jobs,
            "validity_timeout": self.validity_timeout,
            "verify_timeout": self.verify_timeout,
            "tools": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.tools).items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        tools = {k: tuple(v) if isinstance(v, list) else v for k, v in d.get("tools", {}).items()}
        return cls(
            generation=GenerationConfig(**d.get("generation", {})),
            domain=DomainConfig.from_dict(d.get("domain", {})),
            validator=d.get("validator", "oracle"),
            verifier=d.get("verifier", "oracle"),
            compare_human=d.get("compare_human", False),
            require_annotation=d.get("require_annotation", False),
            jobs=d.get("jobs", 1),
            validity_timeout=d.get("validity_timeout", adapters.VALIDITY_TIMEOUT),
            verify_timeout=d.get("verify_timeout", adapters.VERIFY_TIMEOUT),
            tools=adapters.ToolConfig(**tools),
        )


# -- reports ---------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateResult:
    candidate: InvariantCandidate
    verdict: Verdict

    def to_dict(self) -> dict:
        return {"candidate": self.candidate.to_dict(), "verdict": self.verdict.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateResult":
        return cls(InvariantCandidate.from_dict(d["candidate"]), verdict_from_dict(d["verdict"]))


@dataclass(frozen=True)
class HumanResult:
    invariant: str
    validated: bool
    verified_with_invariant: bool
    verified_without_invariant: bool
    verdict: Verdict

    @property
    def useful(self) -> bool:
        return self.verified_with_invariant and not self.verified_without_invariant

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.to_dict()
        d["useful"] = self.useful
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HumanResult":
        return cls(d["invariant"], d["validated"], d["verified_with_invariant"],
                   d["verified_without_invariant"], verdict_from_dict(d["verdict"]))


@dataclass(frozen=True)
class TaskReport:
    task: str
    subcategory: str
    candidates: tuple[CandidateResult, ...] = ()
    conjoined_invariant: str | None = None
    verified_with_invariant: bool = False
    verified_without_invariant: bool = False
    rounds_used: int = 0
    human: HumanResult | None = None
    generation_error: str | None = None
    usefulness: Verdict | None = None
    tool_runs: tuple[dict, ...] = ()
    trusted: bool = True

    @property
    def validated(self) -> bool:
        return any(isinstance(c.verdict, Valid) for c in self.candidates)

    @property
    def useful(self) -> bool:
        return self.verified_with_invariant and not self.verified_without_invariant

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "subcategory": self.subcategory,
            "candidates": [c.to_dict() for c in self.candidates],
            "conjoined_invariant": self.conjoined_invariant,
            "validated": self.validated,
            "verified_with_invariant": self.verified_with_invariant,
            "verified_without_invariant": self.verified_without_invariant,
            "useful": self.useful,
            "rounds_used": self.rounds_used,
            "human": self.human.to_dict() if self.human else None,
            "generation_error": self.generation_error,
            "usefulness": self.usefulness.to_dict() if self.usefulness else None,
            "tool_runs": list(self.tool_runs),
            "trusted": self.trusted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskReport":
        return cls(
            task=d["task"],
            subcategory=d["subcategory"],
            candidates=tuple(CandidateResult.from_dict(c) for c in d["candidates"]),
            conjoined_invariant=d["conjoined_invariant"],
            verified_with_invariant=d["verified_with_invariant"],
            verified_without_invariant=d["verified_without_invariant"],
            rounds_used=d["rounds_used"],
            human=HumanResult.from_dict(d["human"]) if d["human"] else None,
            generation_error=d["generation_error"],
            usefulness=verdict_from_dict(d["usefulness"]) if d["usefulness"] else None,
            tool_runs=tuple(d.get("tool_runs", ())),
            trusted=d.get("trusted", True),
        )


# -- validator / verifier dispatch ------------------------------------------------


class _Checker:
    """Binds one task to the configured validator and verifier."""

    def __init__(self, m: MaskedTask, cfg: PipelineConfig):
        self.m = m
        self.p: Program = m.program
        self.cfg = cfg
        self.tool_runs: list[dict] = []

    def _tool(self, kind: str, verdict: adapters.ToolVerdict, invariant: Expr | None):
        self.tool_runs.append({"kind": kind, "invariant": print_invariant(invariant) if invariant else None,
                               **verdict.to_dict()})
        return verdict

    def validate(self, c) -> Verdict:
        v = validate(self.p, c, self.cfg.domain)
        if self.cfg.validator == "oracle":
            return v
        text = getattr(c, "text", c)
        if text.parsed is None or isinstance(v, Unsupported):
            return v
        tv = adapters.run_validity_check(instantiate(self.m, text.parsed), self.cfg.validity_timeout,
                                         self.cfg.tools)
        self._tool("validity", tv, text.parsed)
        self.tool_runs[-1]["oracle"] = v.kind
        return Valid() if tv.proved else Unknown(f"frama-c: {tv.outcome.value} ({tv.detail})")

    def verify(self, inv: Expr | None) -> bool:
        if self.cfg.verifier == "oracle":
            return isinstance(verify(self.p, inv, self.cfg.domain), Holds)
        a = instantiate(self.m, inv) if inv is not None else baseline(self.m)
        tv = adapters.run_verifier(a, self.cfg.verifier, self.cfg.verify_timeout, self.cfg.tools)
        return self._tool("verify", tv, inv).proved


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def run_task(source: str, generator: Generator, cfg: PipelineConfig = PipelineConfig(),
             name: str = "task", subcategory: str = "", trusted: bool = True) -> TaskReport:
    """Strip, mask, generate, validate, conjoin, verify, and feed failures back.

    Generation errors end the loop and are recorded in the report. Parse
    errors of the task itself propagate.
    """
    stripped, human_texts = strip_annotations(source)
    program = parse_task(stripped, name, subcategory)
    m = insert_mask(stripped, program)
    checker = _Checker(m, cfg)
    gcfg = cfg.generation
    art = Path(cfg.artifacts_dir) / (subcategory or "_") if cfg.artifacts_dir else None

    results: list[CandidateResult] = []
    seen: set[str] = set()
    prompt = build_prompt(m)
    inv: Expr | None = None
    verified_with = False
    usefulness: Verdict | None = None
    generation_error = None
    rnd = 0
    while True:
        if art:
            _write(art / f"{name}.round{rnd}.prompt.txt", prompt.rendered)
        try:
            responses = generator.responses(m, prompt, rnd, gcfg)
        except GenerationFailed as exc:
            generation_error = str(exc)
            log.warning("%s: generation failed in round %d: %s", name, rnd, exc)
            break
        if art:
            for j, text in enumerate(responses):
                _write(art / f"{name}.round{rnd}.sample{j}.response.txt", text)
        cands = candidates_from_responses(responses, generator.generator_id, rnd, seen, name)
        fresh = [CandidateResult(c, checker.validate(c)) for c in cands]
        results.extend(fresh)
        valid = [r.candidate.text.parsed for r in results if isinstance(r.verdict, Valid)]
        if valid:
            inv = conjoin(valid)
            verified_with = checker.verify(inv)
            usefulness = check_useful(program, inv, cfg.domain)
            if verified_with:
                break
        if rnd >= gcfg.max_feedback_rounds:
            break
        failed = next((r for r in fresh if not isinstance(r.verdict, Valid)), None)
        if valid and failed is None:
            # outer loop: every fresh candidate was valid, but the conjunction is too weak
            conj = InvariantCandidate(InvariantText.from_raw(print_invariant(inv)), "conjunction", 0, rnd)
            verdict = usefulness if isinstance(usefulness, NotUseful) else NotUseful(None)
            prompt = build_feedback_prompt(m, conj, verdict)
        elif failed is not None:
            prompt = build_feedback_prompt(m, failed.candidate, failed.verdict)
        else:
            prompt = build_prompt(m)
        rnd += 1

    verified_without = checker.verify(None)

    human = None
    if cfg.compare_human and human_texts:
        human = _human_result(checker, human_texts, verified_without)

    if art and inv is not None:
        annotated = instantiate(m, inv)
        _write(art / f"{name}.annotated.c", annotated.source)
        _write(art / f"{name}.witness.graphml", adapters.export_witness(annotated, f"{name}.annotated.c"))

    return TaskReport(
        task=name,
        subcategory=subcategory,
        candidates=tuple(results),
        conjoined_invariant=print_invariant(inv) if inv is not None else None,
        verified_with_invariant=verified_with,
        verified_without_invariant=verified_without,
        rounds_used=rnd,
        human=human,
        generation_error=generation_error,
        usefulness=usefulness,
        tool_runs=tuple(checker.tool_runs),
        trusted=trusted,
    )


def _human_result(checker: _Checker, texts: list[str], verified_without: bool) -> HumanResult:
    raw = " && ".join(f"({t})" for t in texts) if len(texts) > 1 else texts[0]
    text = InvariantText.from_raw(raw)
    verdict = checker.validate(text)
    validated = isinstance(verdict, Valid)
    with_inv = validated and checker.verify(text.parsed)
    return HumanResult(text.canonical if text.parsed is not None else raw, validated, with_inv,
                       verified_without, verdict)


# -- task selection ---------------------------------------------------------------


@dataclass(frozen=True)
class Task:
    path: Path
    name: str
    subcategory: str
    source: str
    trusted: bool  # False when no expected verdict was found in metadata


@dataclass
class TaskSelection:
    tasks: list[Task] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (path, reason)

    def __iter__(self) -> Iterator[Task]:
        return iter(self.tasks)

    def __len__(self) -> int:
        return len(self.tasks)


def _expected_verdict(path: Path) -> bool | None:
    meta = path.with_suffix(".yml")
    if not meta.exists():
        return None
    try:
        data = yaml.safe_load(meta.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        log.warning("%s: unreadable metadata: %s", meta, exc)
        return None
    verdicts = [p.get("expected_verdict") for p in data.get("properties") or []
                if isinstance(p, dict) and "expected_verdict" in p]
    if not verdicts:
        return None
    return all(v is True for v in verdicts)


def select_tasks(directory: str | Path, require_annotation: bool = False) -> TaskSelection:
    """Single-loop tasks under ``directory``; the subcategory is the parent directory name."""
    root = Path(directory)
    sel = TaskSelection()
    if not root.is_dir():
        return sel
    for path in sorted(p for p in root.rglob("*") if p.suffix in TASK_SUFFIXES and p.is_file()):
        expected = _expected_verdict(path)
        if expected is False:
            sel.rejected.append((str(path), "expected verdict is false"))
            log.info("%s: excluded, expected verdict is false", path)
            continue
        source = path.read_text(encoding="utf-8", errors="replace")
        stripped, human = strip_annotations(source)
        if require_annotation and not human:
            sel.rejected.append((str(path), "no ACSL loop invariant annotation"))
            continue
        try:
            parse_task(stripped, path.stem, path.parent.name)
        except InvforgeError as exc:
            sel.rejected.append((str(path), str(exc)))
            log.info("%s: excluded: %s", path, exc)
            continue
        sel.tasks.append(Task(path, path.stem, path.parent.name, source, expected is not None))
    return sel


# -- benchmark --------------------------------------------------------------------


@dataclass(frozen=True)
class Row:
    total: int = 0
    val_invs: int = 0
    verified_gpt: int = 0
    useful_gpt: int = 0
    verified_human: int = 0
    useful_human: int = 0

    def __add__(self, other: "Row") -> "Row":
        return Row(*(a + b for a, b in zip(astuple(self), astuple(other))))


CSV_COLUMNS = ("subcategory", "total", "val_invs", "verified_gpt", "useful_gpt", "verified_human", "useful_human")
TABLE_HEADER = ("subcategory", "total", "val-invs", "GPT invs. verified (useful)", "Human invs. verified (useful)")


@dataclass(frozen=True)
class BenchmarkReport:
    rows: dict[str, Row]

    @classmethod
    def from_reports(cls, reports) -> "BenchmarkReport":
        rows: dict[str, Row] = {}
        for r in reports:
            h = r.human if r.validated else None
            row = Row(
                total=1,
                val_invs=int(r.validated),
                verified_gpt=int(r.verified_with_invariant),
                useful_gpt=int(r.useful),
                verified_human=int(bool(h and h.verified_with_invariant)),
                useful_human=int(bool(h and h.useful)),
            )
            rows[r.subcategory] = rows.get(r.subcategory, Row()) + row
        return cls(dict(sorted(rows.items())))

    @property
    def totals(self) -> Row:
        total = Row()
        for row in self.rows.values():
            total = total + row
        return total

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for name, row in [*self.rows.items(), ("total", self.totals)]:
            w.writerow([name, *astuple(row)])
        return buf.getvalue()

    def to_table(self) -> str:
        def cells(name, r):
            return (name, str(r.total), str(r.val_invs), f"{r.verified_gpt} ({r.useful_gpt})",
                    f"{r.verified_human} ({r.useful_human})")

        body = [cells(n, r) for n, r in self.rows.items()]
        total = cells("total", self.totals)
        widths = [max(len(row[i]) for row in (TABLE_HEADER, *body, total)) for i in range(len(TABLE_HEADER))]

        def fmt(row):
            first = row[0].ljust(widths[0])
            rest = [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            return " | ".join([first, *rest]).rstrip()

        rule = "-+-".join("-" * w for w in widths)
        return "\n".join([fmt(TABLE_HEADER), rule, *map(fmt, body), rule, fmt(total)]) + "\n"


# -- run records ------------------------------------------------------------------


@dataclass
class RunRecord:
    config: dict
    generator: str
    started: str
    finished: str = ""
    reports: list[TaskReport] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)  # {"path", "reason"}
    untrusted: list[str] = field(default_factory=list)
    tool_versions: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION


def _now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def run_benchmark(directory: str | Path, generator: Generator,
                  cfg: PipelineConfig = PipelineConfig()) -> tuple[BenchmarkReport, RunRecord]:
    selection = select_tasks(directory, cfg.require_annotation)
    if not selection.tasks:
        raise NoTasks(f"no parsable single-loop tasks under {directory}")
    record = RunRecord(config=cfg.to_dict(), generator=generator.generator_id, started=_now(),
                       tool_versions=adapters.tool_versions(cfg.tools) if cfg.validator != "oracle"
                       or cfg.verifier != "oracle" else {})
    record.failures.extend({"path": p, "reason": r} for p, r in selection.rejected)
    record.untrusted.extend(str(t.path) for t in selection if not t.trusted)

    def one(t: Task):
        return run_task(t.source, generator, cfg, t.name, t.subcategory, t.trusted)

    with cf.ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        futures = {pool.submit(one, t): t for t in selection}
        for fut in cf.as_completed(futures):
            t = futures[fut]
            try:
                record.reports.append(fut.result())
            except Exception as exc:  # one bad task must not sink the batch
                log.error("%s: %s", t.path, exc)
                record.failures.append({"path": str(t.path), "reason": f"{type(exc).__name__}: {exc}"})
    record.reports.sort(key=lambda r: (r.subcategory, r.task))
    record.failures.sort(key=lambda f: f["path"])
    record.finished = _now()
    return BenchmarkReport.from_reports(record.reports), record


def persist(record: RunRecord, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"schema": record.schema, "type": "header", "config": record.config,
              "generator": record.generator, "started": record.started,
              "tool_versions": record.tool_versions, "untrusted": record.untrusted}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps({"type": "task", **r.to_dict()}, sort_keys=True) for r in record.reports]
    footer = {"type": "footer", "finished": record.finished, "failures": record.failures,
              "count": len(record.reports)}
    lines.append(json.dumps(footer, sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_run(path: str | Path) -> RunRecord:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    objs = []
    for i, line in enumerate(lines, 1):
        try:
            objs.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TruncatedRecord(i, f"invalid JSON: {exc.msg}") from None
    if not objs or objs[0].get("type") != "header":
        raise TruncatedRecord(1, "missing header")
    header = objs[0]
    if header.get("schema") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"schema {header.get('schema')!r}, expected {SCHEMA_VERSION}")
    if objs[-1].get("type") != "footer":
        raise TruncatedRecord(len(lines) + 1, "missing footer")
    footer = objs[-1]
    tasks = objs[1:-1]
    if len(tasks) != footer.get("count"):
        raise TruncatedRecord(len(lines), f"footer announces {footer.get('count')} tasks, found {len(tasks)}")
    return RunRecord(
        config=header["config"],
        generator=header["generator"],
        started=header["started"],
        finished=footer["finished"],
        reports=[TaskReport.from_dict(t) for t in tasks],
        failures=footer["failures"],
        untrusted=header.get("untrusted", []),
        tool_versions=header.get("tool_versions", {}),
    )

