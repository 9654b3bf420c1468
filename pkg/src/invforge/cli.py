"""Command line interface: ``invforge run | check | report``."""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

import yaml

from . import adapters
from .acsl import InvariantText
from .annotator import strip_annotations
from .cminus import parse_task
from .errors import InvforgeError, NoTasks
from .generation import GenerationConfig, HeuristicGenerator, LLMGenerator, ReplayGenerator
from .oracle import DomainConfig, Holds, Valid, check_useful, validate, verify
from .pipeline import BenchmarkReport, PipelineConfig, load_run, persist, run_benchmark

EXIT_OK, EXIT_USAGE, EXIT_NO_TASKS = 0, 1, 2

_DURATION = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h)?\s*$")
_UNITS = {None: 1.0, "ms": 0.001, "s": 1.0, "m": 60.0, "h": 3600.0}
_GEN_KEYS = ("endpoint_url", "model", "temperature", "samples_k", "max_feedback_rounds",
             "request_timeout", "max_concurrent_requests", "retries", "backoff")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def duration(text: str) -> float:
    m = _DURATION.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"invalid duration {text!r} (e.g. 10s, 15m)")
    return float(m.group(1)) * _UNITS[m.group(2)]


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="invforge", description="Loop invariant generation, validation and verification.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run the pipeline over a task directory")
    run.add_argument("directory", help="task tree; subdirectory names become report rows")
    run.add_argument("--generator", default="heuristic",
                     help="llm | heuristic | heuristic:<h1>+<h2> | replay:<dir>")
    run.add_argument("--validator", choices=("oracle", "framac"), default="oracle",
                     help="who judges candidate validity (default: oracle)")
    run.add_argument("--verifier", choices=("oracle", "framac_sv", "kinduction"), default="oracle",
                     help="who proves the assertion with and without the invariant (default: oracle)")
    run.add_argument("--compare-human", action="store_true", help="also verify with the stripped human invariants")
    run.add_argument("--require-annotation", action="store_true", help="skip tasks without a human invariant")
    run.add_argument("--jobs", type=int, default=1, help="tasks processed in parallel")
    run.add_argument("--out", default="invforge-run", help="output directory (default: invforge-run)")
    run.add_argument("--config", help="YAML file with generation, domain and tool settings")
    run.add_argument("--samples", type=int, dest="samples_k", help="completions per prompt (default: 5)")
    run.add_argument("--temperature", type=float, help="sampling temperature (default: 0.2)")
    run.add_argument("--max-feedback-rounds", type=int, help="shared feedback budget (default: 2)")
    run.add_argument("--validity-timeout", type=duration, default=adapters.VALIDITY_TIMEOUT,
                     help="per external validity check, e.g. 10s")
    run.add_argument("--verify-timeout", type=duration, default=adapters.VERIFY_TIMEOUT,
                     help="per external verifier run, e.g. 15m")

    check = sub.add_parser("check", help="validate one invariant for one task and test its usefulness")
    check.add_argument("file", help="C task file")
    check.add_argument("--invariant", required=True, help="ACSL expression, e.g. 'x + y == n'")

    report = sub.add_parser("report", help="render the report of a finished run")
    report.add_argument("rundir", help="directory written by invforge run")
    report.add_argument("--format", choices=("table", "csv"), default="table")
    return ap


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping")
    return data


def _pipeline_config(args, conf: dict) -> PipelineConfig:
    gen = {k: conf[k] for k in _GEN_KEYS if k in conf}
    for key in ("samples_k", "temperature", "max_feedback_rounds"):
        if getattr(args, key) is not None:
            gen[key] = getattr(args, key)
    tools = conf.get("tools", {})
    for key in ("framac_options", "kinduction_options"):
        if key in tools:
            tools[key] = tuple(tools[key])
    try:
        return PipelineConfig(
            generation=GenerationConfig(**gen),
            domain=DomainConfig.from_dict(conf.get("domain", {})),
            validator=args.validator,
            verifier=args.verifier,
            compare_human=args.compare_human,
            require_annotation=args.require_annotation,
            jobs=args.jobs,
            validity_timeout=args.validity_timeout,
            verify_timeout=args.verify_timeout,
            tools=adapters.ToolConfig(**tools, work_dir=str(Path(args.out) / "tools")),
            artifacts_dir=str(Path(args.out) / "artifacts"),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _generator(spec: str, cfg: PipelineConfig):
    kind, _, arg = spec.partition(":")
    if kind == "replay":
        if not arg or not Path(arg).is_dir():
            raise UsageError(f"replay directory {arg!r} does not exist")
        return ReplayGenerator(arg)
    if kind == "heuristic":
        try:
            return HeuristicGenerator(arg.split("+") if arg else ("copy_assertion",))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if kind == "llm" and not arg:
        return LLMGenerator(cfg.generation)
    raise UsageError(f"unknown generator {spec!r}")


def _cmd_run(args) -> int:
    cfg = _pipeline_config(args, _load_config(args.config))
    for tool, needed in (("frama-c", args.validator == "framac" or args.verifier == "framac_sv"),
                         ("cpachecker", args.verifier == "kinduction")):
        if needed and not adapters.tool_available(tool, cfg.tools):
            raise UsageError(f"{tool} not found on PATH")
    gen = _generator(args.generator, cfg)
    out = Path(args.out)
    report, record = run_benchmark(args.directory, gen, cfg)
    persist(record, out / "run.jsonl")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
    sys.stdout.write(report.to_table())
    for f in record.failures:
        print(f"skipped {f['path']}: {f['reason']}", file=sys.stderr)
    return EXIT_OK


def _cmd_check(args) -> int:
    path = Path(args.file)
    try:
        source = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(str(exc)) from None
    stripped, _ = strip_annotations(source)
    p = parse_task(stripped, path.stem, path.parent.name)
    text = InvariantText.from_raw(args.invariant)
    verdict = validate(p, text)
    print(f"invariant: {text.canonical if text.parsed is not None else text.raw}")
    print(f"validity: {verdict!r}")
    if isinstance(verdict, Valid):
        with_inv = isinstance(verify(p, text.parsed), Holds)
        without = isinstance(verify(p, None), Holds)
        print(f"implies assertion: {check_useful(p, text.parsed)!r}")
        print(f"verified with invariant: {with_inv}")
        print(f"verified without invariant: {without}")
        print(f"useful: {with_inv and not without}")
    return EXIT_OK


def _cmd_report(args) -> int:
    run_file = Path(args.rundir) / "run.jsonl"
    if not run_file.exists():
        raise UsageError(f"{run_file} does not exist")
    record = load_run(run_file)
    report = BenchmarkReport.from_reports(record.reports)
    sys.stdout.write(report.to_csv() if args.format == "csv" else report.to_table())
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "check": _cmd_check, "report": _cmd_report}[args.command]
    try:
        return handler(args)
    except NoTasks as exc:
        print(f"invforge: {exc}", file=sys.stderr)
        return EXIT_NO_TASKS
    except (UsageError, InvforgeError) as exc:
        print(f"invforge: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
