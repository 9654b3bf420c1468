"""Invariant candidate generation: prompts, response parsing and generators.

Three generator kinds share one interface (``responses``), each returning raw
response texts that are then run through :func:`extract_candidates`:

* :class:`LLMGenerator` posts chat-completions requests to an HTTP endpoint;
* :class:`HeuristicGenerator` proposes candidates from the program text;
* :class:`ReplayGenerator` serves recorded responses from disk.
"""

from __future__ import annotations

import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .acsl import Binary, Const, Expr, InvariantText, conjuncts, print_invariant, to_c
from .annotator import MASK_LINE, MaskedTask
from .cminus import Program
from .errors import EndpointError, GenerationFailed, GenerationTimeout, NoCandidateFound
from .oracle import (
    NotEstablished,
    NotInductive,
    NotUseful,
    ParseFailed,
    UndefinedSemantics,
    Unknown,
    Unsupported,
    Verdict,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "INVFORGE_API_KEY"
PROMPT_MASK_LINE = "//@ loop invariant [invariant];"
INSTRUCTION = (
    "Compute a loop invariant for the annotated loop including [invariant] in the following C code. "
    "Please use the format of ACSL annotations and always end your response with "
    "//@ loop invariant X ; where X is the computed invariant."
)
CLOSING_SENTENCE = "Please always end your response with //@ loop invariant X ; where X is the computed invariant."

_CANDIDATE_RE = re.compile(r"//@[ \t]*loop[ \t]+invariant[ \t]+([^;\n]*?)[ \t]*;")


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.2
    samples_k: int = 5
    model: str = "gpt-3.5-turbo"
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    max_feedback_rounds: int = 2
    request_timeout: float = 60.0
    max_concurrent_requests: int = 4
    retries: int = 3
    backoff: float = 1.0

    def __post_init__(self):
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be in [0, 2]")
        if self.samples_k < 1:
            raise ValueError("samples_k must be >= 1")
        if self.max_feedback_rounds < 0:
            raise ValueError("max_feedback_rounds must be >= 0")


@dataclass(frozen=True)
class InvariantCandidate:
    text: InvariantText
    generator_id: str
    sample_index: int
    round: int = 0
    raw_response: str = field(default="", repr=False)

    def to_dict(self) -> dict:
        return {
            "raw": self.text.raw,
            "generator_id": self.generator_id,
            "sample_index": self.sample_index,
            "round": self.round,
            "raw_response": self.raw_response,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InvariantCandidate":
        return cls(InvariantText.from_raw(d["raw"]), d["generator_id"], d["sample_index"],
                   d["round"], d.get("raw_response", ""))


@dataclass(frozen=True)
class PromptText:
    rendered: str


# -- prompts ------------------------------------------------------------------


def build_prompt(m: MaskedTask) -> PromptText:
    source = m.masked_source.replace(MASK_LINE, PROMPT_MASK_LINE, 1)
    return PromptText(f"{INSTRUCTION}\n{source}")


def _fmt_state(state: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in state.items())


def build_feedback_prompt(m: MaskedTask, failed: InvariantCandidate, verdict: Verdict) -> PromptText:
    """The original prompt followed by a paragraph describing why ``failed`` was rejected."""
    assertion = to_c(m.program.post_assertion)
    head = f"Your previous answer proposed the loop invariant `{failed.text.raw}`, but it was rejected."
    if isinstance(verdict, Unsupported):
        reason = (f"The validator does not support the symbol `{verdict.symbol}` in ACSL loop invariants"
                  f"{' (' + verdict.detail + ')' if verdict.detail else ''}. "
                  "Express the invariant with integer arithmetic, shifts, comparisons and logical operators only.")
    elif isinstance(verdict, ParseFailed):
        reason = f"The invariant could not be parsed as ACSL: {verdict.message}."
    elif isinstance(verdict, NotEstablished):
        reason = ("The invariant does not hold before the first loop iteration. "
                  f"Counterexample (program inputs): {_fmt_state(verdict.cex)}.")
    elif isinstance(verdict, NotInductive):
        reason = ("The invariant is not preserved by the loop body. "
                  f"Counterexample: from the state {_fmt_state(verdict.cex)} one loop iteration reaches "
                  f"{_fmt_state(verdict.successor)}, where the invariant is false.")
    elif isinstance(verdict, UndefinedSemantics):
        reason = (f"Evaluating the invariant has undefined semantics ({verdict.reason}) "
                  f"in the state {_fmt_state(verdict.state)}.")
    elif isinstance(verdict, NotUseful):
        reason = (f"The invariant is valid but too weak to prove the assertion `{assertion}` after the loop.")
        if verdict.cex:
            reason += (f" Counterexample: the state {_fmt_state(verdict.cex)} satisfies the invariant and "
                       f"exits the loop but violates `{assertion}`.")
    elif isinstance(verdict, Unknown):
        reason = f"The validator could not confirm the invariant ({verdict.reason})."
    else:
        raise ValueError(f"{verdict!r} is not a failure verdict")
    base = build_prompt(m).rendered
    if not base.endswith("\n"):
        base += "\n"
    return PromptText(f"{base}\n{head} {reason}\n{CLOSING_SENTENCE}")


# -- extraction ---------------------------------------------------------------


def extract_candidates(response: str) -> list[InvariantText]:
    """All ``//@ loop invariant <expr> ;`` occurrences, deduplicated in first-seen order.

    Raises :class:`NoCandidateFound` when the response contains none.
    """
    seen: dict[str, InvariantText] = {}
    for m in _CANDIDATE_RE.finditer(response):
        raw = m.group(1).strip()
        if raw and raw not in seen:
            seen[raw] = InvariantText.from_raw(raw)
    if not seen:
        raise NoCandidateFound("no '//@ loop invariant ... ;' line in response")
    return list(seen.values())


# -- generators ---------------------------------------------------------------


class Generator(Protocol):
    generator_id: str

    def responses(self, task: MaskedTask, prompt: PromptText, round: int,
                  cfg: GenerationConfig) -> list[str]:
        ...


def heuristic_copy_assertion(p: Program) -> list[Expr]:
    """The assertion condition, then each of its top-level conjuncts."""
    parts = conjuncts(p.post_assertion)
    out = [p.post_assertion]
    if len(parts) > 1:
        out.extend(parts)
    return out


_WEAKEN = {"<": "<=", ">": ">="}


def heuristic_weaken_condition(p: Program) -> list[Expr]:
    """Relax the loop condition so it also holds on exit of a unit-step loop.

    ``x > 0`` becomes ``x >= 0``, ``i < n`` becomes ``i <= n``; a
    non-strict bound ``i <= n`` becomes ``i <= n + 1``.
    """
    out = []
    for c in conjuncts(p.loop.condition):
        if not isinstance(c, Binary):
            continue
        if c.op in _WEAKEN:
            out.append(Binary(_WEAKEN[c.op], c.left, c.right))
        elif c.op == "<=":
            out.append(Binary("<=", c.left, Binary("+", c.right, Const(1))))
        elif c.op == ">=":
            out.append(Binary(">=", c.left, Binary("-", c.right, Const(1))))
    return out


HEURISTICS = {
    "copy_assertion": heuristic_copy_assertion,
    "weaken_condition": heuristic_weaken_condition,
}


class HeuristicGenerator:
    """Deterministic proposer; answers round 0 only."""

    def __init__(self, heuristics: Sequence[str] = ("copy_assertion",)):
        unknown = set(heuristics) - set(HEURISTICS)
        if unknown:
            raise ValueError(f"unknown heuristics: {sorted(unknown)}")
        self.heuristics = tuple(heuristics)
        self.generator_id = "heuristic:" + "+".join(self.heuristics)

    def responses(self, task, prompt, round, cfg):
        if round > 0:
            return []
        exprs = [e for h in self.heuristics for e in HEURISTICS[h](task.program)]
        lines = [f"//@ loop invariant {print_invariant(e)} ;" for e in exprs]
        return ["\n".join(lines) + "\n"] if lines else []


class ReplayGenerator:
    """Serves ``<task>.round<i>.response.txt`` (or per-sample ``.sample<j>.`` files)."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.generator_id = f"replay:{self.directory.name}"

    def responses(self, task, prompt, round, cfg):
        name = task.program.name
        per_sample = [self.directory / f"{name}.round{round}.sample{j}.response.txt"
                      for j in range(cfg.samples_k)]
        found = [p.read_text(encoding="utf-8") for p in per_sample if p.exists()]
        if found:
            return found
        path = self.directory / f"{name}.round{round}.response.txt"
        if not path.exists():
            if round == 0:
                raise GenerationFailed(f"no replay fixture {path.name}")
            return []
        text = path.read_text(encoding="utf-8")
        return [text] * cfg.samples_k


class LLMGenerator:
    """Chat-completions client: one request per prompt with ``n = k`` samples.

    Transport errors, timeouts, HTTP 429 and 5xx are retried with exponential
    backoff; a semaphore caps concurrent in-flight requests.
    """

    def __init__(self, cfg: GenerationConfig, client: httpx.Client | None = None,
                 api_key: str | None = None, sleep=time.sleep):
        self.cfg = cfg
        self.client = client or httpx.Client(timeout=cfg.request_timeout)
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.generator_id = f"llm:{cfg.model}"
        self._slots = threading.BoundedSemaphore(cfg.max_concurrent_requests)
        self._sleep = sleep

    def _payload(self, prompt: PromptText, cfg: GenerationConfig) -> dict:
        return {
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt.rendered}],
            "temperature": cfg.temperature,
            "n": cfg.samples_k,
        }

    def responses(self, task, prompt, round, cfg):
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        payload = self._payload(prompt, cfg)
        last: Exception | None = None
        for attempt in range(cfg.retries + 1):
            if attempt:
                self._sleep(cfg.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self.client.post(cfg.endpoint_url, json=payload, headers=headers,
                                            timeout=cfg.request_timeout)
            except httpx.TimeoutException as exc:
                last = GenerationTimeout(f"request timed out: {exc}")
                continue
            except httpx.TransportError as exc:
                last = EndpointError(None, str(exc))
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = EndpointError(resp.status_code, resp.text)
                continue
            if resp.status_code != 200:
                raise EndpointError(resp.status_code, resp.text)
            try:
                choices = resp.json()["choices"]
                return [c["message"]["content"] or "" for c in choices]
            except (ValueError, KeyError, TypeError) as exc:
                raise EndpointError(resp.status_code, f"malformed response: {exc}") from None
        log.warning("giving up on %s after %d attempts", cfg.endpoint_url, cfg.retries + 1)
        assert last is not None
        raise last


def candidates_from_responses(responses: Sequence[str], generator_id: str, round: int = 0,
                              seen: set[str] | None = None, task: str = "") -> list[InvariantCandidate]:
    """Extract and deduplicate candidates by canonical printed form, across
    responses and against ``seen`` (updated in place).

    Unparsable candidates are kept with ``parsed`` unset. Responses without
    any annotation count as failed samples.
    """
    seen = set() if seen is None else seen
    out = []
    for idx, response in enumerate(responses):
        try:
            texts = extract_candidates(response)
        except NoCandidateFound:
            log.info("%s: sample %d of round %d has no candidate", task, idx, round)
            continue
        for text in texts:
            if text.canonical in seen:
                continue
            seen.add(text.canonical)
            out.append(InvariantCandidate(text, generator_id, idx, round, response))
    return out


def generate(g: Generator, m: MaskedTask, cfg: GenerationConfig, round: int = 0,
             prompt: PromptText | None = None, seen: set[str] | None = None) -> list[InvariantCandidate]:
    """Query ``g`` once and return its deduplicated candidates.

    Generator errors (:class:`EndpointError`, :class:`GenerationTimeout`, ...)
    propagate.
    """
    if round > cfg.max_feedback_rounds:
        raise ValueError("round exceeds max_feedback_rounds")
    responses = g.responses(m, prompt or build_prompt(m), round, cfg)
    return candidates_from_responses(responses, g.generator_id, round, seen, m.program.name)
