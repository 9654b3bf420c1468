"""Text transforms between task sources and invariant-annotated sources."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .acsl import Expr, free_vars, print_invariant
from .cminus import Program, SourcePos
from .errors import AlreadyMasked, ScopeError

MASK = "[mask]"
MASK_LINE = "//@ loop invariant [mask];"

_ANNOTATION_RE = re.compile(r"^[ \t]*//@[ \t]*loop[ \t]+invariant[ \t]+(.*?)[ \t]*;[ \t]*$")


@dataclass(frozen=True)
class MaskedTask:
    original_source: str
    masked_source: str
    site: SourcePos  # the placeholder line; the loop header follows it
    program: Program

    @property
    def loop_line(self) -> int:
        return self.site.line + 1


@dataclass(frozen=True)
class AnnotatedTask:
    source: str
    invariant: Expr | None  # None for the unannotated baseline
    parent: MaskedTask


def strip_annotations(source: str) -> tuple[str, list[str]]:
    """Remove ``//@ loop invariant ...;`` lines.

    Returns the stripped text (all other bytes untouched) and the removed
    invariant texts, in source order. Placeholder lines are removed but not
    reported.
    """
    kept = []
    found = []
    for line in source.splitlines(keepends=True):
        m = _ANNOTATION_RE.match(line.rstrip("\r\n"))
        if m:
            if m.group(1) not in (MASK, "[invariant]"):
                found.append(m.group(1))
            continue
        kept.append(line)
    return "".join(kept), found


def insert_mask(source: str, program: Program) -> MaskedTask:
    """Put the placeholder line directly above the loop header, matching its indentation."""
    lines = source.splitlines(keepends=True)
    if any(MASK in line and "loop invariant" in line for line in lines):
        raise AlreadyMasked("source already contains an invariant placeholder")
    idx = program.loop.site.line - 1
    if not 0 <= idx < len(lines):
        raise ValueError("program does not match source: loop line out of range")
    header = lines[idx]
    indent = header[: len(header) - len(header.lstrip(" \t"))]
    newline = "\r\n" if header.endswith("\r\n") else "\n"
    lines.insert(idx, f"{indent}{MASK_LINE}{newline}")
    return MaskedTask(
        original_source=source,
        masked_source="".join(lines),
        site=SourcePos(program.loop.site.line, len(indent) + 1),
        program=program,
    )


def annotation_line(inv: Expr) -> str:
    return f"//@ loop invariant {print_invariant(inv)};"


def instantiate(m: MaskedTask, inv: Expr) -> AnnotatedTask:
    """Replace the placeholder with ``inv`` in canonical form.

    Raises :class:`ScopeError` when ``inv`` names variables that are not in
    scope at the loop head.
    """
    unknown = free_vars(inv) - set(m.program.loop_vars)
    if unknown:
        raise ScopeError(unknown)
    source = m.masked_source.replace(MASK_LINE, annotation_line(inv), 1)
    return AnnotatedTask(source=source, invariant=inv, parent=m)


def baseline(m: MaskedTask) -> AnnotatedTask:
    """The task without any invariant (placeholder removed)."""
    lines = m.masked_source.splitlines(keepends=True)
    del lines[m.site.line - 1]
    return AnnotatedTask(source="".join(lines), invariant=None, parent=m)
