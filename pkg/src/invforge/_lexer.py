"""Tokenizer shared by the C-subset frontend and the ACSL expression parser."""

from __future__ import annotations

import re
from typing import NamedTuple

from .errors import ParseError


class Token(NamedTuple):
    kind: str  # num | id | str | char | op | directive | eof
    text: str
    line: int
    col: int
    value: int | None = None


_OPS = sorted(
    """<==> ==> <<= >>= ... && || << >> <= >= == != ++ -- += -= *= /= %= &= |= ^= ->
    + - * / % < > = ! & | ^ ~ ? : ; , ( ) { } [ ] .""".split(),
    key=len,
    reverse=True,
)
_OP_RE = re.compile("|".join(re.escape(op) for op in _OPS))
_NUM_RE = re.compile(r"(0[xX][0-9a-fA-F]+|\d+)([uUlL]*)")
_ID_RE = re.compile(r"\\?[A-Za-z_][A-Za-z_0-9]*")
_STR_RE = re.compile(r'"(?:\\.|[^"\\\n])*"')
_CHAR_RE = re.compile(r"'(?:\\.|[^'\\\n])+'")


def _int_literal(digits: str, line: int) -> int:
    if digits[:2].lower() == "0x":
        return int(digits, 16)
    if len(digits) > 1 and digits[0] == "0":
        try:
            return int(digits, 8)
        except ValueError:
            raise ParseError(line, f"invalid octal literal {digits}") from None
    return int(digits)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, line_start = 0, 1, 0
    at_line_start = True
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            line_start = i
            at_line_start = True
            continue
        if ch in " \t\r\f\v":
            i += 1
            continue
        col = i - line_start + 1
        if text.startswith("//", i):
            end = text.find("\n", i)
            i = n if end < 0 else end
            continue
        if text.startswith("/*", i):
            end = text.find("*/", i + 2)
            if end < 0:
                raise ParseError(line, "unterminated comment")
            line += text.count("\n", i, end)
            if "\n" in text[i:end]:
                line_start = text.rfind("\n", i, end) + 1
            i = end + 2
            continue
        if ch == "#" and at_line_start:
            end = text.find("\n", i)
            end = n if end < 0 else end
            tokens.append(Token("directive", text[i:end].strip(), line, col))
            i = end
            continue
        at_line_start = False
        if ch.isdigit():
            m = _NUM_RE.match(text, i)
            tokens.append(Token("num", m.group(0), line, col, _int_literal(m.group(1), line)))
            i = m.end()
            continue
        m = _ID_RE.match(text, i)
        if m:
            tokens.append(Token("id", m.group(0), line, col))
            i = m.end()
            continue
        if ch == '"':
            m = _STR_RE.match(text, i)
            if not m:
                raise ParseError(line, "unterminated string literal")
            tokens.append(Token("str", m.group(0), line, col))
            i = m.end()
            continue
        if ch == "'":
            m = _CHAR_RE.match(text, i)
            if not m:
                raise ParseError(line, "bad character literal")
            tokens.append(Token("char", m.group(0), line, col))
            i = m.end()
            continue
        m = _OP_RE.match(text, i)
        if not m:
            raise ParseError(line, f"unexpected character {ch!r}")
        tokens.append(Token("op", m.group(0), line, col))
        i = m.end()
    tokens.append(Token("eof", "", line, i - line_start + 1))
    return tokens
