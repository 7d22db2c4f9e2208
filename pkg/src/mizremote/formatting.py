"""Indentation formatter and lint rules for the article subset.

The formatter rewrites leading whitespace only: every line is re-indented
to its block depth, trailing whitespace is stripped, and the output ends
with exactly one final newline. Line content between the indent and the
stripped tail is preserved byte-for-byte, so formatting never adds,
removes, or reorders non-newline tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errfmt import Diagnostic, ErrorList, sort_diagnostics
from .lexis import (
    BLOCK_CLOSER,
    BLOCK_OPENERS,
    Token,
    TokenKind,
    line_index,
    split_lines,
    tokenize,
)

CODE_TRAILING_WHITESPACE = 1201
CODE_TAB_IN_INDENT = 1202
CODE_LINE_TOO_LONG = 1203
CODE_EXTRA_BLANK_LINE = 1204
CODE_NESTING_TOO_DEEP = 1205

MAX_NESTING_DEPTH = 8


@dataclass(frozen=True)
class FormatConfig:
    indent_width: int = 2
    max_line_length: int = 80

    def __post_init__(self) -> None:
        if self.indent_width < 1:
            raise ValueError(f"indent_width must be >= 1, got {self.indent_width}")
        if self.max_line_length < 20:
            raise ValueError(
                f"max_line_length must be >= 20, got {self.max_line_length}"
            )


def _byte_len(text: str) -> int:
    return len(text) if text.isascii() else len(text.encode("utf-8"))


def _tokens_by_line(source: str) -> dict[int, list[Token]]:
    index = line_index(source)
    per_line: dict[int, list[Token]] = {}
    for tok in tokenize(source).tokens:
        if tok.kind is TokenKind.NEWLINE:
            continue
        line = index.lookup(tok.start)[0]
        per_line.setdefault(line, []).append(tok)
    return per_line


def format_source(source: str, cfg: FormatConfig | None = None) -> str:
    """Re-indent each line to its block depth; idempotent."""
    cfg = cfg or FormatConfig()
    lines = split_lines(source)
    if not lines:
        return ""
    per_line = _tokens_by_line(source)
    out: list[str] = []
    depth = 0
    for number, raw in enumerate(lines, start=1):
        tokens = per_line.get(number, [])
        content = raw.strip(" \t")
        display_depth = depth
        first = tokens[0] if tokens else None
        if (
            first is not None
            and first.kind is TokenKind.KEYWORD
            and first.text == BLOCK_CLOSER
        ):
            display_depth = max(depth - 1, 0)
        for tok in tokens:
            if tok.kind is not TokenKind.KEYWORD:
                continue
            if tok.text in BLOCK_OPENERS:
                depth += 1
            elif tok.text == BLOCK_CLOSER:
                depth = max(depth - 1, 0)
        if content:
            out.append(" " * (display_depth * cfg.indent_width) + content)
        else:
            out.append("")
    return "\n".join(out) + "\n"


def lint(source: str, cfg: FormatConfig | None = None) -> ErrorList:
    """Fixed rule set; diagnostics sorted by (line, column, code).

    1201 trailing whitespace, 1202 tab in the line's indentation, 1203
    line longer than max_line_length bytes, 1204 blank line directly
    following another blank line, 1205 block opener nesting past depth 8.
    """
    cfg = cfg or FormatConfig()
    diags: list[Diagnostic] = []
    previous_blank = False
    for number, raw in enumerate(split_lines(source), start=1):
        stripped = raw.rstrip(" \t")
        if stripped != raw:
            diags.append(
                Diagnostic(number, _byte_len(stripped) + 1, CODE_TRAILING_WHITESPACE)
            )
        leading = raw[: len(raw) - len(raw.lstrip(" \t"))]
        tab_at = leading.find("\t")
        if tab_at != -1:
            diags.append(Diagnostic(number, tab_at + 1, CODE_TAB_IN_INDENT))
        if _byte_len(raw) > cfg.max_line_length:
            diags.append(Diagnostic(number, cfg.max_line_length + 1, CODE_LINE_TOO_LONG))
        blank = raw.strip(" \t") == ""
        if blank and previous_blank:
            diags.append(Diagnostic(number, 1, CODE_EXTRA_BLANK_LINE))
        previous_blank = blank

    index = line_index(source)
    depth = 0
    for tok in tokenize(source).tokens:
        if tok.kind is not TokenKind.KEYWORD:
            continue
        if tok.text in BLOCK_OPENERS:
            depth += 1
            if depth > MAX_NESTING_DEPTH:
                line, column = index.lookup(tok.start)
                diags.append(Diagnostic(line, column, CODE_NESTING_TOO_DEEP))
        elif tok.text == BLOCK_CLOSER:
            depth = max(depth - 1, 0)
    return sort_diagnostics(diags)
