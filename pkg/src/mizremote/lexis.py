"""Tokenizer for the Mizar-style article subset.

All positions are byte-oriented: a token's span is a half-open
``(start, end)`` range into the UTF-8 encoding of the source, and
``LineIndex`` translates byte offsets into 1-based ``(line, column)``
pairs with columns counted in bytes from the line start. Tabs count as
one column byte.
"""

from __future__ import annotations

import re
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from itertools import accumulate

KEYWORDS = frozenset(
    """
    environ begin proof end now hereby case suppose per cases theorem
    definition registration notation scheme let assume thus hence for ex
    holds st be being by from reconsider consider take set such that then
    and or not implies iff means equals is of to
    """.split()
)

BLOCK_OPENERS = frozenset(
    {"proof", "now", "hereby", "case", "suppose",
     "definition", "registration", "notation", "scheme"}
)

BLOCK_CLOSER = "end"


class TokenKind(Enum):
    KEYWORD = "Keyword"
    IDENTIFIER = "Identifier"
    SYMBOL = "Symbol"
    NUMBER = "NumberLiteral"
    COMMENT = "Comment"
    NEWLINE = "Newline"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    start: int  # byte offset, inclusive
    end: int  # byte offset, exclusive

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[Token, ...]
    source: str
    source_len: int  # bytes


@dataclass(frozen=True)
class LineIndex:
    line_starts: tuple[int, ...]  # byte offsets, first element 0
    source_len: int  # bytes

    def lookup(self, offset: int) -> tuple[int, int]:
        """Translate a byte offset into a 1-based (line, column) pair."""
        if offset < 0 or offset > self.source_len:
            raise ValueError(
                f"offset {offset} out of range for source of {self.source_len} bytes"
            )
        line = bisect_right(self.line_starts, offset)
        return line, offset - self.line_starts[line - 1] + 1

    def line_count(self) -> int:
        """Logical line count; a trailing terminator does not open a new line."""
        n = len(self.line_starts)
        if n > 1 and self.line_starts[-1] == self.source_len:
            return n - 1
        return n


# Every position of the source matches exactly one alternative, so finditer
# covers the text with no gaps; WS matches are skipped when emitting tokens.
_TOKEN_RE = re.compile(
    r"(?P<COMMENT>::[^\r\n]*)"
    r"|(?P<NEWLINE>\r\n|\n|\r)"
    r"|(?P<WORD>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<NUMBER>[0-9]+)"
    r"|(?P<WS>[ \t]+)"
    r"|(?P<SYMBOL>.)",
    re.DOTALL,
)

_LINE_TERM_RE = re.compile(r"\r\n|\n|\r")

_GROUP_KINDS = {
    "COMMENT": TokenKind.COMMENT,
    "NEWLINE": TokenKind.NEWLINE,
    "NUMBER": TokenKind.NUMBER,
    "SYMBOL": TokenKind.SYMBOL,
}


def _char_to_byte(source: str) -> list[int] | None:
    """Cumulative byte offsets per character; None when chars == bytes."""
    if source.isascii():
        return None
    return [0, *accumulate(len(ch.encode("utf-8")) for ch in source)]


def tokenize(source: str) -> TokenStream:
    """Tokenize source text. Total: unknown characters become Symbol tokens."""
    offsets = _char_to_byte(source)
    tokens: list[Token] = []
    for m in _TOKEN_RE.finditer(source):
        group = m.lastgroup
        if group == "WS":
            continue
        if offsets is None:
            start, end = m.start(), m.end()
        else:
            start, end = offsets[m.start()], offsets[m.end()]
        if group == "WORD":
            text = m.group()
            kind = TokenKind.KEYWORD if text in KEYWORDS else TokenKind.IDENTIFIER
        else:
            kind = _GROUP_KINDS[group]
        tokens.append(Token(kind, m.group(), start, end))
    source_len = offsets[-1] if offsets is not None else len(source)
    return TokenStream(tuple(tokens), source, source_len)


def detokenize(stream: TokenStream) -> str:
    """Rebuild the source from token texts plus the whitespace between spans."""
    data = stream.source.encode("utf-8")
    parts: list[bytes] = []
    pos = 0
    for tok in stream.tokens:
        parts.append(data[pos:tok.start])
        parts.append(tok.text.encode("utf-8"))
        pos = tok.end
    parts.append(data[pos:])
    return b"".join(parts).decode("utf-8")


def line_index(source: str) -> LineIndex:
    """Build the offset-to-line/column index for a source text."""
    offsets = _char_to_byte(source)
    starts = [0]
    for m in _LINE_TERM_RE.finditer(source):
        starts.append(offsets[m.end()] if offsets is not None else m.end())
    source_len = offsets[-1] if offsets is not None else len(source)
    return LineIndex(tuple(starts), source_len)


def split_lines(source: str) -> list[str]:
    """Split into logical lines, numbered consistently with LineIndex.

    A trailing terminator closes the last line instead of opening an empty
    one, so ``split_lines("a\\n")`` is ``["a"]``.
    """
    parts = _LINE_TERM_RE.split(source)
    if parts and parts[-1] == "":
        parts.pop()
    return parts
