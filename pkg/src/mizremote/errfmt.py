"""Codec for the ``.err`` diagnostics file and ``.msg`` message catalog formats.

These byte formats are the exchange contract with external verifier
binaries: one ``<line> <column> <code>`` triple per line in ``.err``
files, and ``# <code>`` / message-line pairs in ``.msg`` catalogs.
Emitted files use single ASCII spaces and LF terminators; CRLF is
accepted on parse but never produced.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping


@dataclass(frozen=True, order=True)
class Diagnostic:
    line: int
    column: int
    code: int

    def __post_init__(self) -> None:
        if self.line < 1 or self.column < 1 or self.code < 1:
            raise ValueError(
                f"diagnostic fields must be >= 1, got {self.line} {self.column} {self.code}"
            )


ErrorList = list[Diagnostic]

MessageCatalog = dict[int, str]


class ErrParseError(ValueError):
    """Malformed .err content; `line` is the line number in the .err file."""

    def __init__(self, line: int, reason: str):
        super().__init__(f".err line {line}: {reason}")
        self.line = line
        self.reason = reason


class MsgParseError(ValueError):
    """Malformed .msg content; `line` is the line number in the .msg file."""

    def __init__(self, line: int, reason: str):
        super().__init__(f".msg line {line}: {reason}")
        self.line = line
        self.reason = reason


def sort_diagnostics(errs: Iterable[Diagnostic]) -> ErrorList:
    return sorted(errs)


def serialize_err(errs: Iterable[Diagnostic]) -> bytes:
    return b"".join(
        f"{e.line} {e.column} {e.code}\n".encode("ascii") for e in errs
    )


def parse_err(data: bytes) -> ErrorList:
    """Parse .err bytes; tolerates CRLF and one trailing blank line."""
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    items: list[Diagnostic] = []
    for no, raw in enumerate(lines, start=1):
        line = raw[:-1] if raw.endswith(b"\r") else raw
        fields = line.split(b" ")
        if len(fields) != 3:
            raise ErrParseError(no, f"expected 3 fields, got {len(fields)}")
        values = []
        for field in fields:
            if not field.isdigit():
                raise ErrParseError(no, f"not a decimal integer: {field!r}")
            values.append(int(field.decode("ascii")))
        if any(v < 1 for v in values):
            raise ErrParseError(no, "fields must be positive")
        items.append(Diagnostic(*values))
    return sort_diagnostics(items)


def parse_msg_catalog(data: bytes) -> MessageCatalog:
    """Parse .msg bytes: repeated '# <code>' header plus one message line."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[: exc.start].count(b"\n") + 1
        raise MsgParseError(line, "invalid UTF-8") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    catalog: MessageCatalog = {}
    i = 0
    while i < len(lines):
        raw = lines[i].rstrip("\r")
        if raw.strip() == "":
            i += 1
            continue
        if not raw.startswith("# "):
            raise MsgParseError(i + 1, f"expected '# <code>' header, got {raw!r}")
        code_text = raw[2:].strip()
        if not (code_text.isascii() and code_text.isdigit()) or int(code_text) < 1:
            raise MsgParseError(i + 1, f"header code is not a positive integer: {code_text!r}")
        if i + 1 >= len(lines):
            raise MsgParseError(i + 1, "message line missing at end of file")
        message = lines[i + 1].rstrip("\r")
        if message.strip() == "":
            raise MsgParseError(i + 2, "empty message")
        catalog[int(code_text)] = message
        i += 2
    return catalog


def annotate(
    errs: Iterable[Diagnostic], catalog: Mapping[int, str]
) -> list[tuple[Diagnostic, str]]:
    """Pair each diagnostic with its catalog message or an unknown-code fallback."""
    return [(e, catalog.get(e.code) or f"Unknown error {e.code}") for e in errs]


def builtin_catalog() -> MessageCatalog:
    """Message catalog for the built-in toolchain (codes 1001-1205)."""
    data = resources.files("mizremote").joinpath("data/messages.msg").read_bytes()
    return parse_msg_catalog(data)
