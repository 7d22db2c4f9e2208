"""Built-in reference verifier: Parser, Analyzer, and Checker passes.

Runs structural and label-reference checks over a tokenized article,
reporting per-pass progress and a sorted diagnostic list. Error codes
live in the 1000-1199 range reserved for the built-in toolchain.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable

from .errfmt import Diagnostic, ErrorList, sort_diagnostics
from .lexis import (
    BLOCK_CLOSER,
    BLOCK_OPENERS,
    LineIndex,
    Token,
    TokenKind,
    TokenStream,
    line_index,
    tokenize,
)

PASS_NAMES = ("Parser", "Analyzer", "Checker")
PASS_COUNT = len(PASS_NAMES)

PROGRESS_EVERY_LINES = 500

CODE_UNMATCHED_END = 1001
CODE_UNCLOSED_BLOCK = 1002
CODE_MISSING_ENVIRON = 1003
CODE_MISSING_BEGIN = 1004
CODE_TEXT_BEFORE_ENVIRON = 1005
CODE_UNDEFINED_LABEL = 1101

# A label definition ("A1: ...") is recognized only at a statement start:
# after one of these keywords, after ";", or at the start of the article.
# "theorem Th1:", "then A2:", "assume A3:" and "such that A4:" all bind
# labels, hence the non-opener entries.
_STATEMENT_KEYWORDS = frozenset(
    {
        "begin",
        "proof",
        "now",
        "hereby",
        "case",
        "suppose",
        "theorem",
        "then",
        "assume",
        "that",
    }
)


@dataclass(frozen=True)
class PassProgress:
    pass_name: str
    current: int  # line reached, 1-based
    total: int  # total lines in the article


class Canceled(Exception):
    """Raised when the cancellation check fires mid-verification."""


ProgressSink = Callable[[PassProgress], object]
CancelCheck = Callable[[], bool]


def _significant(tokens: Iterable[Token]) -> list[Token]:
    return [
        t for t in tokens if t.kind not in (TokenKind.COMMENT, TokenKind.NEWLINE)
    ]


def _diag_at(token: Token, index: LineIndex, code: int) -> Diagnostic:
    line, column = index.lookup(token.start)
    return Diagnostic(line, column, code)


def check_structure(stream: TokenStream, index: LineIndex) -> ErrorList:
    """Block matching plus environ/begin section checks."""
    diags: list[Diagnostic] = []
    tokens = _significant(stream.tokens)

    stack: list[Token] = []
    for tok in tokens:
        if tok.kind is not TokenKind.KEYWORD:
            continue
        if tok.text in BLOCK_OPENERS:
            stack.append(tok)
        elif tok.text == BLOCK_CLOSER:
            if stack:
                stack.pop()
            else:
                diags.append(_diag_at(tok, index, CODE_UNMATCHED_END))
    for opener in stack:
        diags.append(_diag_at(opener, index, CODE_UNCLOSED_BLOCK))

    environ_at = next(
        (
            i
            for i, t in enumerate(tokens)
            if t.kind is TokenKind.KEYWORD and t.text == "environ"
        ),
        None,
    )
    if environ_at is None:
        diags.append(Diagnostic(1, 1, CODE_MISSING_ENVIRON))
    else:
        if environ_at > 0:
            diags.append(_diag_at(tokens[0], index, CODE_TEXT_BEFORE_ENVIRON))
        has_begin = any(
            t.kind is TokenKind.KEYWORD and t.text == "begin"
            for t in tokens[environ_at + 1 :]
        )
        if not has_begin:
            diags.append(_diag_at(tokens[environ_at], index, CODE_MISSING_BEGIN))
    return sort_diagnostics(diags)


class LabelTable:
    """Block-scoped label visibility: a stack of per-block label sets."""

    def __init__(self) -> None:
        self._scopes: list[set[str]] = [set()]

    def push(self) -> None:
        self._scopes.append(set())

    def pop(self) -> None:
        if len(self._scopes) > 1:
            self._scopes.pop()

    def define(self, name: str) -> None:
        self._scopes[-1].add(name)

    def visible(self, name: str) -> bool:
        return any(name in scope for scope in self._scopes)


def _statement_start(prev: Token | None) -> bool:
    if prev is None:
        return True
    if prev.kind is TokenKind.SYMBOL and prev.text == ";":
        return True
    return prev.kind is TokenKind.KEYWORD and prev.text in _STATEMENT_KEYWORDS


def check_references(stream: TokenStream, index: LineIndex) -> ErrorList:
    """Flag by/from references to labels with no visible definition."""
    tokens = _significant(stream.tokens)
    diags: list[Diagnostic] = []
    table = LabelTable()
    prev: Token | None = None
    i = 0
    n = len(tokens)
    while i < n:
        tok = tokens[i]
        if tok.kind is TokenKind.KEYWORD:
            if tok.text in BLOCK_OPENERS:
                table.push()
            elif tok.text == BLOCK_CLOSER:
                table.pop()
            elif tok.text in ("by", "from"):
                i, prev = _check_reference_list(tokens, i + 1, table, diags, index)
                continue
        elif (
            tok.kind is TokenKind.IDENTIFIER
            and _statement_start(prev)
            and i + 1 < n
            and tokens[i + 1].kind is TokenKind.SYMBOL
            and tokens[i + 1].text == ":"
        ):
            table.define(tok.text)
            prev = tokens[i + 1]
            i += 2
            continue
        prev = tok
        i += 1
    return sort_diagnostics(diags)


def _check_reference_list(
    tokens: list[Token],
    i: int,
    table: LabelTable,
    diags: list[Diagnostic],
    index: LineIndex,
) -> tuple[int, Token | None]:
    """Consume the identifiers after by/from, flagging unresolved labels."""
    prev: Token | None = None
    n = len(tokens)
    while i < n:
        tok = tokens[i]
        if tok.kind is TokenKind.IDENTIFIER:
            # "NAME:3"-style library references are outside our label space.
            if (
                i + 1 < n
                and tokens[i + 1].kind is TokenKind.SYMBOL
                and tokens[i + 1].text == ":"
            ):
                prev = tokens[i + 1]
                i += 2
                if i < n and tokens[i].kind is TokenKind.NUMBER:
                    prev = tokens[i]
                    i += 1
                continue
            if not table.visible(tok.text):
                diags.append(_diag_at(tok, index, CODE_UNDEFINED_LABEL))
        elif not (tok.kind is TokenKind.SYMBOL and tok.text == ","):
            break
        prev = tok
        i += 1
    return i, prev


def _sleep_until(deadline: float, cancel: CancelCheck) -> None:
    # Sleep in slices so a cancel lands well inside the 1 s contract even
    # with large simulated per-line delays.
    while True:
        if cancel():
            raise Canceled()
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return
        time.sleep(min(remaining, 0.05))


def verify_article(
    source: str,
    progress_sink: ProgressSink | None = None,
    cancel: CancelCheck | None = None,
    *,
    line_delay_s: float = 0.0,
) -> ErrorList:
    """Run Parser, Analyzer, and Checker in order; diagnostics sorted.

    Progress is reported at least once per pass and at least every 500
    lines within a pass. `line_delay_s` is an artificial per-line,
    per-pass delay used to simulate long verifications in benchmarks.
    Raises Canceled when the cancellation check fires.
    """
    sink: ProgressSink = progress_sink or (lambda _p: None)
    check_cancel: CancelCheck = cancel or (lambda: False)
    index = line_index(source)
    total = index.line_count()

    def run_pass(name, work):
        pass_start = time.monotonic()
        for line in range(1, total + 1):
            if check_cancel():
                raise Canceled(name)
            if line_delay_s > 0:
                # Pace against a per-pass schedule, not one sleep per line:
                # thousands of tiny sleeps each overshoot a little, which
                # would stretch a simulated 10 s run past 11 s.
                _sleep_until(pass_start + line * line_delay_s, check_cancel)
            if line % PROGRESS_EVERY_LINES == 0 and line != total:
                sink(PassProgress(name, line, total))
        result = work()
        if check_cancel():
            raise Canceled(name)
        sink(PassProgress(name, total, total))
        return result

    stream = run_pass("Parser", lambda: tokenize(source))
    structure = run_pass("Analyzer", lambda: check_structure(stream, index))
    references = run_pass("Checker", lambda: check_references(stream, index))
    return sort_diagnostics(structure + references)
