"""Executes jobs against a toolchain backend and normalizes the result.

Two backends exist. The builtin one runs the in-process verifier,
formatter, and linter. The external one spawns a configured binary in
the workspace directory, parses progress lines from its stdout, and
reads diagnostics from the ".err" file it leaves beside the article.
External formatters are expected to rewrite the article file in place;
the rewritten text is returned as the job's formatted output.
"""

from __future__ import annotations

import os
import re
import signal
import subprocess
import threading
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path, PurePosixPath
from queue import Empty, Queue
from typing import Callable, Iterable, Mapping

from .check import Canceled, PassProgress, verify_article
from .errfmt import ErrorList, ErrParseError, parse_err
from .formatting import FormatConfig, format_source, lint
from .jobs import InlineSource, JobRequest, RepoSource, ValidationError
from .workspace import Workspace, WorkspaceArea, WorkspaceBusyError

BUILTIN = "builtin"

DEFAULT_PROGRESS_PATTERN = r"^PASS (?P<pass>\S+) (?P<current>\d+)/(?P<total>\d+)$"

_REQUIRED_GROUPS = frozenset({"pass", "current", "total"})
_STDERR_CAP = 4096
_CANCEL_POLL_S = 0.05
_LEASE_POLL_S = 0.25

ProgressSink = Callable[[PassProgress], object]
CancelCheck = Callable[[], bool]

CLEAN = "clean"
DIAGNOSTICS = "diagnostics"
TOOL_FAILURE = "tool_failure"
CANCELED = "canceled"


@dataclass(frozen=True)
class ToolOutcome:
    kind: str
    errors: ErrorList = field(default_factory=list)
    exit_code: int | None = None
    stderr_excerpt: str = ""
    formatted_text: str | None = None


def _clean(formatted_text: str | None = None) -> ToolOutcome:
    return ToolOutcome(kind=CLEAN, formatted_text=formatted_text)


def _diagnostics(errors: ErrorList) -> ToolOutcome:
    return ToolOutcome(kind=DIAGNOSTICS, errors=errors)


def _failure(exit_code: int | None, stderr_excerpt: str) -> ToolOutcome:
    return ToolOutcome(
        kind=TOOL_FAILURE,
        exit_code=exit_code,
        stderr_excerpt=stderr_excerpt[-_STDERR_CAP:],
    )


_CANCELED_OUTCOME = ToolOutcome(kind=CANCELED)


@lru_cache(maxsize=64)
def _compiled(pattern: str) -> re.Pattern[str]:
    return re.compile(pattern)


@dataclass(frozen=True)
class ToolchainVersion:
    """One runnable toolchain: either the builtin backend or a binary.

    `commands` maps a command name to the literal string "builtin" or to
    an argv template whose "{article}" placeholder is replaced with the
    article path relative to the working directory. `line_delay_s` slows
    the builtin verifier down by that much per line per pass, which the
    latency harness uses to simulate long verifications.
    """

    name: str
    commands: Mapping[str, str | tuple[str, ...]]
    progress_pattern: str = DEFAULT_PROGRESS_PATTERN
    err_suffix: str = ".err"
    prelude_dir: str | None = None
    line_delay_s: float = 0.0

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("toolchain name must be nonempty")
        if not self.commands:
            raise ValueError(f"toolchain {self.name!r} declares no commands")
        for command, spec in self.commands.items():
            if spec == BUILTIN:
                continue
            if not isinstance(spec, tuple) or not spec or not spec[0]:
                raise ValueError(
                    f"toolchain {self.name!r} command {command!r} needs an "
                    f"executable path or the string 'builtin'"
                )
        groups = set(_compiled(self.progress_pattern).groupindex)
        if groups != _REQUIRED_GROUPS:
            raise ValueError(
                f"progress pattern must capture exactly {sorted(_REQUIRED_GROUPS)}, "
                f"got {sorted(groups)}"
            )
        if not self.err_suffix.startswith("."):
            raise ValueError(f"err suffix must start with '.': {self.err_suffix!r}")

    def is_builtin(self, command: str) -> bool:
        return self.commands.get(command) == BUILTIN


@dataclass(frozen=True)
class ToolInvocation:
    version: ToolchainVersion
    command: str
    working_dir: Path
    article_path: str  # relative to working_dir, under text/

    def __post_init__(self) -> None:
        parts = PurePosixPath(self.article_path).parts
        if not parts or parts[0] != "text":
            raise ValueError(
                f"article path must live under text/: {self.article_path!r}"
            )


class ToolchainRegistry:
    def __init__(self, versions: Iterable[ToolchainVersion]) -> None:
        self._versions = {v.name: v for v in versions}
        if not self._versions:
            raise ValueError("toolchain registry must declare at least one version")

    def names(self) -> list[str]:
        return sorted(self._versions)

    def get(self, name: str) -> ToolchainVersion | None:
        return self._versions.get(name)

    def command_map(self) -> dict[str, frozenset[str]]:
        return {
            name: frozenset(version.commands)
            for name, version in self._versions.items()
        }

    def resolve(self, version_name: str, command: str) -> ToolchainVersion:
        version = self._versions.get(version_name)
        if version is None:
            raise ValidationError(
                "unknown_version", f"unknown toolchain version {version_name!r}"
            )
        if command not in version.commands:
            raise ValidationError(
                "unknown_command",
                f"toolchain {version_name!r} does not declare {command!r}",
            )
        return version


def builtin_toolchain(
    name: str = "builtin-1.0", line_delay_s: float = 0.0
) -> ToolchainVersion:
    return ToolchainVersion(
        name=name,
        commands={"verifier": BUILTIN, "formatter": BUILTIN, "linter": BUILTIN},
        line_delay_s=line_delay_s,
    )


def parse_progress_line(
    line: str, pattern: str | re.Pattern[str]
) -> PassProgress | None:
    compiled = _compiled(pattern) if isinstance(pattern, str) else pattern
    match = compiled.search(line)
    if match is None:
        return None
    total = int(match.group("total"))
    if total == 0:
        return None
    return PassProgress(
        pass_name=match.group("pass"),
        current=int(match.group("current")),
        total=total,
    )


def run(
    inv: ToolInvocation,
    progress_sink: ProgressSink,
    cancel: CancelCheck,
    *,
    options: FormatConfig | None = None,
) -> ToolOutcome:
    """Blocking single-job execution in a materialized workspace."""
    if inv.version.is_builtin(inv.command):
        return _run_builtin(inv, progress_sink, cancel, options)
    return _run_external(inv, progress_sink, cancel)


def _run_builtin(
    inv: ToolInvocation,
    progress_sink: ProgressSink,
    cancel: CancelCheck,
    options: FormatConfig | None,
) -> ToolOutcome:
    article = inv.working_dir / inv.article_path
    try:
        source = article.read_text(encoding="utf-8")
    except FileNotFoundError:
        return _failure(None, f"article not found: {inv.article_path}")
    except UnicodeDecodeError as exc:
        return _failure(None, f"article is not valid UTF-8: {exc}")
    try:
        if inv.command == "verifier":
            errors = verify_article(
                source,
                progress_sink,
                cancel,
                line_delay_s=inv.version.line_delay_s,
            )
            return _diagnostics(errors) if errors else _clean()
        if inv.command == "formatter":
            formatted = format_source(source, options)
            return _clean(formatted_text=formatted)
        if inv.command == "linter":
            errors = lint(source, options)
            return _diagnostics(errors) if errors else _clean()
    except Canceled:
        return _CANCELED_OUTCOME
    return _failure(None, f"builtin backend has no command {inv.command!r}")


def _argv(inv: ToolInvocation) -> list[str]:
    template = inv.version.commands[inv.command]
    assert isinstance(template, tuple)
    return [part.replace("{article}", inv.article_path) for part in template]


def _err_path(inv: ToolInvocation) -> Path:
    rel = PurePosixPath(inv.article_path)
    return inv.working_dir / rel.with_suffix(inv.version.err_suffix)


def _run_external(
    inv: ToolInvocation, progress_sink: ProgressSink, cancel: CancelCheck
) -> ToolOutcome:
    err_file = _err_path(inv)
    err_file.unlink(missing_ok=True)
    try:
        proc = subprocess.Popen(
            _argv(inv),
            cwd=inv.working_dir,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            errors="replace",
            start_new_session=True,
        )
    except OSError as exc:
        return _failure(None, f"failed to spawn tool: {exc}")

    lines: Queue[str | None] = Queue()
    stderr_tail: deque[str] = deque(maxlen=64)

    def read_stdout() -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            lines.put(line.rstrip("\r\n"))
        lines.put(None)

    def read_stderr() -> None:
        assert proc.stderr is not None
        for line in proc.stderr:
            stderr_tail.append(line)

    readers = [
        threading.Thread(target=read_stdout, daemon=True),
        threading.Thread(target=read_stderr, daemon=True),
    ]
    for reader in readers:
        reader.start()

    pattern = _compiled(inv.version.progress_pattern)
    canceled = False
    stdout_done = False
    while True:
        if not canceled and cancel():
            canceled = True
            _kill_process_group(proc)
        try:
            line = lines.get(timeout=_CANCEL_POLL_S)
        except Empty:
            if proc.poll() is not None and stdout_done:
                break
            continue
        if line is None:
            stdout_done = True
            if proc.poll() is not None:
                break
            continue
        progress = parse_progress_line(line, pattern)
        if progress is not None:
            progress_sink(progress)

    exit_code = proc.wait()
    for reader in readers:
        reader.join(timeout=5)
    if canceled:
        return _CANCELED_OUTCOME

    err_data = err_file.read_bytes() if err_file.exists() else b""
    stderr_text = "".join(stderr_tail)[-_STDERR_CAP:]
    if err_data.strip():
        try:
            errors = parse_err(err_data)
        except ErrParseError as exc:
            return _failure(exit_code, f"unreadable diagnostics file: {exc}")
        return _diagnostics(errors)
    if exit_code != 0:
        return _failure(exit_code, stderr_text)
    if inv.command == "formatter":
        formatted = (inv.working_dir / inv.article_path).read_text(encoding="utf-8")
        return _clean(formatted_text=formatted)
    return _clean()


def _kill_process_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


# -- request execution ------------------------------------------------------


def execute_request(
    request: JobRequest,
    progress_sink: ProgressSink,
    cancel: CancelCheck,
    *,
    area: WorkspaceArea,
    registry: ToolchainRegistry,
) -> ToolOutcome:
    """Engine-facing entry point: source staging, leasing, then run()."""
    version = registry.resolve(request.toolchain_version, request.command)
    options = request.options if isinstance(request.options, FormatConfig) else None

    source = request.source
    if isinstance(source, InlineSource):
        ws = area.fresh_workspace()
        try:
            (ws.text_dir / source.filename).write_text(
                source.text, encoding="utf-8"
            )
            inv = ToolInvocation(
                version=version,
                command=request.command,
                working_dir=ws.root,
                article_path=f"text/{source.filename}",
            )
            return run(inv, progress_sink, cancel, options=options)
        finally:
            area.discard(ws)

    ws = area.materialize(source.repo)
    lease = _lease_or_cancel(area, ws, cancel)
    if lease is None:
        return _CANCELED_OUTCOME
    try:
        article = area.locate_article(ws, source.path)
        inv = ToolInvocation(
            version=version,
            command=request.command,
            working_dir=ws.root,
            article_path=article.relative_to(ws.root).as_posix(),
        )
        return run(inv, progress_sink, cancel, options=options)
    finally:
        lease.release()


def _lease_or_cancel(area: WorkspaceArea, ws: Workspace, cancel: CancelCheck):
    # Block until the workspace frees up, but keep watching the cancel
    # flag so a canceled job never sits in the lease queue.
    while True:
        try:
            return area.lease(ws, timeout_s=_LEASE_POLL_S)
        except WorkspaceBusyError:
            if cancel():
                return None
