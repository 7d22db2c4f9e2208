"""Asynchronous job lifecycle: submit, poll, cancel, reap.

Submission validates the request, assigns an unguessable ID, and returns
without waiting for execution; a bounded worker pool drains a FIFO
queue. Status snapshots are safe to read from any thread, cancellation
is cooperative, and finished jobs are kept for a TTL so late polls still
see their terminal state.
"""

from __future__ import annotations

import math
import os
import secrets
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Protocol

from .check import Canceled, PASS_COUNT, PassProgress
from .errfmt import Diagnostic
from .workspace import PathViolationError, RepoRef, ensure_safe_relpath

COMMANDS = frozenset({"verifier", "formatter", "linter"})

DEFAULT_QUEUE_CAP = 100
DEFAULT_MAX_INLINE_BYTES = 2 * 1024 * 1024
DEFAULT_TTL_S = 3600.0

_STDERR_EXCERPT_BYTES = 4096


class ValidationError(Exception):
    """Request rejected before a job is created; `reason` is a stable slug."""

    def __init__(self, reason: str, message: str) -> None:
        self.reason = reason
        super().__init__(message)


class SourceTooLargeError(ValidationError):
    def __init__(self, size: int, limit: int) -> None:
        super().__init__(
            "source_too_large", f"inline source is {size} bytes, cap is {limit}"
        )


class QueueFullError(Exception):
    def __init__(self, cap: int) -> None:
        self.cap = cap
        super().__init__(f"job queue is full ({cap} queued)")


class UnknownJobError(KeyError):
    def __init__(self, job_id: str) -> None:
        self.job_id = job_id
        super().__init__(job_id)


def new_job_id() -> str:
    """128 bits of cryptographic randomness as 32 lowercase hex chars."""
    return secrets.token_hex(16)


@dataclass(frozen=True)
class InlineSource:
    filename: str
    text: str


@dataclass(frozen=True)
class RepoSource:
    repo: RepoRef
    path: str


@dataclass(frozen=True)
class JobRequest:
    command: str
    toolchain_version: str
    source: InlineSource | RepoSource
    options: object | None = None  # FormatConfig for formatter/linter jobs


class JobState(Enum):
    QUEUED = "queued"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    COMPLETED_WITH_ERRORS = "completed_with_errors"
    FAILED = "failed"
    CANCELED = "canceled"

    @property
    def terminal(self) -> bool:
        return self in _TERMINAL


_TERMINAL = frozenset(
    {
        JobState.SUCCEEDED,
        JobState.COMPLETED_WITH_ERRORS,
        JobState.FAILED,
        JobState.CANCELED,
    }
)


@dataclass(frozen=True)
class JobStatus:
    id: str
    state: JobState
    pass_name: str | None
    progress_percent: int
    errors: list[Diagnostic] | None  # populated only in terminal states
    formatted_text: str | None
    failure_reason: str | None
    created_at: float
    finished_at: float | None


class Outcome(Protocol):
    """What a backend run produces; see the tool runner for constructors."""

    kind: str  # "clean" | "diagnostics" | "tool_failure" | "canceled"


@dataclass
class _Job:
    id: str
    request: JobRequest
    state: JobState = JobState.QUEUED
    pass_name: str | None = None
    completed_passes: int = 0
    percent: int = 0
    errors: list[Diagnostic] | None = None
    formatted_text: str | None = None
    failure_reason: str | None = None
    created_at: float = field(default_factory=time.time)
    finished_at: float | None = None
    cancel_event: threading.Event = field(default_factory=threading.Event)
    future: object = None


Executor = Callable[[JobRequest, Callable[[PassProgress], None], Callable[[], bool]], Outcome]


class JobEngine:
    """Shared job registry plus the worker pool that drains it.

    `executor` runs one request to completion and is called on worker
    threads only; `versions` maps toolchain names to their declared
    command sets and is consulted at submit time.
    """

    def __init__(
        self,
        executor: Executor,
        versions: Mapping[str, frozenset[str] | set[str]],
        *,
        worker_count: int | None = None,
        queue_cap: int = DEFAULT_QUEUE_CAP,
        max_inline_bytes: int = DEFAULT_MAX_INLINE_BYTES,
        ttl_s: float = DEFAULT_TTL_S,
        pass_count: int = PASS_COUNT,
    ) -> None:
        self._executor = executor
        self._versions = versions
        self.queue_cap = queue_cap
        self.max_inline_bytes = max_inline_bytes
        self.ttl_s = ttl_s
        self.pass_count = pass_count
        self.worker_count = worker_count or os.cpu_count() or 1
        self._pool = ThreadPoolExecutor(
            max_workers=self.worker_count, thread_name_prefix="job-worker"
        )
        self._lock = threading.Lock()
        self._jobs: dict[str, _Job] = {}

    # -- lifecycle -------------------------------------------------------

    def submit(self, request: JobRequest) -> str:
        self._validate(request)
        with self._lock:
            queued = sum(
                1 for j in self._jobs.values() if j.state is JobState.QUEUED
            )
            if queued >= self.queue_cap:
                raise QueueFullError(self.queue_cap)
            job = _Job(id=new_job_id(), request=request)
            self._jobs[job.id] = job
            job.future = self._pool.submit(self._run, job)
        return job.id

    def status(self, job_id: str) -> JobStatus:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJobError(job_id)
            return JobStatus(
                id=job.id,
                state=job.state,
                pass_name=job.pass_name,
                progress_percent=job.percent,
                errors=list(job.errors) if job.errors is not None else None,
                formatted_text=job.formatted_text,
                failure_reason=job.failure_reason,
                created_at=job.created_at,
                finished_at=job.finished_at,
            )

    def cancel(self, job_id: str) -> bool:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJobError(job_id)
            if job.state.terminal:
                return False
            job.cancel_event.set()
            if job.state is JobState.QUEUED and job.future.cancel():
                self._finish_locked(job, JobState.CANCELED)
            return True

    def reap_expired(self, now: float | None = None) -> int:
        now = time.time() if now is None else now
        removed = 0
        with self._lock:
            for job_id in list(self._jobs):
                job = self._jobs[job_id]
                if (
                    job.state.terminal
                    and job.finished_at is not None
                    and now - job.finished_at > self.ttl_s
                ):
                    del self._jobs[job_id]
                    removed += 1
        return removed

    def shutdown(self) -> None:
        with self._lock:
            for job in self._jobs.values():
                job.cancel_event.set()
        self._pool.shutdown(wait=True, cancel_futures=True)

    # -- progress --------------------------------------------------------

    def report_progress(self, job_id: str, progress: PassProgress) -> int:
        """Fold a per-pass progress event into the job's overall percent."""
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None or job.state.terminal:
                return 0 if job is None else job.percent
            if progress.pass_name != job.pass_name:
                if job.pass_name is not None:
                    job.completed_passes += 1
                job.pass_name = progress.pass_name
            fraction = progress.current / progress.total if progress.total else 0.0
            raw = math.floor(
                100 * (job.completed_passes + fraction) / self.pass_count
            )
            job.percent = max(job.percent, min(raw, 100))
            return job.percent

    # -- internals ---------------------------------------------------------

    def _validate(self, request: JobRequest) -> None:
        declared = self._versions.get(request.toolchain_version)
        if declared is None:
            raise ValidationError(
                "unknown_version",
                f"unknown toolchain version {request.toolchain_version!r}",
            )
        if request.command not in COMMANDS or request.command not in declared:
            raise ValidationError(
                "unknown_command",
                f"toolchain {request.toolchain_version!r} does not declare "
                f"command {request.command!r}",
            )
        source = request.source
        if isinstance(source, InlineSource):
            try:
                pure = ensure_safe_relpath(source.filename)
            except PathViolationError:
                raise ValidationError(
                    "bad_filename", f"unusable filename {source.filename!r}"
                ) from None
            if len(pure.parts) != 1:
                raise ValidationError(
                    "bad_filename", f"filename must be bare: {source.filename!r}"
                )
            size = len(source.text.encode("utf-8"))
            if size > self.max_inline_bytes:
                raise SourceTooLargeError(size, self.max_inline_bytes)
        elif isinstance(source, RepoSource):
            try:
                ensure_safe_relpath(source.path)
            except PathViolationError:
                raise ValidationError(
                    "unsafe_path",
                    f"path escapes the text directory: {source.path!r}",
                ) from None
        else:
            raise ValidationError("bad_source", "unrecognized source kind")

    def _run(self, job: _Job) -> None:
        with self._lock:
            if job.state is not JobState.QUEUED:
                return
            if job.cancel_event.is_set():
                self._finish_locked(job, JobState.CANCELED)
                return
            job.state = JobState.RUNNING

        def sink(progress: PassProgress) -> None:
            self.report_progress(job.id, progress)

        try:
            outcome = self._executor(job.request, sink, job.cancel_event.is_set)
        except Canceled:
            self._finish(job, JobState.CANCELED)
            return
        except Exception as exc:
            self._finish(
                job,
                JobState.FAILED,
                failure_reason=f"{type(exc).__name__}: {exc}",
            )
            return
        self._apply_outcome(job, outcome)

    def _apply_outcome(self, job: _Job, outcome: Outcome) -> None:
        kind = getattr(outcome, "kind", None)
        if kind == "canceled":
            self._finish(job, JobState.CANCELED)
        elif kind == "clean":
            self._finish(
                job,
                JobState.SUCCEEDED,
                errors=[],
                formatted_text=getattr(outcome, "formatted_text", None),
                percent=100,
            )
        elif kind == "diagnostics":
            self._finish(
                job,
                JobState.COMPLETED_WITH_ERRORS,
                errors=list(outcome.errors),
                percent=100,
            )
        elif kind == "tool_failure":
            stderr = getattr(outcome, "stderr_excerpt", "") or ""
            exit_code = getattr(outcome, "exit_code", None)
            reason = f"tool exited with status {exit_code}"
            if stderr:
                reason += ": " + stderr[-_STDERR_EXCERPT_BYTES:]
            self._finish(job, JobState.FAILED, failure_reason=reason)
        else:
            self._finish(
                job,
                JobState.FAILED,
                failure_reason=f"backend returned unrecognized outcome {kind!r}",
            )

    def _finish(
        self,
        job: _Job,
        state: JobState,
        *,
        errors: list[Diagnostic] | None = None,
        formatted_text: str | None = None,
        failure_reason: str | None = None,
        percent: int | None = None,
    ) -> None:
        with self._lock:
            self._finish_locked(
                job,
                state,
                errors=errors,
                formatted_text=formatted_text,
                failure_reason=failure_reason,
                percent=percent,
            )

    def _finish_locked(
        self,
        job: _Job,
        state: JobState,
        *,
        errors: list[Diagnostic] | None = None,
        formatted_text: str | None = None,
        failure_reason: str | None = None,
        percent: int | None = None,
    ) -> None:
        if job.state.terminal:
            return
        job.state = state
        job.errors = errors
        job.formatted_text = formatted_text
        job.failure_reason = failure_reason
        if percent is not None:
            job.percent = max(job.percent, percent)
        job.finished_at = time.time()
