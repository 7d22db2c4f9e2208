"""Repository snapshot materialization and workspace leasing.

A workspace is a server-side directory holding one snapshot of a remote
repository, downloaded as a gzip tarball from an archive URL. Snapshots
are cached by (url template, ref); immutable refs (full commit hashes)
are served from cache without touching the network. Every filesystem
path derived from archive entries or client-supplied relative paths is
confined to the configured workspace area.
"""

from __future__ import annotations

import hashlib
import posixpath
import re
import secrets
import shutil
import tarfile
import tempfile
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

import requests

DEFAULT_MAX_ARCHIVE_BYTES = 200 * 1024 * 1024
_DOWNLOAD_TIMEOUT_S = 60.0
_CHUNK = 64 * 1024

# Hosts for which plain http is tolerated (test fixtures); everything
# else must be https.
_LOOPBACK_HOSTS = frozenset({"localhost", "127.0.0.1", "::1", "[::1]"})

_IMMUTABLE_REF_RE = re.compile(r"[0-9a-f]{40}|[0-9a-f]{64}")


class WorkspaceError(Exception):
    """Base class for workspace failures."""


class DownloadError(WorkspaceError):
    def __init__(self, url: str, status: int | None, detail: str = "") -> None:
        self.url = url
        self.status = status
        label = f"HTTP {status}" if status is not None else "transport error"
        super().__init__(f"archive download failed ({label}): {url} {detail}".rstrip())


class ArchiveTooLargeError(WorkspaceError):
    def __init__(self, limit: int) -> None:
        self.limit = limit
        super().__init__(f"archive exceeds size cap of {limit} bytes")


class CorruptArchiveError(WorkspaceError):
    pass


class UnsafeEntryError(WorkspaceError):
    """An archive entry would escape the extraction target."""

    def __init__(self, entry: str, reason: str) -> None:
        self.entry = entry
        self.reason = reason
        super().__init__(f"unsafe archive entry {entry!r}: {reason}")


class PathViolationError(WorkspaceError):
    def __init__(self, path: str) -> None:
        self.path = path
        super().__init__(f"path escapes the workspace text directory: {path!r}")


class ArticleNotFoundError(WorkspaceError):
    def __init__(self, path: str) -> None:
        self.path = path
        super().__init__(f"no such article in workspace: {path!r}")


class WorkspaceBusyError(WorkspaceError):
    def __init__(self, root: Path) -> None:
        self.root = root
        super().__init__(f"workspace is leased by another job: {root}")


def ensure_safe_relpath(rel: str) -> PurePosixPath:
    """Lexical confinement check for client-supplied relative paths."""
    if not rel or "\x00" in rel or "\\" in rel:
        raise PathViolationError(rel)
    pure = PurePosixPath(rel)
    if pure.is_absolute():
        raise PathViolationError(rel)
    # PurePosixPath drops "." components, so a bare "." leaves no parts.
    if not pure.parts or any(part == ".." for part in pure.parts):
        raise PathViolationError(rel)
    return pure


@dataclass(frozen=True)
class RepoRef:
    """Where to fetch a repository snapshot from.

    `archive_url_template` contains a literal "{ref}" placeholder; the
    ref is percent-encoded before substitution so it can never introduce
    path separators into the URL.
    """

    archive_url_template: str
    ref: str
    auth_token: str | None = None

    def __post_init__(self) -> None:
        parsed = urllib.parse.urlsplit(self.archive_url_template)
        if parsed.scheme != "https" and not (
            parsed.scheme == "http" and parsed.hostname in _LOOPBACK_HOSTS
        ):
            raise ValueError(
                f"archive URL must be https: {self.archive_url_template!r}"
            )
        if "{ref}" not in self.archive_url_template:
            raise ValueError("archive URL template lacks a {ref} placeholder")
        if not self.ref.strip():
            raise ValueError("ref must be nonempty")

    def archive_url(self) -> str:
        quoted = urllib.parse.quote(self.ref, safe="")
        return self.archive_url_template.replace("{ref}", quoted)

    def is_immutable(self) -> bool:
        """Full commit hashes never change content; branches and tags may."""
        return _IMMUTABLE_REF_RE.fullmatch(self.ref) is not None

    def cache_key(self) -> str:
        material = f"{self.archive_url_template}\n{self.ref}".encode("utf-8")
        return hashlib.sha256(material).hexdigest()


@dataclass
class Workspace:
    root: Path
    origin: RepoRef | None = None
    resolved_commit: str | None = None

    @property
    def text_dir(self) -> Path:
        return self.root / "text"


class Lease:
    """Exclusive hold on one workspace root; release exactly once."""

    def __init__(self, lock: threading.Lock, root: Path) -> None:
        self._lock = lock
        self.root = root
        self._released = False

    def release(self) -> None:
        if not self._released:
            self._released = True
            self._lock.release()

    def __enter__(self) -> "Lease":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.release()


@dataclass
class _CacheSlot:
    lock: threading.Lock = field(default_factory=threading.Lock)
    completed_at: float | None = None


class WorkspaceArea:
    """Owns the on-disk layout: cache/<key>/ snapshots plus job scratch dirs."""

    def __init__(
        self,
        base_dir: Path | str,
        *,
        max_archive_bytes: int = DEFAULT_MAX_ARCHIVE_BYTES,
        max_age_s: float = 0.0,
        ca_bundle: str | None = None,
        session: requests.Session | None = None,
    ) -> None:
        self.base_dir = Path(base_dir).resolve()
        self.cache_dir = self.base_dir / "cache"
        self.scratch_dir = self.base_dir / "jobs"
        self.max_archive_bytes = max_archive_bytes
        self.max_age_s = max_age_s
        self._ca_bundle = ca_bundle
        self._session = session or requests.Session()
        self._registry_lock = threading.Lock()
        self._slots: dict[str, _CacheSlot] = {}
        self._leases: dict[str, threading.Lock] = {}
        for directory in (self.cache_dir, self.scratch_dir):
            directory.mkdir(parents=True, exist_ok=True)

    # -- materialization ------------------------------------------------

    def materialize(self, repo: RepoRef) -> Workspace:
        key = repo.cache_key()
        target = self.cache_dir / key
        slot = self._slot(key)
        entered_at = time.time()
        with slot.lock:
            if self._cache_fresh(repo, slot, target, entered_at):
                return self._workspace_for(repo, target)
            self._download_and_extract(repo, target)
            slot.completed_at = time.time()
            return self._workspace_for(repo, target)

    def fresh_workspace(self) -> Workspace:
        """Throwaway workspace for inline sources; never contended."""
        root = self.scratch_dir / secrets.token_hex(8)
        (root / "text").mkdir(parents=True)
        return Workspace(root=root)

    def discard(self, ws: Workspace) -> None:
        """Remove a throwaway workspace; cached snapshots are kept."""
        root = ws.root.resolve()
        if root.is_relative_to(self.scratch_dir):
            shutil.rmtree(root, ignore_errors=True)

    def _slot(self, key: str) -> _CacheSlot:
        with self._registry_lock:
            return self._slots.setdefault(key, _CacheSlot())

    def _cache_fresh(
        self, repo: RepoRef, slot: _CacheSlot, target: Path, entered_at: float
    ) -> bool:
        marker = target / ".materialized"
        if not marker.exists():
            return False
        if repo.is_immutable():
            return True
        completed = slot.completed_at
        if completed is None:
            try:
                completed = float(marker.read_text().strip())
            except ValueError:
                return False
            slot.completed_at = completed
        # A download that finished while we waited on the slot lock
        # satisfies this call (concurrent calls coalesce); otherwise the
        # snapshot must be within the configured staleness budget.
        if completed >= entered_at:
            return True
        return time.time() - completed <= self.max_age_s

    def _workspace_for(self, repo: RepoRef, target: Path) -> Workspace:
        (target / "text").mkdir(exist_ok=True)
        commit = repo.ref if repo.is_immutable() else None
        return Workspace(root=target, origin=repo, resolved_commit=commit)

    def _download_and_extract(self, repo: RepoRef, target: Path) -> None:
        url = repo.archive_url()
        headers = {}
        if repo.auth_token:
            headers["Authorization"] = f"Bearer {repo.auth_token}"
        with tempfile.TemporaryFile(dir=self.base_dir) as spool:
            try:
                response = self._session.get(
                    url,
                    headers=headers,
                    stream=True,
                    timeout=_DOWNLOAD_TIMEOUT_S,
                    verify=self._ca_bundle if self._ca_bundle else True,
                )
            except requests.RequestException as exc:
                raise DownloadError(url, None, str(exc)) from exc
            with response:
                if response.status_code != 200:
                    raise DownloadError(url, response.status_code)
                declared = response.headers.get("Content-Length")
                if declared and declared.isdigit():
                    if int(declared) > self.max_archive_bytes:
                        raise ArchiveTooLargeError(self.max_archive_bytes)
                total = 0
                for chunk in response.iter_content(_CHUNK):
                    total += len(chunk)
                    if total > self.max_archive_bytes:
                        raise ArchiveTooLargeError(self.max_archive_bytes)
                    spool.write(chunk)
            spool.seek(0)
            staging = Path(
                tempfile.mkdtemp(prefix=".extract-", dir=self.cache_dir)
            )
            try:
                _extract_archive(spool, staging)
                (staging / "text").mkdir(exist_ok=True)
                (staging / ".materialized").write_text(str(time.time()))
                if target.exists():
                    shutil.rmtree(target)
                staging.rename(target)
            except BaseException:
                shutil.rmtree(staging, ignore_errors=True)
                raise

    # -- leasing and path resolution -------------------------------------

    def lease(self, ws: Workspace, timeout_s: float | None = None) -> Lease:
        """Exclusive lease on the workspace root; blocks until granted.

        With a timeout, raises WorkspaceBusyError when it expires.
        """
        root_key = str(ws.root.resolve())
        with self._registry_lock:
            lock = self._leases.setdefault(root_key, threading.Lock())
        if timeout_s is None:
            lock.acquire()
        elif not lock.acquire(timeout=timeout_s):
            raise WorkspaceBusyError(ws.root)
        return Lease(lock, ws.root)

    def locate_article(self, ws: Workspace, rel: str) -> Path:
        pure = ensure_safe_relpath(rel)
        text_root = ws.text_dir.resolve()
        candidate = (text_root / pure).resolve()
        if not candidate.is_relative_to(text_root):
            raise PathViolationError(rel)
        if not candidate.is_file():
            raise ArticleNotFoundError(rel)
        return candidate


# -- archive extraction ----------------------------------------------------


def _extract_archive(fileobj, target: Path) -> None:
    try:
        with tarfile.open(fileobj=fileobj, mode="r:gz") as tar:
            members = tar.getmembers()
            for member in members:
                _check_name(member)
            prefix = _common_top_dir(members)
            for member in members:
                name = _strip_prefix(member.name, prefix)
                if name is None:
                    continue
                _check_entry(member, name)
                member.name = name
                tar.extract(member, path=target, filter="data")
    except tarfile.TarError as exc:
        raise CorruptArchiveError(f"unreadable archive: {exc}") from exc
    except EOFError as exc:
        raise CorruptArchiveError("truncated archive") from exc


def _check_name(member: tarfile.TarInfo) -> None:
    name = member.name
    if name.startswith("/") or (len(name) > 1 and name[1] == ":"):
        raise UnsafeEntryError(name, "absolute path")
    if ".." in PurePosixPath(name).parts:
        raise UnsafeEntryError(name, "path traversal")


def _common_top_dir(members: list[tarfile.TarInfo]) -> str | None:
    """Single shared top-level directory, if the archive has one.

    Forge-style archives wrap everything in "<repo>-<ref>/"; that wrapper
    is stripped. An archive whose only top entry is "text" is already in
    workspace layout, so it is deliberately not treated as a wrapper.
    """
    tops = set()
    for member in members:
        normalized = member.name.strip("/")
        if not normalized:
            continue
        tops.add(normalized.split("/", 1)[0])
    if len(tops) != 1:
        return None
    top = tops.pop()
    if top == "text":
        return None
    return top


def _strip_prefix(name: str, prefix: str | None) -> str | None:
    normalized = name.strip("/")
    if prefix is None:
        return normalized or None
    if normalized == prefix:
        return None
    if normalized.startswith(prefix + "/"):
        return normalized[len(prefix) + 1 :] or None
    return normalized or None


def _check_entry(member: tarfile.TarInfo, name: str) -> None:
    if member.ischr() or member.isblk() or member.isfifo():
        raise UnsafeEntryError(member.name, "device or fifo entry")
    if member.issym():
        link_target = posixpath.normpath(
            posixpath.join(posixpath.dirname(name), member.linkname)
        )
        if member.linkname.startswith("/") or link_target.startswith(".."):
            raise UnsafeEntryError(member.name, "symlink points outside archive")
    elif member.islnk():
        link = posixpath.normpath(member.linkname)
        if link.startswith("/") or link.startswith(".."):
            raise UnsafeEntryError(member.name, "hardlink points outside archive")
