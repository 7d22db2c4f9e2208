"""HTTP client for the job API: submit, poll, cancel, format, lint.

Raises TransportError for network-level failures and RequestFailed for
HTTP error responses; both carry enough context for the CLI's exit-code
mapping. Polling honors the configured interval, not the server hint,
so scripts keep deterministic timing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import requests

DEFAULT_POLL_INTERVAL_MS = 500
MIN_POLL_INTERVAL_MS = 50

TERMINAL_STATES = frozenset(
    {"succeeded", "completed_with_errors", "failed", "canceled"}
)


class ClientError(Exception):
    pass


class TransportError(ClientError):
    """Connection-level failure: DNS, refused, TLS, timeout."""


class RequestFailed(ClientError):
    """HTTP error response with the server's machine-readable reason."""

    def __init__(self, status: int, reason: str, detail: str) -> None:
        self.status = status
        self.reason = reason
        self.detail = detail
        super().__init__(f"HTTP {status} ({reason}): {detail}")


class WaitTimeout(ClientError):
    def __init__(self, job_id: str, timeout_s: float) -> None:
        self.job_id = job_id
        super().__init__(f"job {job_id} still running after {timeout_s:.0f}s")


@dataclass(frozen=True)
class ClientConfig:
    server_url: str
    token: str
    poll_interval_ms: int = DEFAULT_POLL_INTERVAL_MS
    timeout_s: float = 600.0
    toolchain_version: str = "builtin-1.0"
    ca_bundle: str | None = None

    def __post_init__(self) -> None:
        if self.poll_interval_ms < MIN_POLL_INTERVAL_MS:
            raise ValueError(
                f"poll_interval_ms must be >= {MIN_POLL_INTERVAL_MS}, "
                f"got {self.poll_interval_ms}"
            )


class ApiClient:
    def __init__(self, config: ClientConfig) -> None:
        self.config = config
        self._base = config.server_url.rstrip("/")
        self._session = requests.Session()
        self._session.headers["Authorization"] = f"Bearer {config.token}"

    def close(self) -> None:
        self._session.close()

    def _request(self, method: str, path: str, **kwargs) -> requests.Response:
        if self.config.ca_bundle:
            # Request-level verify, not session-level: requests lets
            # REQUESTS_CA_BUNDLE in the environment override the session
            # attribute, and an explicit bundle must win over both.
            kwargs.setdefault("verify", self.config.ca_bundle)
        try:
            response = self._session.request(
                method, self._base + path, timeout=30, **kwargs
            )
        except requests.RequestException as exc:
            raise TransportError(f"cannot reach {self._base}: {exc}") from exc
        if response.status_code >= 400:
            try:
                body = response.json()
                reason = body.get("reason", "error")
                detail = body.get("detail", response.text)
            except ValueError:
                reason, detail = "error", response.text
            raise RequestFailed(response.status_code, reason, detail)
        return response

    # -- jobs ------------------------------------------------------------

    def submit(self, request_doc: dict) -> str:
        response = self._request("POST", "/api/v1/jobs", json=request_doc)
        return response.json()["job_id"]

    def submit_inline(
        self,
        filename: str,
        text: str,
        command: str = "verifier",
        options: Optional[dict] = None,
    ) -> str:
        doc = {
            "command": command,
            "toolchain_version": self.config.toolchain_version,
            "source": {"kind": "inline", "filename": filename, "text": text},
        }
        if options is not None:
            doc["options"] = options
        return self.submit(doc)

    def submit_repo(
        self,
        archive_url_template: str,
        ref: str,
        path: str,
        command: str = "verifier",
        auth_token: Optional[str] = None,
    ) -> str:
        doc = {
            "command": command,
            "toolchain_version": self.config.toolchain_version,
            "source": {
                "kind": "repo",
                "archive_url_template": archive_url_template,
                "ref": ref,
                "auth_token": auth_token,
                "path": path,
            },
        }
        return self.submit(doc)

    def status(self, job_id: str) -> dict:
        return self._request("GET", f"/api/v1/jobs/{job_id}").json()

    def cancel(self, job_id: str) -> bool:
        return self._request("DELETE", f"/api/v1/jobs/{job_id}").json()["canceled"]

    def wait(
        self,
        job_id: str,
        on_status: Optional[Callable[[dict], None]] = None,
        timeout_s: Optional[float] = None,
    ) -> dict:
        """Poll until terminal; cancels the job when the timeout expires."""
        deadline = None
        if timeout_s is None:
            timeout_s = self.config.timeout_s
        if timeout_s > 0:
            deadline = time.monotonic() + timeout_s
        interval = self.config.poll_interval_ms / 1000.0
        while True:
            status = self.status(job_id)
            if on_status is not None:
                on_status(status)
            if status["state"] in TERMINAL_STATES:
                return status
            if deadline is not None and time.monotonic() >= deadline:
                try:
                    self.cancel(job_id)
                except ClientError:
                    pass
                raise WaitTimeout(job_id, timeout_s)
            time.sleep(interval)

    # -- synchronous helpers ----------------------------------------------

    def versions(self) -> list[dict]:
        return self._request("GET", "/api/v1/versions").json()["versions"]

    def format_text(self, text: str, options: Optional[dict] = None) -> str:
        doc: dict = {"text": text}
        if options is not None:
            doc["options"] = options
        return self._request("POST", "/api/v1/format", json=doc).json()["formatted"]

    def lint_text(self, text: str, options: Optional[dict] = None) -> list[dict]:
        doc: dict = {"text": text}
        if options is not None:
            doc["options"] = options
        return self._request("POST", "/api/v1/lint", json=doc).json()["errors"]

    def healthz(self) -> bool:
        verify = self.config.ca_bundle or True
        try:
            response = self._session.get(
                self._base + "/healthz", timeout=5, verify=verify
            )
        except requests.RequestException:
            return False
        return response.status_code == 200
