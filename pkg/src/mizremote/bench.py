"""Local-versus-remote latency comparison for the builtin verifier.

The harness generates a well-formed article, slows the builtin verifier
by an artificial per-line delay so one run takes a chosen number of
seconds, then times the same verification two ways: calling the verifier
in-process ("local") and driving a loopback server through the full
submit/poll protocol ("remote"). The difference is the protocol and
synchronization overhead. Repo-archive mode additionally serves the
article as a tarball from a local fixture endpoint so materialization
cost is included.
"""

from __future__ import annotations

import gzip
import http.server
import io
import socket
import statistics
import tarfile
import tempfile
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator

import uvicorn

from .articlegen import well_formed_article
from .check import PASS_COUNT, verify_article
from .client import ApiClient, ClientConfig
from .server import ServerConfig, create_app
from .toolchain import builtin_toolchain

SOURCE_MODES = ("inline", "repo-archive")

_SERVER_START_TIMEOUT_S = 15.0


@dataclass(frozen=True)
class Scenario:
    article_lines: int
    simulated_verify_seconds: float
    poll_interval_ms: int
    source_mode: str = "inline"
    repetitions: int = 3
    # Simulated network latency per archive fetch (repo-archive mode only).
    archive_delay_s: float = 0.0

    def __post_init__(self) -> None:
        if self.article_lines < 3:
            raise ValueError("article_lines must be >= 3")
        if self.simulated_verify_seconds < 0:
            raise ValueError("simulated_verify_seconds must be >= 0")
        if self.poll_interval_ms <= 0:
            raise ValueError("poll_interval_ms must be positive")
        if self.source_mode not in SOURCE_MODES:
            raise ValueError(f"source_mode must be one of {SOURCE_MODES}")
        if self.repetitions < 3:
            raise ValueError("repetitions must be >= 3")
        if self.archive_delay_s < 0:
            raise ValueError("archive_delay_s must be >= 0")


@dataclass(frozen=True)
class Stats:
    median: float
    minimum: float
    maximum: float

    @classmethod
    def from_samples(cls, samples: list[float]) -> "Stats":
        return cls(
            median=statistics.median(samples),
            minimum=min(samples),
            maximum=max(samples),
        )


@dataclass(frozen=True)
class Measurement:
    scenario: Scenario
    local: Stats
    remote: Stats
    local_runs: tuple[float, ...]
    remote_runs: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(t <= 0 for t in self.local_runs + self.remote_runs):
            raise ValueError("measured times must be positive")

    @property
    def overhead_seconds(self) -> float:
        return self.remote.median - self.local.median


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@contextmanager
def local_server(config: ServerConfig) -> Iterator[str]:
    """Run the API app on a loopback uvicorn server in a thread."""
    app = create_app(config)
    uv_config = uvicorn.Config(
        app, host=config.bind, port=config.port, log_level="warning"
    )
    server = uvicorn.Server(uv_config)
    thread = threading.Thread(target=server.run, daemon=True, name="bench-server")
    thread.start()
    deadline = time.monotonic() + _SERVER_START_TIMEOUT_S
    while not server.started:
        if time.monotonic() > deadline or not thread.is_alive():
            raise RuntimeError("loopback server failed to start")
        time.sleep(0.01)
    try:
        yield f"http://{config.bind}:{config.port}"
    finally:
        server.should_exit = True
        thread.join(timeout=10)


class ArticleArchiveServer:
    """Serves one in-memory tarball for any /archive/ GET; counts hits.

    `response_delay_s` stalls each response to stand in for network
    latency between the service and the repository host.
    """

    def __init__(
        self,
        files: dict[str, str],
        top_dir: str = "repo-main",
        response_delay_s: float = 0.0,
    ) -> None:
        buffer = io.BytesIO()
        with tarfile.open(fileobj=buffer, mode="w") as tar:
            for rel, text in files.items():
                payload = text.encode("utf-8")
                info = tarfile.TarInfo(name=f"{top_dir}/{rel}")
                info.size = len(payload)
                tar.addfile(info, io.BytesIO(payload))
        self.payload = gzip.compress(buffer.getvalue())
        self.response_delay_s = response_delay_s
        self.hits = 0
        self._httpd: http.server.ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def start(self) -> str:
        fixture = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_GET(self) -> None:
                fixture.hits += 1
                if fixture.response_delay_s > 0:
                    time.sleep(fixture.response_delay_s)
                self.send_response(200)
                self.send_header("Content-Type", "application/gzip")
                self.send_header("Content-Length", str(len(fixture.payload)))
                self.end_headers()
                self.wfile.write(fixture.payload)

            def log_message(self, *args: object) -> None:
                pass

        self._httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, daemon=True, name="archive-fixture"
        )
        self._thread.start()
        port = self._httpd.server_address[1]
        return f"http://127.0.0.1:{port}/archive/{{ref}}.tar.gz"

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "ArticleArchiveServer":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.stop()


def line_delay_for(scenario: Scenario) -> float:
    """Per-line, per-pass delay that sums to the simulated duration."""
    return scenario.simulated_verify_seconds / (PASS_COUNT * scenario.article_lines)


def run_scenario(scenario: Scenario, seed: int = 0) -> Measurement:
    article = well_formed_article(scenario.article_lines, seed=seed)
    delay = line_delay_for(scenario)
    token = "bench-token"
    with tempfile.TemporaryDirectory(prefix="mizremote-bench-") as workdir:
        config = ServerConfig(
            port=free_port(),
            api_tokens=(token,),
            workspace_dir=workdir,
            toolchains=(builtin_toolchain(line_delay_s=delay),),
        )
        with local_server(config) as base_url:
            client = ApiClient(
                ClientConfig(
                    server_url=base_url,
                    token=token,
                    poll_interval_ms=scenario.poll_interval_ms,
                    timeout_s=max(600.0, scenario.simulated_verify_seconds * 5 + 60),
                )
            )
            try:
                if scenario.source_mode == "repo-archive":
                    fixture = ArticleArchiveServer(
                        {"text/article.miz": article},
                        response_delay_s=scenario.archive_delay_s,
                    )
                    with fixture:
                        url_template = fixture.start()
                        return _measure(
                            scenario, article, delay, client, url_template
                        )
                return _measure(scenario, article, delay, client, None)
            finally:
                client.close()


def _measure(
    scenario: Scenario,
    article: str,
    delay: float,
    client: ApiClient,
    url_template: str | None,
) -> Measurement:
    local_runs: list[float] = []
    remote_runs: list[float] = []
    # Warm-up pass (no delay, untimed): the first verification of a large
    # article pays one-off allocator and code warm-up costs that would
    # otherwise bias the first local sample.
    verify_article(article)
    for _ in range(scenario.repetitions):
        start = time.perf_counter()
        verify_article(article, line_delay_s=delay)
        local_runs.append(time.perf_counter() - start)

        start = time.perf_counter()
        if url_template is None:
            job_id = client.submit_inline("bench.miz", article)
        else:
            # A mutable ref keeps the archive fetch inside every repetition.
            job_id = client.submit_repo(url_template, ref="main", path="article.miz")
        final = client.wait(job_id)
        remote_runs.append(time.perf_counter() - start)
        if final["state"] != "succeeded":
            raise RuntimeError(f"benchmark job ended {final['state']!r}")
    return Measurement(
        scenario=scenario,
        local=Stats.from_samples(local_runs),
        remote=Stats.from_samples(remote_runs),
        local_runs=tuple(local_runs),
        remote_runs=tuple(remote_runs),
    )


CSV_COLUMNS = (
    "article_lines",
    "simulated_verify_seconds",
    "poll_interval_ms",
    "source_mode",
    "repetitions",
    "archive_delay_s",
    "local_median_s",
    "local_min_s",
    "local_max_s",
    "remote_median_s",
    "remote_min_s",
    "remote_max_s",
    "overhead_s",
)


def _row(measurement: Measurement) -> list[str]:
    scenario = measurement.scenario
    return [
        str(scenario.article_lines),
        f"{scenario.simulated_verify_seconds:.3f}",
        str(scenario.poll_interval_ms),
        scenario.source_mode,
        str(scenario.repetitions),
        f"{scenario.archive_delay_s:.3f}",
        f"{measurement.local.median:.3f}",
        f"{measurement.local.minimum:.3f}",
        f"{measurement.local.maximum:.3f}",
        f"{measurement.remote.median:.3f}",
        f"{measurement.remote.minimum:.3f}",
        f"{measurement.remote.maximum:.3f}",
        f"{measurement.overhead_seconds:.3f}",
    ]


def emit_report(measurements: list[Measurement]) -> tuple[str, str]:
    """Render a text table and a CSV document, rows in input order."""
    if not measurements:
        raise ValueError("emit_report needs at least one measurement")
    rows = [_row(m) for m in measurements]
    widths = [
        max(len(CSV_COLUMNS[i]), max(len(row[i]) for row in rows))
        for i in range(len(CSV_COLUMNS))
    ]
    header = "  ".join(name.ljust(widths[i]) for i, name in enumerate(CSV_COLUMNS))
    lines = [header, "  ".join("-" * w for w in widths)]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    text = "\n".join(lines) + "\n"
    csv_lines = [",".join(CSV_COLUMNS)]
    csv_lines.extend(",".join(row) for row in rows)
    return text, "\n".join(csv_lines) + "\n"
