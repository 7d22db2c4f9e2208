"""Command-line client and server launcher.

Exit codes for client commands: 0 success, 1 the tool reported
diagnostics (or --check found unformatted input), 2 job failed or was
canceled, 3 transport or request error (unreachable server, bad token,
unknown job). `serve` exits 2 on configuration errors.
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import IO, Optional

import click

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .bench import Scenario, emit_report, run_scenario
from .client import (
    ApiClient,
    ClientConfig,
    ClientError,
    RequestFailed,
    TransportError,
    WaitTimeout,
)
from .server import ConfigError, load_config, run_server

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_FAILED = 2
EXIT_TRANSPORT = 3

_DEFAULT_SERVER = "http://127.0.0.1:8441"
_PROGRESS_WIDTH = 20


def _user_config_path() -> Path:
    import os

    override = os.environ.get("MIZREMOTE_CONFIG")
    if override:
        return Path(override)
    return Path.home() / ".config" / "mizremote" / "config.toml"


def _user_config() -> dict:
    path = _user_config_path()
    if not path.is_file():
        return {}
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise click.ClickException(f"unreadable config {path}: {exc}")


@click.group()
@click.option("--server", envvar="MIZREMOTE_URL", default=None, help="Server base URL.")
@click.option("--token", envvar="MIZREMOTE_TOKEN", default=None, help="Bearer token.")
@click.option("--toolchain", default=None, help="Toolchain version for jobs.")
@click.option("--poll-ms", type=int, default=None, help="Poll interval in ms.")
@click.option("--timeout", "timeout_s", type=float, default=None, help="Watch timeout in seconds.")
@click.option("--ca-bundle", default=None, help="CA bundle for self-signed TLS.")
@click.pass_context
def main(ctx, server, token, toolchain, poll_ms, timeout_s, ca_bundle) -> None:
    """Client for a remote Mizar verification service."""
    file_cfg = _user_config()
    ctx.obj = {
        "server": server or file_cfg.get("server_url", _DEFAULT_SERVER),
        "token": token if token is not None else file_cfg.get("token", ""),
        "toolchain": toolchain or file_cfg.get("toolchain_version", "builtin-1.0"),
        "poll_ms": poll_ms or file_cfg.get("poll_interval_ms", 500),
        "timeout_s": timeout_s or file_cfg.get("timeout_s", 600.0),
        "ca_bundle": ca_bundle or file_cfg.get("ca_bundle"),
    }


def _client(ctx_obj: dict) -> ApiClient:
    try:
        config = ClientConfig(
            server_url=ctx_obj["server"],
            token=ctx_obj["token"],
            poll_interval_ms=ctx_obj["poll_ms"],
            timeout_s=ctx_obj["timeout_s"],
            toolchain_version=ctx_obj["toolchain"],
            ca_bundle=ctx_obj["ca_bundle"],
        )
    except ValueError as exc:
        raise click.ClickException(str(exc))
    return ApiClient(config)


def _fail_transport(exc: ClientError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_TRANSPORT)


def _print_diagnostics(display_name: str, errors: list[dict]) -> None:
    for err in errors:
        click.echo(
            f"{display_name}:{err['line']}:{err['column']}: "
            f"error {err['code']}: {err['message']}"
        )


class _ProgressBar:
    """Single-line bar on stderr; rendered percent never decreases."""

    def __init__(self, stream: IO[str]) -> None:
        self._stream = stream
        self._best = 0
        self._drawn = False

    def update(self, status: dict) -> None:
        percent = max(self._best, int(status.get("progress_percent") or 0))
        self._best = percent
        name = status.get("pass") or "-"
        filled = percent * _PROGRESS_WIDTH // 100
        bar = "#" * filled + "·" * (_PROGRESS_WIDTH - filled)
        self._stream.write(f"\r[{name}] {bar} {percent:3d}%")
        self._stream.flush()
        self._drawn = True

    def finish(self) -> None:
        if self._drawn:
            self._stream.write("\n")
            self._stream.flush()


def _watch(client: ApiClient, job_id: str, display_name: str) -> int:
    bar = _ProgressBar(sys.stderr)
    try:
        final = client.wait(job_id, on_status=bar.update)
    except WaitTimeout as exc:
        bar.finish()
        click.echo(f"error: {exc}", err=True)
        return EXIT_FAILED
    finally:
        bar.finish()
    state = final["state"]
    if state == "succeeded":
        return EXIT_OK
    if state == "completed_with_errors":
        _print_diagnostics(display_name, final.get("errors") or [])
        return EXIT_DIAGNOSTICS
    reason = final.get("failure_reason")
    click.echo(f"job {state}" + (f": {reason}" if reason else ""), err=True)
    return EXIT_FAILED


@main.command()
@click.argument("file", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--repo", "archive_url", default=None, help="Archive URL template with {ref}.")
@click.option("--ref", default=None, help="Branch, tag, or commit for --repo.")
@click.option("--path", "repo_path", default=None, help="Article path under text/ for --repo.")
@click.pass_obj
def verify(obj, file, archive_url, ref, repo_path) -> None:
    """Submit a verifier job and watch it to completion."""
    repo_mode = archive_url is not None
    if repo_mode and (ref is None or repo_path is None):
        raise click.UsageError("--repo requires --ref and --path")
    if repo_mode == (file is not None):
        raise click.UsageError("pass either FILE or --repo/--ref/--path")
    client = _client(obj)
    try:
        if repo_mode:
            display_name = repo_path
            job_id = client.submit_repo(archive_url, ref=ref, path=repo_path)
        else:
            display_name = file
            text = Path(file).read_text(encoding="utf-8")
            job_id = client.submit_inline(Path(file).name, text)
        sys.exit(_watch(client, job_id, display_name))
    except ClientError as exc:
        _fail_transport(exc)


@main.command()
@click.argument("job_id")
@click.pass_obj
def status(obj, job_id) -> None:
    """Print one status snapshot of a job."""
    client = _client(obj)
    try:
        doc = client.status(job_id)
    except ClientError as exc:
        _fail_transport(exc)
    click.echo(f"state: {doc['state']}")
    if doc.get("pass"):
        click.echo(f"pass: {doc['pass']}")
    click.echo(f"progress: {doc['progress_percent']}%")
    if doc.get("failure_reason"):
        click.echo(f"failure: {doc['failure_reason']}")
    if doc.get("errors"):
        click.echo(f"errors: {len(doc['errors'])}")


@main.command()
@click.argument("job_id")
@click.pass_obj
def cancel(obj, job_id) -> None:
    """Request cancellation of a job."""
    client = _client(obj)
    try:
        acknowledged = client.cancel(job_id)
    except ClientError as exc:
        _fail_transport(exc)
    click.echo("canceled" if acknowledged else "not canceled (already finished)")


@main.command()
@click.pass_obj
def versions(obj) -> None:
    """List toolchain versions the server offers."""
    client = _client(obj)
    try:
        listed = client.versions()
    except ClientError as exc:
        _fail_transport(exc)
    for version in listed:
        click.echo(f"{version['name']}: {' '.join(version['commands'])}")


@main.command(name="format")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--write", "write_back", is_flag=True, help="Rewrite FILE in place.")
@click.option("--check", is_flag=True, help="Exit 1 if FILE is not already formatted.")
@click.pass_obj
def format_cmd(obj, file, write_back, check) -> None:
    """Format an article through the server."""
    if write_back and check:
        raise click.UsageError("--write and --check are mutually exclusive")
    client = _client(obj)
    original = Path(file).read_text(encoding="utf-8")
    try:
        formatted = client.format_text(original)
    except ClientError as exc:
        _fail_transport(exc)
    if check:
        if formatted != original:
            click.echo(f"would reformat {file}", err=True)
            sys.exit(EXIT_DIAGNOSTICS)
        sys.exit(EXIT_OK)
    if write_back:
        Path(file).write_text(formatted, encoding="utf-8")
        return
    click.echo(formatted, nl=False)


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def lint(obj, file) -> None:
    """Lint an article through the server."""
    client = _client(obj)
    text = Path(file).read_text(encoding="utf-8")
    try:
        errors = client.lint_text(text)
    except ClientError as exc:
        _fail_transport(exc)
    _print_diagnostics(file, errors)
    sys.exit(EXIT_DIAGNOSTICS if errors else EXIT_OK)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None, help="Static editor assets to serve at /ui.")
def serve(config_path, ui_dir) -> None:
    """Run the API server (blocking)."""
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    run_server(config, ui_dir=ui_dir)


@main.command()
@click.option("--lines", default=3657, show_default=True, help="Generated article length.")
@click.option("--seconds", "simulated", default=10.0, show_default=True, help="Simulated verification duration.")
@click.option("--poll-ms", "bench_poll_ms", default=500, show_default=True)
@click.option("--mode", type=click.Choice(["inline", "repo-archive"]), default="inline", show_default=True)
@click.option("--reps", default=3, show_default=True)
@click.option("--archive-delay", "archive_delay_s", default=0.0, show_default=True, help="Simulated archive fetch latency in seconds.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None, help="Also write the CSV report here.")
def bench(lines, simulated, bench_poll_ms, mode, reps, archive_delay_s, csv_path) -> None:
    """Measure local vs remote verification latency on a loopback server."""
    try:
        scenario = Scenario(
            article_lines=lines,
            simulated_verify_seconds=simulated,
            poll_interval_ms=bench_poll_ms,
            source_mode=mode,
            repetitions=reps,
            archive_delay_s=archive_delay_s,
        )
    except ValueError as exc:
        raise click.ClickException(str(exc))
    measurement = run_scenario(scenario)
    text, csv_doc = emit_report([measurement])
    click.echo(text, nl=False)
    if csv_path:
        Path(csv_path).write_text(csv_doc, encoding="utf-8")


if __name__ == "__main__":
    main()
