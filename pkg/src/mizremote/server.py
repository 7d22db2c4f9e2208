"""HTTP surface: job submission/polling/cancellation, synchronous
format/lint, version listing, bearer-token auth, TLS, and the config
file that wires it all together.

Every route under /api/v1 requires "Authorization: Bearer <token>"; the
unauthenticated exceptions are /healthz and the static editor assets
under /ui when present.
"""

from __future__ import annotations

import secrets
import tempfile
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Optional, Union

from fastapi import Depends, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.routing import APIRouter
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import jobs as jobs_mod
from .errfmt import MessageCatalog, builtin_catalog
from .formatting import FormatConfig, format_source, lint
from .jobs import (
    InlineSource,
    JobEngine,
    JobRequest,
    JobState,
    JobStatus,
    QueueFullError,
    RepoSource,
    SourceTooLargeError,
    UnknownJobError,
    ValidationError,
)
from .toolchain import (
    BUILTIN,
    ToolchainRegistry,
    ToolchainVersion,
    builtin_toolchain,
    execute_request,
)
from .workspace import RepoRef, WorkspaceArea

DEFAULT_PORT = 8441
DEFAULT_POLL_HINT_MS = 500
_REAP_INTERVAL_S = 60.0

ENV_BIND = "MIZREMOTE_BIND"
ENV_PORT = "MIZREMOTE_PORT"
ENV_TOKEN = "MIZREMOTE_TOKEN"
ENV_TLS_CERT = "MIZREMOTE_TLS_CERT"
ENV_TLS_KEY = "MIZREMOTE_TLS_KEY"


class ConfigError(Exception):
    """Invalid or inconsistent server configuration."""


@dataclass(frozen=True)
class ServerConfig:
    bind: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    production: bool = False
    tls_certfile: str | None = None
    tls_keyfile: str | None = None
    api_tokens: tuple[str, ...] = ()
    workspace_dir: str | None = None
    max_inline_bytes: int = jobs_mod.DEFAULT_MAX_INLINE_BYTES
    queue_cap: int = jobs_mod.DEFAULT_QUEUE_CAP
    worker_count: int | None = None
    job_ttl_s: float = jobs_mod.DEFAULT_TTL_S
    poll_hint_ms: int = DEFAULT_POLL_HINT_MS
    workspace_max_age_s: float = 0.0
    ca_bundle: str | None = None
    toolchains: tuple[ToolchainVersion, ...] = field(
        default_factory=lambda: (builtin_toolchain(),)
    )

    def validated(self) -> "ServerConfig":
        if self.production and not (self.tls_certfile and self.tls_keyfile):
            raise ConfigError("production mode requires TLS cert and key paths")
        if not self.api_tokens:
            raise ConfigError(
                "no API tokens configured; every endpoint would be unreachable"
            )
        if not self.toolchains:
            raise ConfigError("toolchain registry must not be empty")
        if self.poll_hint_ms < 1:
            raise ConfigError("poll_hint_ms must be positive")
        return self


def _toolchain_from_table(table: dict) -> ToolchainVersion:
    try:
        name = table["name"]
        raw_commands = table["commands"]
    except KeyError as exc:
        raise ConfigError(f"toolchain table missing key: {exc}") from exc
    commands: dict[str, str | tuple[str, ...]] = {}
    for command, spec in raw_commands.items():
        if isinstance(spec, str):
            if spec != BUILTIN:
                raise ConfigError(
                    f"command {command!r} must be 'builtin' or an argv array"
                )
            commands[command] = BUILTIN
        elif isinstance(spec, list) and all(isinstance(s, str) for s in spec):
            commands[command] = tuple(spec)
        else:
            raise ConfigError(f"command {command!r} has an unusable argv value")
    kwargs = {}
    for key in ("progress_pattern", "err_suffix", "prelude_dir", "line_delay_s"):
        if key in table:
            kwargs[key] = table[key]
    try:
        return ToolchainVersion(name=name, commands=commands, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None, env: dict | None = None) -> ServerConfig:
    """TOML file plus environment overrides; validates before returning."""
    import os

    env = os.environ if env is None else env
    config = ServerConfig()
    if path is not None:
        try:
            with open(path, "rb") as handle:
                table = tomllib.load(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file is not valid TOML: {exc}") from exc
        tls = table.get("tls", {})
        limits = table.get("limits", {})
        toolchains = tuple(
            _toolchain_from_table(t) for t in table.get("toolchain", [])
        )
        config = replace(
            config,
            bind=table.get("bind", config.bind),
            port=table.get("port", config.port),
            production=table.get("production", config.production),
            tls_certfile=tls.get("certfile", config.tls_certfile),
            tls_keyfile=tls.get("keyfile", config.tls_keyfile),
            api_tokens=tuple(table.get("api_tokens", ())),
            workspace_dir=table.get("workspace_dir", config.workspace_dir),
            max_inline_bytes=limits.get("max_inline_bytes", config.max_inline_bytes),
            queue_cap=limits.get("queue_cap", config.queue_cap),
            worker_count=limits.get("worker_count", config.worker_count),
            job_ttl_s=limits.get("job_ttl_s", config.job_ttl_s),
            poll_hint_ms=limits.get("poll_hint_ms", config.poll_hint_ms),
            workspace_max_age_s=limits.get(
                "workspace_max_age_s", config.workspace_max_age_s
            ),
            ca_bundle=table.get("ca_bundle", config.ca_bundle),
            toolchains=toolchains or config.toolchains,
        )
    overrides = {}
    if env.get(ENV_BIND):
        overrides["bind"] = env[ENV_BIND]
    if env.get(ENV_PORT):
        try:
            overrides["port"] = int(env[ENV_PORT])
        except ValueError as exc:
            raise ConfigError(f"{ENV_PORT} must be an integer") from exc
    if env.get(ENV_TOKEN):
        overrides["api_tokens"] = (env[ENV_TOKEN],)
    if env.get(ENV_TLS_CERT):
        overrides["tls_certfile"] = env[ENV_TLS_CERT]
    if env.get(ENV_TLS_KEY):
        overrides["tls_keyfile"] = env[ENV_TLS_KEY]
    if overrides:
        config = replace(config, **overrides)
    return config.validated()


# -- request/response documents ---------------------------------------------


class InlineSourceModel(BaseModel):
    kind: Literal["inline"] = "inline"
    filename: str
    text: str


class RepoSourceModel(BaseModel):
    kind: Literal["repo"] = "repo"
    archive_url_template: str
    ref: str
    auth_token: Optional[str] = None
    path: str


SourceModel = Union[InlineSourceModel, RepoSourceModel]


class FormatOptionsModel(BaseModel):
    indent_width: int = 2
    max_line_length: int = 80


class JobRequestModel(BaseModel):
    command: Literal["verifier", "formatter", "linter"]
    toolchain_version: str = "builtin-1.0"
    source: SourceModel = Field(discriminator="kind")
    options: Optional[FormatOptionsModel] = None


class TextRequestModel(BaseModel):
    text: str
    options: Optional[FormatOptionsModel] = None


class ApiError(Exception):
    def __init__(self, status: int, reason: str, detail: str) -> None:
        self.status = status
        self.reason = reason
        self.detail = detail
        super().__init__(detail)


def _error_response(status: int, reason: str, detail: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"reason": reason, "detail": detail}
    )


def _format_config(options: Optional[FormatOptionsModel]) -> FormatConfig:
    if options is None:
        return FormatConfig()
    try:
        return FormatConfig(
            indent_width=options.indent_width,
            max_line_length=options.max_line_length,
        )
    except ValueError as exc:
        raise ApiError(400, "invalid_options", str(exc)) from exc


def _domain_request(model: JobRequestModel) -> JobRequest:
    source = model.source
    if isinstance(source, InlineSourceModel):
        domain_source: InlineSource | RepoSource = InlineSource(
            filename=source.filename, text=source.text
        )
    else:
        try:
            repo = RepoRef(
                archive_url_template=source.archive_url_template,
                ref=source.ref,
                auth_token=source.auth_token,
            )
        except ValueError as exc:
            raise ApiError(400, "invalid_repo", str(exc)) from exc
        domain_source = RepoSource(repo=repo, path=source.path)
    options = _format_config(model.options) if model.options is not None else None
    return JobRequest(
        command=model.command,
        toolchain_version=model.toolchain_version,
        source=domain_source,
        options=options,
    )


def _diagnostic_documents(errors, catalog: MessageCatalog) -> list[dict]:
    return [
        {
            "line": d.line,
            "column": d.column,
            "code": d.code,
            "message": catalog.get(d.code, f"Unknown error {d.code}"),
        }
        for d in errors
    ]


def _status_document(
    status: JobStatus, catalog: MessageCatalog, poll_hint_ms: int
) -> dict:
    doc = {
        "id": status.id,
        "state": status.state.value,
        "pass": status.pass_name,
        "progress_percent": status.progress_percent,
        "errors": (
            _diagnostic_documents(status.errors, catalog)
            if status.errors is not None
            else None
        ),
        "formatted_text": status.formatted_text,
        "failure_reason": status.failure_reason,
        "created_at": status.created_at,
        "finished_at": status.finished_at,
    }
    if not status.state.terminal:
        doc["poll_hint_ms"] = poll_hint_ms
    return doc


# -- application -------------------------------------------------------------


def _require_token(request: Request) -> None:
    header = request.headers.get("authorization", "")
    scheme, _, presented = header.partition(" ")
    tokens = request.app.state.config.api_tokens
    ok = scheme.lower() == "bearer" and any(
        secrets.compare_digest(presented, token) for token in tokens
    )
    if not ok:
        raise ApiError(401, "unauthorized", "missing or invalid bearer token")


def create_app(config: ServerConfig, ui_dir: str | Path | None = None) -> FastAPI:
    config = config.validated()
    registry = ToolchainRegistry(config.toolchains)
    workspace_dir = config.workspace_dir or tempfile.mkdtemp(prefix="mizremote-ws-")
    area = WorkspaceArea(
        workspace_dir,
        max_age_s=config.workspace_max_age_s,
        ca_bundle=config.ca_bundle,
    )

    def executor(request, sink, cancel):
        return execute_request(
            request, sink, cancel, area=area, registry=registry
        )

    engine = JobEngine(
        executor,
        registry.command_map(),
        worker_count=config.worker_count,
        queue_cap=config.queue_cap,
        max_inline_bytes=config.max_inline_bytes,
        ttl_s=config.job_ttl_s,
    )
    catalog = builtin_catalog()
    reaper_stop = threading.Event()

    def reap_loop() -> None:
        while not reaper_stop.wait(_REAP_INTERVAL_S):
            engine.reap_expired()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        reaper = threading.Thread(target=reap_loop, daemon=True, name="job-reaper")
        reaper.start()
        try:
            yield
        finally:
            reaper_stop.set()
            engine.shutdown()

    app = FastAPI(title="mizremote", lifespan=lifespan, openapi_url=None)
    app.state.config = config
    app.state.engine = engine
    app.state.area = area
    app.state.registry = registry

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return _error_response(exc.status, exc.reason, exc.detail)

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        return _error_response(400, "schema", str(exc.errors()[:3]))

    @app.get("/healthz", response_class=PlainTextResponse)
    async def healthz() -> str:
        return "ok"

    api = APIRouter(prefix="/api/v1", dependencies=[Depends(_require_token)])

    @api.post("/jobs")
    async def submit_job(model: JobRequestModel) -> JSONResponse:
        request = _domain_request(model)
        try:
            job_id = engine.submit(request)
        except SourceTooLargeError as exc:
            raise ApiError(413, exc.reason, str(exc)) from exc
        except ValidationError as exc:
            raise ApiError(400, exc.reason, str(exc)) from exc
        except QueueFullError as exc:
            raise ApiError(429, "queue_full", str(exc)) from exc
        return JSONResponse(status_code=202, content={"job_id": job_id})

    @api.get("/jobs/{job_id}")
    async def job_status(job_id: str) -> dict:
        try:
            status = engine.status(job_id)
        except UnknownJobError as exc:
            raise ApiError(404, "not_found", f"no such job: {job_id}") from exc
        return _status_document(status, catalog, config.poll_hint_ms)

    @api.delete("/jobs/{job_id}")
    async def cancel_job(job_id: str) -> dict:
        try:
            acknowledged = engine.cancel(job_id)
        except UnknownJobError as exc:
            raise ApiError(404, "not_found", f"no such job: {job_id}") from exc
        return {"canceled": acknowledged}

    @api.get("/versions")
    async def versions() -> dict:
        return {
            "versions": [
                {
                    "name": name,
                    "commands": sorted(registry.get(name).commands),
                }
                for name in registry.names()
            ]
        }

    @api.post("/format")
    async def format_text(model: TextRequestModel) -> dict:
        _check_inline_size(model.text, config.max_inline_bytes)
        cfg = _format_config(model.options)
        return {"formatted": format_source(model.text, cfg)}

    @api.post("/lint")
    async def lint_text(model: TextRequestModel) -> dict:
        _check_inline_size(model.text, config.max_inline_bytes)
        cfg = _format_config(model.options)
        return {"errors": _diagnostic_documents(lint(model.text, cfg), catalog)}

    app.include_router(api)

    ui_path = Path(ui_dir) if ui_dir is not None else None
    if ui_path is not None and ui_path.is_dir():
        app.mount("/ui", StaticFiles(directory=ui_path, html=True), name="ui")

    return app


def _check_inline_size(text: str, cap: int) -> None:
    size = len(text.encode("utf-8"))
    if size > cap:
        raise ApiError(
            413, "source_too_large", f"text is {size} bytes, cap is {cap}"
        )


def run_server(config: ServerConfig, ui_dir: str | Path | None = None) -> None:
    """Blocking uvicorn runner; TLS when cert/key are configured."""
    import uvicorn

    app = create_app(config, ui_dir=ui_dir)
    uvicorn.run(
        app,
        host=config.bind,
        port=config.port,
        ssl_certfile=config.tls_certfile,
        ssl_keyfile=config.tls_keyfile,
        log_level="warning",
    )
