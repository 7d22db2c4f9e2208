from __future__ import annotations

import sys
from contextlib import ExitStack
from pathlib import Path

import pytest

from mizremote.bench import free_port, local_server
from mizremote.client import ApiClient, ClientConfig
from mizremote.server import ServerConfig
from mizremote.toolchain import builtin_toolchain

TESTS_DIR = Path(__file__).parent
FIXTURES_DIR = TESTS_DIR / "fixtures"
CORPUS_DIR = TESTS_DIR / "corpus"
FAKE_TOOL = FIXTURES_DIR / "fake_tool.py"

API_TOKEN = "test-token-1"
SECOND_TOKEN = "test-token-2"


def fake_tool_argv(*extra: str) -> tuple[str, ...]:
    """argv template invoking the fixture tool with {article} appended."""
    return (sys.executable, str(FAKE_TOOL), *extra, "{article}")


def make_config(tmp: Path, **overrides) -> ServerConfig:
    defaults = dict(
        bind="127.0.0.1",
        port=free_port(),
        api_tokens=(API_TOKEN, SECOND_TOKEN),
        workspace_dir=tmp / "workspaces",
        toolchains=(builtin_toolchain(),),
    )
    defaults.update(overrides)
    return ServerConfig(**defaults)


@pytest.fixture(scope="session")
def live_server(tmp_path_factory):
    """One shared default server for read-mostly tests."""
    tmp = tmp_path_factory.mktemp("live-server")
    config = make_config(tmp)
    with local_server(config) as url:
        yield {"url": url, "config": config}


@pytest.fixture(scope="session")
def client(live_server):
    return ApiClient(
        ClientConfig(
            server_url=live_server["url"],
            token=API_TOKEN,
            poll_interval_ms=50,
            timeout_s=120,
        )
    )


@pytest.fixture
def server_factory(tmp_path):
    """Builds throwaway servers with custom configs; stops them on teardown."""
    stack = ExitStack()
    counter = 0

    def build(**overrides):
        nonlocal counter
        counter += 1
        config = make_config(tmp_path / f"srv{counter}", **overrides)
        url = stack.enter_context(local_server(config))
        return {"url": url, "config": config}

    yield build
    stack.close()


@pytest.fixture
def quick_client():
    def build(url: str, **overrides) -> ApiClient:
        kwargs = dict(
            server_url=url, token=API_TOKEN, poll_interval_ms=50, timeout_s=120
        )
        kwargs.update(overrides)
        return ApiClient(ClientConfig(**kwargs))

    return build


@pytest.fixture(scope="session")
def corpus_paths() -> list[Path]:
    paths = sorted(CORPUS_DIR.glob("*.miz"))
    assert paths, "article corpus missing"
    return paths
