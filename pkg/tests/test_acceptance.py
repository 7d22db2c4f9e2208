"""End-to-end exit criteria for the service, one test per criterion.

Each test is a full-stack check with its stated budget and tolerance;
`pytest -v tests/test_acceptance.py` prints one pass/fail line per
criterion. Scale parameters (trial counts, article sizes, durations)
are fixed here on purpose: they are the contract, not tuning knobs.
"""

from __future__ import annotations

import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import requests

from conftest import API_TOKEN, fake_tool_argv, make_config
from generators import (
    hostile_tarball,
    random_article,
    random_err_list,
    reference_case,
    structure_case,
)
from netfixtures import MultiArchiveServer
from oracles import scope_replay_oracle, stack_oracle
from mizremote.articlegen import well_formed_article
from mizremote.bench import Scenario, run_scenario
from mizremote.check import check_references, check_structure
from mizremote.client import TERMINAL_STATES
from mizremote.errfmt import (
    Diagnostic,
    ErrParseError,
    parse_err,
    serialize_err,
    sort_diagnostics,
)
from mizremote.formatting import format_source
from mizremote.lexis import TokenKind, line_index, tokenize
from mizremote.server import create_app
from mizremote.toolchain import ToolchainVersion, builtin_toolchain
from mizremote.workspace import RepoRef, UnsafeEntryError, WorkspaceArea

JOB_ID_SHAPE = re.compile(r"^[0-9a-f]{32}$")
PASS_NAMES = {"Parser", "Analyzer", "Checker"}


def auth_header(token: str = API_TOKEN) -> dict:
    return {"Authorization": f"Bearer {token}"}


def get_status(session: requests.Session, url: str, job_id: str) -> dict:
    response = session.get(f"{url}/api/v1/jobs/{job_id}", headers=auth_header())
    response.raise_for_status()
    return response.json()


def test_submit_immediacy_under_100ms_for_100_trials(server_factory):
    """A 3,657-line submission returns a well-formed id within 100 ms,
    before the job has finished; 100 trials inside a 30 s budget."""
    info = server_factory(
        toolchains=(builtin_toolchain(line_delay_s=0.002),),
        worker_count=1,
        queue_cap=8,
    )
    article = well_formed_article(3657, seed=1)
    body = {
        "command": "verifier",
        "toolchain_version": "builtin-1.0",
        "source": {"kind": "inline", "filename": "big.miz", "text": article},
    }
    session = requests.Session()
    session.headers.update(auth_header())
    jobs_url = f"{info['url']}/api/v1/jobs"

    started = time.perf_counter()
    submit_times = []
    for trial in range(100):
        t0 = time.perf_counter()
        response = session.post(jobs_url, json=body)
        elapsed = time.perf_counter() - t0
        submit_times.append(elapsed)
        assert response.status_code == 202, f"trial {trial}: {response.text}"
        job_id = response.json()["job_id"]
        assert JOB_ID_SHAPE.fullmatch(job_id), f"trial {trial}: id {job_id!r}"
        assert elapsed < 0.1, f"trial {trial}: submit took {elapsed * 1000:.1f} ms"
        state = get_status(session, info["url"], job_id)["state"]
        assert state in ("queued", "running"), f"trial {trial}: already {state}"
        # Cancel to keep the queue empty; teardown is not part of the timing.
        session.delete(f"{jobs_url}/{job_id}")
    total = time.perf_counter() - started
    assert total < 30, f"100 trials took {total:.1f} s"
    print(
        f"submit immediacy: 100/100 trials, "
        f"max {max(submit_times) * 1000:.1f} ms, total {total:.1f} s"
    )


def test_progress_protocol_under_randomized_polling(server_factory):
    """Twenty ~5 s verifier jobs, each polled at its own random interval
    between 50 ms and 1 s: progress never decreases, ends at 100, and
    every pass name is observed."""
    lines = 100
    info = server_factory(
        toolchains=(builtin_toolchain(line_delay_s=5.0 / (3 * lines)),),
        worker_count=20,
        queue_cap=64,
    )
    article = well_formed_article(lines, seed=2)
    body = {
        "command": "verifier",
        "toolchain_version": "builtin-1.0",
        "source": {"kind": "inline", "filename": "slow.miz", "text": article},
    }
    rng = random.Random(4242)
    intervals = [rng.uniform(0.05, 1.0) for _ in range(20)]

    def submit() -> str:
        response = requests.post(
            f"{info['url']}/api/v1/jobs", json=body, headers=auth_header()
        )
        assert response.status_code == 202
        return response.json()["job_id"]

    def run_one(interval: float) -> list[dict]:
        job_id = submit()
        session = requests.Session()
        observed = []
        while True:
            doc = get_status(session, info["url"], job_id)
            observed.append(doc)
            if doc["state"] in TERMINAL_STATES:
                return observed
            time.sleep(interval)

    started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=20) as pool:
        histories = list(pool.map(run_one, intervals))
    elapsed = time.perf_counter() - started

    for interval, history in zip(intervals, histories):
        percents = [doc["progress_percent"] for doc in history]
        names = {doc.get("pass") for doc in history} - {None}
        label = f"poll {interval * 1000:.0f} ms"
        assert all(a <= b for a, b in zip(percents, percents[1:])), (
            f"{label}: {percents}"
        )
        assert percents[-1] == 100, f"{label}: ended at {percents[-1]}"
        assert history[-1]["state"] == "succeeded", f"{label}: {history[-1]}"
        assert PASS_NAMES <= names, f"{label}: saw only {sorted(names)}"
    assert elapsed < 180, f"20 jobs took {elapsed:.0f} s"
    print(f"progress protocol: 20/20 jobs, wall {elapsed:.1f} s")


def test_latency_envelope_at_desk_scale():
    """A 3,657-line article with 10 s of simulated verification and
    500 ms polling: remote is slower than local but stays inside the
    12.3 s envelope."""
    scenario = Scenario(
        article_lines=3657,
        simulated_verify_seconds=10.0,
        poll_interval_ms=500,
        source_mode="inline",
        repetitions=5,
    )
    started = time.perf_counter()
    measurement = run_scenario(scenario, seed=3)
    elapsed = time.perf_counter() - started

    assert measurement.remote.median > measurement.local.median, (
        f"remote {measurement.remote.median:.2f} s not slower than "
        f"local {measurement.local.median:.2f} s"
    )
    assert measurement.remote.median <= 12.3, (
        f"remote median {measurement.remote.median:.2f} s outside envelope"
    )
    assert elapsed < 300, f"harness took {elapsed:.0f} s"
    print(
        f"latency envelope: local {measurement.local.median:.2f} s, "
        f"remote {measurement.remote.median:.2f} s, "
        f"overhead {measurement.overhead_seconds:.2f} s"
    )


def test_cancel_kills_external_tool_within_one_second(server_factory, tmp_path):
    """Canceling a running external tool reaches the canceled state in
    under 1 s and leaves no live process in the tool's tree; 20 trials."""
    pid_path = tmp_path / "tool.pid"
    hang_tool = ToolchainVersion(
        name="hangtool-1.0",
        commands={
            "verifier": fake_tool_argv(
                "--pid-file", str(pid_path), "--spawn-child", "--hang"
            )
        },
    )
    info = server_factory(toolchains=(hang_tool,), worker_count=1)
    body = {
        "command": "verifier",
        "toolchain_version": "hangtool-1.0",
        "source": {"kind": "inline", "filename": "a.miz", "text": "environ\nbegin\n"},
    }
    session = requests.Session()
    session.headers.update(auth_header())
    jobs_url = f"{info['url']}/api/v1/jobs"

    def wait_for(predicate, budget_s: float) -> bool:
        deadline = time.monotonic() + budget_s
        while time.monotonic() < deadline:
            if predicate():
                return True
            time.sleep(0.02)
        return predicate()

    cancel_times = []
    for trial in range(20):
        pid_path.unlink(missing_ok=True)
        response = session.post(jobs_url, json=body)
        assert response.status_code == 202
        job_id = response.json()["job_id"]

        def tool_started() -> bool:
            if not pid_path.exists():
                return False
            if len(pid_path.read_text().split()) < 2:
                return False
            return get_status(session, info["url"], job_id)["state"] == "running"

        assert wait_for(tool_started, 10), f"trial {trial}: tool never started"
        pids = [int(field) for field in pid_path.read_text().split()]

        t0 = time.monotonic()
        assert session.delete(f"{jobs_url}/{job_id}").json()["canceled"]
        assert wait_for(
            lambda: get_status(session, info["url"], job_id)["state"] == "canceled",
            1.0,
        ), f"trial {trial}: not canceled within 1 s"
        cancel_times.append(time.monotonic() - t0)

        for pid in pids:
            gone = wait_for(lambda: not Path(f"/proc/{pid}").exists(), 2.0)
            assert gone, f"trial {trial}: pid {pid} survived cancellation"
    print(
        f"cancellation: 20/20 trials, "
        f"max observe time {max(cancel_times) * 1000:.0f} ms"
    )


def test_err_codec_round_trips_and_survives_fuzz():
    """serialize/parse is the identity on 1,000 random diagnostic lists,
    and parse never raises anything but its own error on 10,000
    arbitrary byte strings."""
    rng = random.Random(99001)
    for _ in range(1000):
        errs = sort_diagnostics(Diagnostic(*t) for t in random_err_list(rng))
        assert parse_err(serialize_err(errs)) == errs

    rejected = 0
    for _ in range(10000):
        blob = rng.randbytes(rng.randint(0, 64))
        try:
            parse_err(blob)
        except ErrParseError:
            rejected += 1
    print(f"err codec: 1000 round trips, 10000 fuzz inputs ({rejected} rejected)")


def test_formatter_idempotent_and_token_preserving(corpus_paths):
    """Formatting is idempotent and keeps every significant token on
    1,000 generated articles plus the hand-written corpus."""

    def significant(source: str) -> list[str]:
        return [
            t.text
            for t in tokenize(source).tokens
            if t.kind not in (TokenKind.NEWLINE, TokenKind.COMMENT)
        ]

    def check_one(label: str, source: str) -> None:
        once = format_source(source)
        assert format_source(once) == once, f"{label}: not idempotent"
        assert significant(once) == significant(source), f"{label}: tokens changed"

    rng = random.Random(66002)
    for i in range(1000):
        check_one(f"generated #{i}", random_article(rng))

    assert len(corpus_paths) >= 20, f"corpus has only {len(corpus_paths)} articles"
    for path in corpus_paths:
        check_one(path.name, path.read_text(encoding="utf-8"))
    print(f"formatter: 1000 generated + {len(corpus_paths)} corpus articles")


def test_checkers_match_independent_oracles():
    """The structure checker agrees with the stack oracle on 1,000 random
    block sequences; the reference checker agrees with the scope-replay
    oracle on 500 cases."""
    rng = random.Random(77003)
    for i in range(1000):
        source, events = structure_case(rng)
        stream = tokenize(source)
        got = [
            (e.line, e.column, e.code)
            for e in check_structure(stream, line_index(source))
            if e.code in (1001, 1002)
        ]
        assert got == stack_oracle(events), f"structure case {i}"

    rng = random.Random(88004)
    for i in range(500):
        source, events = reference_case(rng)
        stream = tokenize(source)
        got = [
            (e.line, e.column, e.code)
            for e in check_references(stream, line_index(source))
        ]
        assert got == scope_replay_oracle(events), f"reference case {i}"
    print("oracle equivalence: 1000 structure + 500 reference cases")


def test_hostile_archives_never_escape_workspace(tmp_path):
    """One hundred adversarial tarballs (traversal names, absolute paths,
    escaping links, device nodes) are all rejected and write nothing
    outside the workspace area."""
    area_root = tmp_path / "area"
    victim = tmp_path / "victim"
    victim.mkdir()
    (victim / "canary.txt").write_text("untouched\n", encoding="utf-8")
    passwd_before = Path("/etc/passwd").read_bytes()
    hosts_before = Path("/etc/hosts").read_bytes()

    def outside_snapshot() -> set[str]:
        return {
            str(path.relative_to(tmp_path))
            for path in tmp_path.rglob("*")
            if area_root not in path.parents and path != area_root
        }

    before = outside_snapshot()
    area = WorkspaceArea(area_root)
    rng = random.Random(55005)
    with MultiArchiveServer({}) as fixture:
        template = fixture.start()
        for index in range(100):
            payload, attack = hostile_tarball(rng, index)
            ref = f"evil-{index}"
            fixture.add(ref, payload)
            try:
                area.materialize(RepoRef(template, ref))
            except UnsafeEntryError:
                pass
            else:
                raise AssertionError(f"archive #{index} ({attack}) was accepted")

    assert outside_snapshot() == before
    assert (victim / "canary.txt").read_text(encoding="utf-8") == "untouched\n"
    assert Path("/etc/passwd").read_bytes() == passwd_before
    assert Path("/etc/hosts").read_bytes() == hosts_before
    for index in range(100):
        assert not Path(f"/tmp/absolute-{index}.txt").exists()
    print("workspace confinement: 100/100 hostile archives rejected in place")


def test_every_api_route_rejects_missing_and_bad_tokens(live_server, tmp_path):
    """Route enumeration: every /api/v1 endpoint answers 401 to requests
    with no token and with a wrong token."""
    def api_routes(app) -> list[tuple[str, str]]:
        # Routers added via include_router may stay nested rather than
        # being flattened into app.routes, so walk the whole tree.
        found: list[tuple[str, str]] = []

        def walk(routes) -> None:
            for route in routes:
                path = getattr(route, "path", None)
                methods = getattr(route, "methods", None)
                if path and methods and path.startswith("/api/"):
                    found.extend(
                        (path, method)
                        for method in sorted(methods - {"HEAD", "OPTIONS"})
                    )
                nested = getattr(route, "original_router", None)
                if nested is None:
                    nested = getattr(route, "router", None)
                if nested is not None:
                    walk(nested.routes)

        walk(app.routes)
        return found

    app = create_app(make_config(tmp_path / "enum"))
    try:
        routes = api_routes(app)
    finally:
        app.state.engine.shutdown()
    assert len(routes) >= 6, f"expected at least 6 API routes, found {routes}"

    for path, method in routes:
        url = live_server["url"] + re.sub(r"\{[^}]+\}", "f" * 32, path)
        bare = requests.request(method, url)
        assert bare.status_code == 401, f"{method} {path} without token: {bare.status_code}"
        wrong = requests.request(method, url, headers=auth_header("not-a-token"))
        assert wrong.status_code == 401, f"{method} {path} wrong token: {wrong.status_code}"
    print(f"auth totality: {len(routes)} routes reject missing and wrong tokens")
