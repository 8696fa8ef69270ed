"""Command line behavior against a real HTTP server."""

import json
import os
import signal
import subprocess
import sys
import time
from pathlib import Path

import pytest
import requests

from arena.cli import main

from conftest import (
    ECHO_PY,
    WRONG_PY,
    add_curator,
    add_human,
    add_machine,
    echo_archive_line,
    free_port,
    import_and_activate,
    sandbox_dir,
)


@pytest.fixture
def cli(live_server, tmp_path, monkeypatch):
    """Returns run(argv) -> (exit_code, stdout); pre-authenticated as curator."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("ARENA_TOKEN", raising=False)
    monkeypatch.delenv("ARENA_SERVER", raising=False)
    svc = live_server.service
    add_curator(svc, "cur")
    add_human(svc, "alice")
    add_machine(svc, "bot")

    class Cli:
        url = live_server.url
        service = svc

        def token_file(self, name):
            path = tmp_path / f"token-{name}"
            token = svc.authenticate(name, "pw-" + name)
            path.write_text(token + "\n")
            return str(path)

        def run(self, *argv, who="cur", capsys=None):
            args = ["--server", live_server.url]
            if who is not None:
                args += ["--token-file", self.token_file(who)]
            code = main([*args, *argv])
            out = capsys.readouterr() if capsys else None
            return code, out

    return Cli()


def write_archive(tmp_path, lines, name="fixtures.jsonl"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return str(path)


# ---- auth ----


def test_auth_writes_a_token_file_not_stdout(cli, tmp_path, capsys):
    code = main(["--server", cli.url, "auth", "cur", "--secret", "pw-cur"])
    out = capsys.readouterr().out
    assert code == 0
    token_path = tmp_path / "arena-token"
    assert token_path.exists()
    token = token_path.read_text().strip()
    assert len(token) == 43
    assert token not in out  # secrets stay off the terminal
    assert "token written to arena-token" in out
    assert oct(token_path.stat().st_mode & 0o777) == "0o600"


def test_auth_bad_secret_exits_1(cli, capsys):
    code = main(["--server", cli.url, "auth", "cur", "--secret", "wrong"])
    assert code == 1
    assert "401" in capsys.readouterr().err


# ---- import ----


def test_import_reports_accepted_counts(cli, tmp_path, capsys):
    archive = write_archive(tmp_path, [echo_archive_line(f"p{i}") for i in range(10)])
    code, out = cli.run("import", archive, capsys=capsys)
    assert code == 0
    assert out.out.strip() == "accepted 10, rejected 0"


def test_import_skips_bad_records_but_keeps_going(cli, tmp_path, capsys):
    lines = [
        echo_archive_line("good1"),
        json.dumps({"pid": "nostatement", "title": "t"}),
        echo_archive_line("good2"),
    ]
    archive = write_archive(tmp_path, lines)
    code, out = cli.run("--output", "structured", "import", archive, capsys=capsys)
    assert code == 0
    doc = json.loads(out.out)
    assert doc["accepted"] == 2
    assert doc["rejected"] == [{"pid": "nostatement", "reason": "missing field statement"}]


def test_import_rejects_malformed_archives_outright(cli, tmp_path, capsys):
    archive = write_archive(tmp_path, [echo_archive_line("ok"), "this is not json"])
    code, out = cli.run("import", archive, capsys=capsys)
    assert code == 1
    assert "archive rejected" in out.err
    assert cli.service.store.list_problems() == ()  # nothing landed


def test_import_missing_file_exits_1(cli, capsys):
    code, out = cli.run("import", "no-such-file.jsonl", capsys=capsys)
    assert code == 1
    assert "not found" in out.err


# ---- submit and wait ----


@pytest.fixture
def live_problem(cli, tmp_path, capsys):
    archive = write_archive(tmp_path, [echo_archive_line("p-live")])
    assert cli.run("import", archive, capsys=capsys)[0] == 0
    assert cli.run("activate", "p-live", capsys=capsys)[0] == 0
    return "p-live"


def test_submit_then_wait_reaches_accepted(cli, tmp_path, capsys, live_problem):
    src = tmp_path / "sol.py"
    src.write_text(ECHO_PY)
    code, out = cli.run("submit", live_problem, str(src), who="alice", capsys=capsys)
    assert code == 0
    sid = out.out.split()[-1]
    code, out = cli.run(
        "submission", sid, "--wait", "--poll-interval", "0.05", who="alice", capsys=capsys
    )
    assert code == 0
    assert out.out.startswith(f"{sid} Accepted")
    assert "ms cpu" in out.out


def test_machine_second_submit_is_a_policy_violation(cli, tmp_path, capsys, live_problem):
    src = tmp_path / "sol.py"
    src.write_text(WRONG_PY)
    assert cli.run("submit", live_problem, str(src), who="bot", capsys=capsys)[0] == 0
    code, out = cli.run("submit", live_problem, str(src), who="bot", capsys=capsys)
    assert code == 3
    assert "single attempt exhausted" in out.err


def test_submit_without_source_or_prompt_exits_1(cli, capsys, live_problem):
    code, out = cli.run("submit", live_problem, who="alice", capsys=capsys)
    assert code == 1
    assert "source file or --prompt" in out.err


# ---- listings ----


def test_problems_and_ranking_render_human_lines(cli, tmp_path, capsys, live_problem):
    src = tmp_path / "sol.py"
    src.write_text(ECHO_PY)
    cli.run("submit", live_problem, str(src), who="alice", capsys=capsys)
    cli.service.drain()
    code, out = cli.run("problems", who="alice", capsys=capsys)
    assert code == 0
    assert "p-live" in out.out
    code, out = cli.run("ranking", who="alice", capsys=capsys)
    assert code == 0
    assert "alice" in out.out
    assert "dp=" in out.out


def test_structured_ranking_matches_the_api(cli, tmp_path, capsys, live_problem):
    src = tmp_path / "sol.py"
    src.write_text(ECHO_PY)
    cli.run("submit", live_problem, str(src), who="alice", capsys=capsys)
    cli.service.drain()
    code, out = cli.run("--output", "structured", "ranking", who="alice", capsys=capsys)
    assert code == 0
    rows = [json.loads(line) for line in out.out.splitlines()]
    api_rows = requests.get(
        f"{cli.url}/api/ranking",
        headers={"Authorization": f"Token {cli.service.authenticate('alice', 'pw-alice')}"},
        timeout=10,
    ).json()["entries"]
    assert rows == api_rows


def test_checkpoint_roundtrip(cli, capsys, live_problem):
    code, out = cli.run("checkpoint", capsys=capsys)
    assert code == 0
    assert "checkpoint" in out.out
    code, out = cli.run("checkpoint", "--list", capsys=capsys)
    assert code == 0
    assert "entries" in out.out


# ---- failure modes ----


def test_unreachable_server_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    code = main(["--server", f"http://127.0.0.1:{free_port()}", "problems"])
    assert code == 2
    assert "cannot reach server" in capsys.readouterr().err


def test_no_server_configured_exits_1(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("ARENA_SERVER", raising=False)
    code = main(["problems"])
    assert code == 1
    assert "no server given" in capsys.readouterr().err


def test_env_vars_stand_in_for_flags(cli, monkeypatch, capsys, live_problem):
    monkeypatch.setenv("ARENA_SERVER", cli.url)
    monkeypatch.setenv("ARENA_TOKEN", cli.service.authenticate("alice", "pw-alice"))
    code = main(["problems"])
    assert code == 0
    assert "p-live" in capsys.readouterr().out


def test_missing_runtimes_file_fails_config_with_its_name(tmp_path, capsys):
    config = tmp_path / "serve.json"
    config.write_text(
        json.dumps(
            {
                "store_path": str(tmp_path / "state.jsonl"),
                "runtimes_file": str(tmp_path / "absent-runtimes.json"),
            }
        )
    )
    code = main(["serve", str(config)])
    assert code == 2
    assert "absent-runtimes.json" in capsys.readouterr().err


def test_unknown_config_key_exits_2(tmp_path, capsys):
    config = tmp_path / "serve.json"
    config.write_text(json.dumps({"store_pth": "x"}))
    code = main(["serve", str(config)])
    assert code == 2
    assert "store_pth" in capsys.readouterr().err


# ---- the serve subcommand, end to end ----


def spawn_server(config_path):
    proc = subprocess.Popen(
        [sys.executable, "-m", "arena", "serve", str(config_path)],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
    )
    line = proc.stdout.readline()
    assert proc.poll() is None, line
    return proc, line


def test_serve_announces_readiness_and_survives_restart(tmp_path):
    store_path = tmp_path / "state.jsonl"
    port = free_port()
    config = tmp_path / "serve.json"
    config.write_text(
        json.dumps(
            {
                "store_path": str(store_path),
                "port": port,
                "judge_workers": 1,
                "checkpoint_interval_s": 0,
                "sandbox_root": sandbox_dir(),
                "bootstrap_users": [
                    {"name": "boot-cur", "secret": "pw", "group": "curator"}
                ],
            }
        )
    )
    base = f"http://127.0.0.1:{port}"

    proc, ready = spawn_server(config)
    try:
        assert ready.strip() == (
            f"arena ready: serving on 127.0.0.1:{port}, state in {store_path}"
        )
        token = requests.post(
            f"{base}/api/authentication/",
            json={"name": "boot-cur", "secret": "pw"},
            timeout=10,
        ).json()["token"]
        headers = {"Authorization": f"Token {token}"}
        r = requests.post(
            f"{base}/api/problem/",
            json={"pid": "p-persist", "title": "t", "statement": "s"},
            headers=headers,
            timeout=10,
        )
        assert r.status_code == 201
    finally:
        proc.send_signal(signal.SIGINT)
        assert proc.wait(timeout=30) == 0

    # same config, fresh process: the problem must still be there
    proc, ready = spawn_server(config)
    try:
        token = requests.post(
            f"{base}/api/authentication/",
            json={"name": "boot-cur", "secret": "pw"},
            timeout=10,
        ).json()["token"]
        r = requests.get(
            f"{base}/api/problem/p-persist/",
            headers={"Authorization": f"Token {token}"},
            timeout=10,
        )
        assert r.status_code == 200
        assert r.json()["title"] == "t"
    finally:
        proc.send_signal(signal.SIGINT)
        proc.wait(timeout=30)
