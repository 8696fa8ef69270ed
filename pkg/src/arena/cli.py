"""Operator command line.

Every subcommand except `serve` is a thin HTTP client: it never opens the
state file, so it can run from any machine that can reach the service.
Structured output mode prints line-delimited JSON with the same content as
the underlying API response, for piping into other tools.

Exit codes: 0 success, 1 client-side error (4xx), 2 server/config error
(5xx, unreachable, bad config), 3 policy violation (409).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Any, Optional

import requests

from .archive import iter_archive_docs, parse_archive_record
from .config import load_config
from .errors import ConfigError, ImportFormatError, RecordInvalidError

__all__ = ["main"]

_TERMINAL_VERDICTS = {
    "Accepted",
    "WrongAnswer",
    "TimeLimitExceeded",
    "MemoryLimitExceeded",
    "RuntimeError",
    "CompileError",
    "InternalError",
}


class CliFailure(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _exit_code_for_status(status: int) -> int:
    if status == 409:
        return 3
    if status >= 500:
        return 2
    return 1


class ApiClient:
    def __init__(self, server: str, token: Optional[str] = None, timeout: float = 30.0):
        self._base = server.rstrip("/")
        self._session = requests.Session()
        if token:
            self._session.headers["Authorization"] = f"Token {token}"
        self._timeout = timeout

    def request(self, method: str, path: str, body: Optional[dict] = None) -> dict[str, Any]:
        url = self._base + path
        try:
            resp = self._session.request(method, url, json=body, timeout=self._timeout)
        except requests.RequestException as exc:
            raise CliFailure(f"cannot reach server: {exc}", 2) from exc
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise CliFailure(
                f"{method} {path} failed ({resp.status_code}): {detail}",
                _exit_code_for_status(resp.status_code),
            )
        try:
            return resp.json()
        except ValueError as exc:
            raise CliFailure(f"server returned a non-JSON body for {path}", 2) from exc

    def get(self, path: str) -> dict[str, Any]:
        return self.request("GET", path)

    def post(self, path: str, body: dict) -> dict[str, Any]:
        return self.request("POST", path, body)


def _emit(args: argparse.Namespace, records: list[dict[str, Any]], human: str) -> None:
    if args.output == "structured":
        for record in records:
            print(json.dumps(record, sort_keys=True))
    else:
        print(human)


def _load_token(args: argparse.Namespace) -> Optional[str]:
    if args.token_file:
        path = Path(args.token_file)
        if not path.exists():
            raise CliFailure(f"token file {path} not found", 1)
        return path.read_text(encoding="utf-8").strip()
    env = os.environ.get("ARENA_TOKEN")
    return env.strip() if env else None


def _client(args: argparse.Namespace) -> ApiClient:
    server = args.server or os.environ.get("ARENA_SERVER")
    if not server:
        raise CliFailure("no server given (use --server or ARENA_SERVER)", 1)
    return ApiClient(server, _load_token(args))


# ---- subcommands ----


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .app import ArenaService
    from .service import build_app

    try:
        config = load_config(args.config)
        service = ArenaService(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    service.start()
    app = build_app(service)
    # Bind before announcing readiness so a reader of this line can connect
    # immediately; early connections queue in the backlog until the loop runs.
    import socket

    sock = socket.create_server((config.host, config.port))
    print(
        f"arena ready: serving on {config.host}:{config.port}, "
        f"state in {config.store_path}",
        flush=True,
    )
    try:
        uvicorn.run(app, fd=sock.fileno(), log_level="warning")
    except KeyboardInterrupt:
        pass  # ctrl-c is a normal shutdown, not an error
    finally:
        sock.close()
        service.drain(timeout=30)
        service.stop()
    return 0


def cmd_auth(args: argparse.Namespace) -> int:
    server = args.server or os.environ.get("ARENA_SERVER")
    if not server:
        raise CliFailure("no server given (use --server or ARENA_SERVER)", 1)
    secret = args.secret if args.secret is not None else os.environ.get("ARENA_SECRET")
    if secret is None:
        import getpass

        secret = getpass.getpass("secret: ")
    client = ApiClient(server)
    doc = client.post("/api/authentication/", {"name": args.name, "secret": secret})
    token_file = args.token_file or "arena-token"
    path = Path(token_file)
    path.write_text(doc["token"] + "\n", encoding="utf-8")
    os.chmod(path, 0o600)
    # The token value itself stays out of stdout on purpose.
    _emit(args, [{"token_file": str(path)}], f"token written to {path}")
    return 0


def cmd_import(args: argparse.Namespace) -> int:
    client = _client(args)
    path = Path(args.file)
    if not path.exists():
        raise CliFailure(f"archive {path} not found", 1)
    try:
        docs = list(iter_archive_docs(path.read_text(encoding="utf-8").splitlines()))
    except ImportFormatError as exc:
        raise CliFailure(f"archive rejected: {exc}", 1)
    accepted = 0
    rejected: list[dict[str, Any]] = []
    for line_no, doc in docs:
        raw_pid = doc.get("pid")
        pid_label = raw_pid if isinstance(raw_pid, str) and raw_pid else f"line {line_no}"
        try:
            record = parse_archive_record(doc, line_no)
        except RecordInvalidError as exc:
            rejected.append({"pid": pid_label, "reason": exc.reason})
            continue
        body = {
            "pid": record.problem.pid,
            "title": record.problem.title,
            "statement": record.problem.statement,
            "bps": str(record.problem.bps),
            "difficulty": record.problem.difficulty.value,
            "cpu_limit_ms": record.problem.cpu_limit_ms,
            "memory_limit_kib": record.problem.memory_limit_kib,
            "canonical_solutions": [s.to_doc() for s in record.problem.canonical_solutions],
            "test_cases": [
                {
                    "input": _b64(raw_in),
                    "output": _b64(raw_out),
                }
                for raw_in, raw_out in record.cases
            ],
        }
        try:
            client.post("/api/problem/", body)
            accepted += 1
        except CliFailure as exc:
            if exc.exit_code == 2:
                raise
            rejected.append({"pid": record.problem.pid, "reason": str(exc)})
    _emit(
        args,
        [{"accepted": accepted, "rejected": rejected}],
        f"accepted {accepted}, rejected {len(rejected)}",
    )
    return 0


def _b64(data: bytes) -> str:
    import base64

    return base64.b64encode(data).decode("ascii")


def cmd_activate(args: argparse.Namespace) -> int:
    client = _client(args)
    doc = client.post(f"/api/problem/{args.pid}/activate", {})
    _emit(args, [doc], f"problem {doc['pid']} active")
    return 0


def cmd_gen_cases(args: argparse.Namespace) -> int:
    client = _client(args)
    source = Path(args.generator_file).read_text(encoding="utf-8")
    doc = client.post(
        f"/api/problem/{args.pid}/case",
        {
            "generator": {
                "language": args.language,
                "source": source,
                "count": args.count,
                "seed0": args.seed,
            }
        },
    )
    ids = doc.get("case_ids", [])
    _emit(args, [doc], f"created {len(ids)} cases for {args.pid}")
    return 0


def cmd_submit(args: argparse.Namespace) -> int:
    client = _client(args)
    if args.prompt is not None:
        mode, source = "prompt", args.prompt
    else:
        if args.file is None:
            raise CliFailure("give a source file or --prompt", 1)
        mode, source = "code", Path(args.file).read_text(encoding="utf-8")
    doc = client.post(
        "/api/submission",
        {"pid": args.pid, "language": args.language, "mode": mode, "source": source},
    )
    _emit(args, [doc], f"submitted: {doc['submission_id']}")
    return 0


def cmd_submission(args: argparse.Namespace) -> int:
    client = _client(args)
    deadline = time.monotonic() + args.wait_timeout
    while True:
        doc = client.get(f"/api/submission/{args.sid}")
        if not args.wait or doc["verdict"] in _TERMINAL_VERDICTS:
            break
        if time.monotonic() >= deadline:
            raise CliFailure(f"submission {args.sid} still {doc['verdict']}", 1)
        time.sleep(args.poll_interval)
    human = f"{doc['sid']} {doc['verdict']}"
    if doc.get("total_cpu_ms") is not None:
        human += f" ({doc['total_cpu_ms']} ms cpu)"
    _emit(args, [doc], human)
    return 0


def cmd_problems(args: argparse.Namespace) -> int:
    client = _client(args)
    doc = client.get("/api/problem/")
    problems = doc.get("problems", [])
    lines = [f"{p['pid']}  {p['title']}" for p in problems]
    _emit(args, problems, "\n".join(lines) if lines else "(no problems)")
    return 0


def _ranking_once(client: ApiClient, args: argparse.Namespace) -> None:
    doc = client.get("/api/ranking")
    entries = doc.get("entries", [])
    lines = [f"{e['rank']:>4}  {e['user']:<24} dp={e['dp']:>10}  pass={e['pass']}%" for e in entries]
    _emit(args, entries, "\n".join(lines) if lines else "(no ranked users)")


def cmd_ranking(args: argparse.Namespace) -> int:
    client = _client(args)
    if not args.watch:
        _ranking_once(client, args)
        return 0
    try:
        while True:
            _ranking_once(client, args)
            time.sleep(args.interval)
    except KeyboardInterrupt:
        return 0


def cmd_checkpoint(args: argparse.Namespace) -> int:
    client = _client(args)
    if args.list:
        doc = client.get("/api/checkpoint/")
        checkpoints = doc.get("checkpoints", [])
        lines = [
            f"{c['checkpoint_id']}  {c['taken_at']}  {c['entry_count']} entries"
            for c in checkpoints
        ]
        _emit(args, checkpoints, "\n".join(lines) if lines else "(no checkpoints)")
        return 0
    doc = client.post("/api/checkpoint", {})
    _emit(
        args,
        [doc],
        f"checkpoint {doc['checkpoint_id']} written ({len(doc.get('entries', []))} entries)",
    )
    return 0


# ---- argument plumbing ----


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arena", description="online judge operations")
    parser.add_argument("--server", default=None, help="base URL of the service")
    parser.add_argument("--token-file", default=None, help="file holding the API token")
    parser.add_argument(
        "--output", choices=("human", "structured"), default="human", help="output mode"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("serve", help="run the service")
    p.add_argument("config", help="path to JSON config")
    p.set_defaults(fn=cmd_serve)

    p = commands.add_parser("auth", help="obtain and store an API token")
    p.add_argument("name")
    p.add_argument("--secret", default=None, help="account secret (or ARENA_SECRET, or prompt)")
    p.set_defaults(fn=cmd_auth)

    p = commands.add_parser("import", help="load a problem archive")
    p.add_argument("file")
    p.set_defaults(fn=cmd_import)

    p = commands.add_parser("activate", help="open a problem for submissions")
    p.add_argument("pid")
    p.set_defaults(fn=cmd_activate)

    p = commands.add_parser("gen-cases", help="generate test cases from a program")
    p.add_argument("pid")
    p.add_argument("generator_file")
    p.add_argument("-n", "--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--language", default="python3")
    p.set_defaults(fn=cmd_gen_cases)

    p = commands.add_parser("submit", help="submit a solution")
    p.add_argument("pid")
    p.add_argument("file", nargs="?")
    p.add_argument("--prompt", default=None, help="submit prompt text instead of code")
    p.add_argument("--language", default="python3")
    p.set_defaults(fn=cmd_submit)

    p = commands.add_parser("submission", help="show one submission")
    p.add_argument("sid")
    p.add_argument("--wait", action="store_true", help="poll until the verdict is terminal")
    p.add_argument("--poll-interval", type=float, default=2.0)
    p.add_argument("--wait-timeout", type=float, default=600.0)
    p.set_defaults(fn=cmd_submission)

    p = commands.add_parser("problems", help="list visible problems")
    p.set_defaults(fn=cmd_problems)

    p = commands.add_parser("ranking", help="show the scoreboard")
    p.add_argument("--watch", action="store_true")
    p.add_argument("--interval", type=float, default=10.0)
    p.set_defaults(fn=cmd_ranking)

    p = commands.add_parser("checkpoint", help="write or list scoreboard checkpoints")
    p.add_argument("--list", action="store_true")
    p.set_defaults(fn=cmd_checkpoint)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliFailure as exc:
        print(str(exc), file=sys.stderr)
        return exc.exit_code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
