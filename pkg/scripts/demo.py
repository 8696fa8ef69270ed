#!/usr/bin/env python3
"""Walk the whole system once: import, activate, submit, rank, checkpoint.

Runs fully in-process against a throwaway state directory, so it is safe
to execute anywhere the package is installed:

    python3 scripts/demo.py
"""

import base64
import json
import shutil
import sys
import tempfile

from arena.app import ArenaService
from arena.config import ServiceConfig
from arena.model import GeneratorKind, SubmissionMode, UserGroup

ECHO = "import sys\nsys.stdout.write(sys.stdin.read())\n"
SLOW_ECHO = (
    "import sys\n"
    "data = sys.stdin.read()\n"
    "burn = sum(i * i for i in range(400000))\n"
    "sys.stdout.write(data)\n"
)
WRONG = "print('forty two')\n"


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def problem_line(pid: str, title: str) -> str:
    cases = [(b"hello\n", b"hello\n"), (b"demo\n", b"demo\n")]
    return json.dumps(
        {
            "pid": pid,
            "title": title,
            "statement": "Write stdin back to stdout, byte for byte.",
            "bps": 5,
            "canonical_solutions": [{"language": "python3", "source": ECHO}],
            "test_cases": [{"input": b64(i), "output": b64(o)} for i, o in cases],
        }
    )


def main() -> int:
    state_dir = tempfile.mkdtemp(prefix="arena-demo-")
    sandbox_dir = tempfile.mkdtemp(prefix="arena-demo-box-")
    service = ArenaService(
        ServiceConfig(
            store_path=f"{state_dir}/state.jsonl",
            judge_workers=0,  # judge inline so the script reads top to bottom
            checkpoint_interval_s=0,
            sandbox_root=sandbox_dir,
        )
    )
    try:
        print("== import two problems ==")
        report = service.import_archive(
            [problem_line("echo-1", "mirror"), problem_line("echo-2", "mirror, again")]
        )
        print(f"accepted {report.accepted}, rejected {len(report.rejected)}")
        for pid in ("echo-1", "echo-2"):
            service.activate_problem(pid)  # replays reference solutions first
            print(f"activated {pid}")

        print("\n== three contenders ==")
        ada = service.create_user("ada", "pw", generator_kind=GeneratorKind.HUMAN)
        bot = service.create_user("bot", "pw", generator_kind=GeneratorKind.MACHINE)
        eve = service.create_user("eve", "pw", generator_kind=GeneratorKind.HUMAN)
        service.create_user("board", "pw", group=UserGroup.READER)

        plays = [
            (ada, "echo-1", ECHO),
            (bot, "echo-1", SLOW_ECHO),
            (eve, "echo-1", WRONG),
            (ada, "echo-2", ECHO),
            (eve, "echo-2", ECHO),
        ]
        for user, pid, source in plays:
            sub = service.submit(user.uid, pid, "python3", SubmissionMode.CODE, source)
            cpu = f" in {sub.total_cpu_ms} ms" if sub.total_cpu_ms is not None else ""
            print(f"{user.name:>4} on {pid}: {sub.verdict.value}{cpu}")

        print("\n== scoreboard ==")
        for row in service.ranking_rows():
            print(f"{row['rank']:>2}. {row['user']:<6} dp={row['dp']:>6}  pass={row['pass']}%")

        checkpoint = service.write_checkpoint()
        print(f"\ncheckpoint {checkpoint.checkpoint_id} written "
              f"({len(checkpoint.entries)} entries, audit passed)")
        return 0
    finally:
        service.stop()
        shutil.rmtree(state_dir, ignore_errors=True)
        shutil.rmtree(sandbox_dir, ignore_errors=True)


if __name__ == "__main__":
    sys.exit(main())
