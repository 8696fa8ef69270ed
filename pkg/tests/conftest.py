"""Shared fixtures: tiny guest programs, service factories, archive builders."""

import base64
import json
import os
import shutil
import tempfile
from fractions import Fraction

import pytest

from arena.app import ArenaService
from arena.config import ServiceConfig
from arena.model import (
    AttemptPolicy,
    CanonicalSolution,
    CaseOutcome,
    CaseResult,
    GeneratorKind,
    Problem,
    ProblemStatus,
    Provenance,
    SubmissionMode,
    UserAccount,
    UserGroup,
    Verdict,
)
from arena.scoring import ScoringEngine
from arena.store import Store

# ---- guest programs -------------------------------------------------------
# All plain python3 so they run anywhere the suite runs; the lone C source
# exists to exercise the compile stage.

ECHO_PY = "import sys\nsys.stdout.write(sys.stdin.read())\n"

WRONG_PY = "import sys\nsys.stdin.read()\nprint('not the answer you expected')\n"

BUSY_PY = "x = 0\nwhile True:\n    x += 1\n"

# Touch every page so peak RSS actually climbs until the address-space cap.
ALLOC_PY = (
    "chunks = []\n"
    "while True:\n"
    "    chunks.append(bytearray(8 * 1024 * 1024))\n"
)

CRASH_PY = "import os\nos.abort()\n"

SLEEP_PY = (
    "import sys, time\n"
    "time.sleep(float(sys.argv[1]) if len(sys.argv) > 1 else 0.3)\n"
)

SUM_PY = "a, b = map(int, input().split())\nprint(a + b)\n"

# Same answers as SUM_PY but via a different route; pairs with it in
# agreement checks.
SUM_PY_ALT = (
    "import sys\n"
    "nums = sys.stdin.read().split()\n"
    "print(int(nums[0]) + int(nums[1]))\n"
)

# Disagrees with SUM_PY on every input: off by one.
SUM_PY_OFF_BY_ONE = "a, b = map(int, input().split())\nprint(a + b + 1)\n"

ECHO_C = (
    "#include <stdio.h>\n"
    "int main(void) {\n"
    "    int c;\n"
    "    while ((c = getchar()) != EOF) putchar(c);\n"
    "    return 0;\n"
    "}\n"
)

BROKEN_C = "int main( { this does not parse\n"

# Emits one sum-problem input line per seed.
GEN_SUM_PY = (
    "import sys\n"
    "seed = int(sys.argv[1])\n"
    "print(seed, seed * 7 + 1)\n"
)


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


# ---- archive builders ------------------------------------------------------


def problem_record(pid, cases=None, solutions=None, **overrides):
    doc = {
        "pid": pid,
        "title": f"problem {pid}",
        "statement": "read stdin, answer on stdout",
    }
    if solutions is not None:
        doc["canonical_solutions"] = [
            {"language": lang, "source": src} for lang, src in solutions
        ]
    if cases is not None:
        doc["test_cases"] = [
            {"input": b64(i), "output": b64(o)} for i, o in cases
        ]
    doc.update(overrides)
    return doc


def archive_line(pid, cases=None, solutions=None, **overrides):
    return json.dumps(problem_record(pid, cases, solutions, **overrides))


def echo_archive_line(pid, n_cases=2, **overrides):
    cases = [(f"case {i}\n".encode(), f"case {i}\n".encode()) for i in range(n_cases)]
    return archive_line(pid, cases=cases, solutions=[("python3", ECHO_PY)], **overrides)


def sum_archive_line(pid, pairs=((1, 2), (10, 32)), **overrides):
    cases = [(f"{a} {b}\n".encode(), f"{a + b}\n".encode()) for a, b in pairs]
    return archive_line(pid, cases=cases, solutions=[("python3", SUM_PY)], **overrides)


# ---- service factories -----------------------------------------------------

def fast_store_dir() -> str:
    """Scratch dir for write-ahead logs; shm when present keeps fsync cheap."""
    base = "/dev/shm" if os.path.isdir("/dev/shm") else None
    return tempfile.mkdtemp(prefix="arena-test-", dir=base)


_BOX_DIRS: list = []


def sandbox_dir() -> str:
    """Guest work roots live directly under /tmp: every path component must
    stay traversable after the privilege drop, which pytest's 0700 tmp_path
    is not."""
    path = tempfile.mkdtemp(prefix="arena-box-")
    _BOX_DIRS.append(path)
    return path


@pytest.fixture(scope="session", autouse=True)
def _reap_box_dirs():
    import shutil

    yield
    for path in _BOX_DIRS:
        shutil.rmtree(path, ignore_errors=True)


def make_service(root, workers=0, **cfg) -> ArenaService:
    config = ServiceConfig(
        store_path=os.path.join(str(root), "state.jsonl"),
        judge_workers=workers,
        checkpoint_interval_s=0,
        sandbox_root=cfg.pop("sandbox_root", None) or sandbox_dir(),
        **cfg,
    )
    service = ArenaService(config)
    if workers:
        service.start()
    return service


@pytest.fixture
def service(tmp_path):
    svc = make_service(tmp_path)
    yield svc
    svc.stop()


@pytest.fixture
def store(tmp_path) -> Store:
    return Store(os.path.join(str(tmp_path), "state.jsonl"))


# ---- account helpers -------------------------------------------------------


def add_curator(svc, name="curator"):
    return svc.create_user(name, "pw-" + name, group=UserGroup.CURATOR)


def add_human(svc, name):
    return svc.create_user(name, "pw-" + name, generator_kind=GeneratorKind.HUMAN)


def add_machine(svc, name, backend_id=None):
    return svc.create_user(
        name, "pw-" + name, generator_kind=GeneratorKind.MACHINE, backend_id=backend_id
    )


def import_and_activate(svc, lines):
    """Import archive lines and activate everything that landed."""
    report = svc.import_archive(lines)
    assert not report.rejected, report.rejected
    pids = [p.pid for p in svc.store.list_problems()]
    for pid in pids:
        svc.activate_problem(pid, check_consistency=False)
    return pids


# ---- live http server ------------------------------------------------------


def free_port() -> int:
    import socket

    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class LiveServer:
    """Real uvicorn on a loopback port, for clients that need actual HTTP."""

    def __init__(self, service, port=None):
        import threading
        import time

        import uvicorn

        from arena.service import build_app

        self.service = service
        self.port = port or free_port()
        config = uvicorn.Config(
            build_app(service), host="127.0.0.1", port=self.port, log_level="warning"
        )
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.monotonic() + 10
        while not self._server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("server did not come up")
            time.sleep(0.01)
        self.url = f"http://127.0.0.1:{self.port}"

    def stop(self):
        self._server.should_exit = True
        self._thread.join(timeout=10)
        self.service.stop()


@pytest.fixture
def live_server(tmp_path):
    server = LiveServer(make_service(tmp_path, workers=2))
    yield server
    server.stop()


# ---- scoring rig -----------------------------------------------------------


class ScoreRig:
    """Store plus scoring engine wired the way the service wires them, with
    the judging stage replaced by direct verdict stamping. Lets scoring tests
    drive thousands of judged submissions without touching a sandbox."""

    def __init__(self):
        self.dir = fast_store_dir()
        self.store = Store(os.path.join(self.dir, "state.jsonl"))
        self.engine = ScoringEngine(self.store)

    def close(self):
        self.store.close()
        shutil.rmtree(self.dir, ignore_errors=True)

    def user(self, name=None, machine=False):
        uid = self.store.next_uid()
        account = UserAccount(
            uid=uid,
            name=name or f"user-{uid}",
            group=UserGroup.GENERATOR,
            generator_kind=GeneratorKind.MACHINE if machine else GeneratorKind.HUMAN,
            attempt_policy=AttemptPolicy.SINGLE if machine else AttemptPolicy.UNLIMITED,
            secret_hash="h",
        )
        self.store.put_user(account)
        return uid

    def problem(self, bps=5, pid=None, active=True):
        pid = pid or self.store.next_pid()
        self.store.put_problem(
            Problem(
                pid=pid,
                title=f"t-{pid}",
                statement="s",
                bps=Fraction(bps),
                canonical_solutions=(CanonicalSolution("python3", "pass"),),
            )
        )
        self.store.add_test_cases(pid, [(b"", b"")], Provenance.imported())
        self.engine.on_problem_changed(self.store.get_problem(pid))
        if active:
            self.set_status(pid, ProblemStatus.ACTIVE)
        return pid

    def set_status(self, pid, status):
        self.store.set_problem_status(pid, status)
        self.engine.on_problem_changed(self.store.get_problem(pid))

    def judge(self, uid, pid, verdict, ms=None):
        """Record a submission and stamp its terminal verdict directly."""
        sub = self.store.record_submission(pid, uid, "python3", SubmissionMode.CODE, "src")
        if verdict is Verdict.ACCEPTED:
            results = (
                CaseResult("c1", CaseOutcome.PASS, cpu_ms=ms, memory_kib=64, stderr_excerpt=""),
            )
            done = self.store.finalize_submission(sub.sid, verdict, results, total_cpu_ms=ms)
        else:
            done = self.store.finalize_submission(sub.sid, verdict)
        self.engine.on_submission_judged(done)
        return done

    def accept(self, uid, pid, ms):
        return self.judge(uid, pid, Verdict.ACCEPTED, ms=ms)

    def reject(self, uid, pid):
        return self.judge(uid, pid, Verdict.WRONG_ANSWER)


@pytest.fixture
def rig():
    r = ScoreRig()
    yield r
    r.close()


def entry_facts(entry):
    """Project a ranking entry onto the oracle's output shape."""
    return (
        entry.uid,
        entry.dp,
        entry.pass_rate,
        {pid: (cs, es) for pid, cs, es in entry.per_problem},
    )
