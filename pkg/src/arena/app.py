"""Composition root: wires storage, sandbox, judging, and scoring together
and exposes the operations the HTTP layer and the CLI both call.

With judge_workers=0 submissions are judged inline on the submitting thread,
which unit tests use for determinism; otherwise a fair queue feeds worker
threads and a background loop writes audited scoreboard checkpoints.
"""

from __future__ import annotations

import logging
import threading
from typing import Iterable, Mapping, Optional

from .archive import export_solutions, iter_archive_docs, parse_archive_record
from .backends import GeneratorBackend, MockGeneratorBackend
from .casegen import (
    CaseGeneratorProgram,
    ConsistencyReport,
    GenerationReport,
    consistency_filter,
    generate_cases,
)
from .config import ServiceConfig, load_runtimes_entries
from .errors import DuplicateError, NotFoundError, RecordInvalidError, ValidationError
from .judge import JudgePipeline
from .model import (
    ApiToken,
    AttemptPolicy,
    CheckpointSnapshot,
    GeneratorKind,
    ImportReport,
    Problem,
    ProblemStatus,
    Provenance,
    RankingEntry,
    Submission,
    SubmissionMode,
    UserAccount,
    UserGroup,
    utc_now,
)
from .sandbox import RuntimeRegistry, Sandbox, default_registry
from .scoring import ScoringEngine, format_percentage, format_points
from .store import Store
from .workqueue import JudgeQueue
from . import auth

__all__ = ["ArenaService"]

log = logging.getLogger("arena.app")


class _CheckpointLoop(threading.Thread):
    def __init__(self, service: "ArenaService", interval_s: float):
        super().__init__(name="checkpoint-loop", daemon=True)
        self._service = service
        self._interval = interval_s
        self._stop = threading.Event()

    def run(self) -> None:
        while not self._stop.wait(self._interval):
            try:
                self._service.write_checkpoint()
            except Exception:
                log.exception("periodic checkpoint failed")

    def stop(self) -> None:
        self._stop.set()


class ArenaService:
    def __init__(
        self,
        config: ServiceConfig,
        registry: Optional[RuntimeRegistry] = None,
        backends: Optional[Mapping[str, GeneratorBackend]] = None,
    ):
        self.config = config
        self.store = Store(config.store_path)
        self.sandbox = Sandbox(config.sandbox_root)
        if registry is not None:
            self.registry = registry
        elif config.runtimes_file is not None:
            self.registry = RuntimeRegistry.from_config(
                load_runtimes_entries(config.runtimes_file)
            )
        else:
            self.registry = default_registry()
        if backends is None:
            mock = MockGeneratorBackend()
            backends = {mock.backend_id: mock}
        self.pipeline = JudgePipeline(
            self.store,
            self.sandbox,
            self.registry,
            backends=backends,
            output_cap_bytes=config.output_cap_bytes,
        )
        self.scoring = ScoringEngine(self.store)
        self.pipeline.add_observer(self.scoring.on_submission_judged)
        self._inline = config.judge_workers == 0
        self.queue = JudgeQueue(self.pipeline.judge, workers=max(config.judge_workers, 1))
        self._checkpoint_loop: Optional[_CheckpointLoop] = None
        self._started = False
        self._bootstrap_users()

    def _bootstrap_users(self) -> None:
        for spec in self.config.bootstrap_users:
            if self.store.find_user_by_name(spec.name) is None:
                self.create_user(
                    name=spec.name,
                    secret=spec.secret,
                    group=UserGroup(spec.group),
                    generator_kind=GeneratorKind(spec.generator_kind),
                )

    # ---- lifecycle ----

    def start(self) -> None:
        if self._started or self._inline:
            return
        for sid in self.store.requeue_pending():
            sub = self.store.get_submission(sid)
            self.queue.submit(sub.uid, sid)
        self.queue.start()
        if self.config.checkpoint_interval_s > 0:
            self._checkpoint_loop = _CheckpointLoop(
                self, self.config.checkpoint_interval_s
            )
            self._checkpoint_loop.start()
        self._started = True

    def stop(self) -> None:
        if self._checkpoint_loop is not None:
            self._checkpoint_loop.stop()
            self._checkpoint_loop = None
        if self._started:
            self.queue.stop()
            self._started = False
        self.sandbox.close()
        self.store.close()

    def drain(self, timeout: float = 300.0) -> bool:
        """Wait for the judging backlog to settle (testing and shutdown aid)."""
        if self._inline:
            return True
        return self.queue.drain(timeout=timeout)

    # ---- accounts ----

    def create_user(
        self,
        name: str,
        secret: str,
        group: UserGroup = UserGroup.GENERATOR,
        generator_kind: GeneratorKind = GeneratorKind.NONE,
        backend_id: Optional[str] = None,
    ) -> UserAccount:
        if not name or not name.strip():
            raise ValidationError("user name must be non-empty")
        policy = (
            AttemptPolicy.SINGLE
            if generator_kind is GeneratorKind.MACHINE
            else AttemptPolicy.UNLIMITED
        )
        user = UserAccount(
            uid=self.store.next_uid(),
            name=name,
            group=group,
            generator_kind=generator_kind,
            attempt_policy=policy,
            secret_hash=auth.hash_secret(secret),
            backend_id=backend_id,
        )
        self.store.put_user(user)
        return user

    def authenticate(self, name: str, secret: str) -> Optional[str]:
        """Check credentials and rotate to a fresh bearer token."""
        user = self.store.find_user_by_name(name)
        if user is None or not auth.verify_secret(secret, user.secret_hash):
            return None
        self.store.revoke_tokens(user.uid)
        token = auth.new_token()
        self.store.put_token(
            ApiToken(digest=auth.digest_token(token), uid=user.uid, created_at=utc_now())
        )
        return token

    def resolve_token(self, token: str) -> Optional[UserAccount]:
        record = self.store.get_token(auth.digest_token(token))
        if record is None:
            return None
        try:
            return self.store.get_user(record.uid)
        except NotFoundError:
            return None

    # ---- problems ----

    def import_archive(self, lines: Iterable[str]) -> ImportReport:
        """Load problems from an archive stream.

        A line that is not a JSON object sinks the whole archive before
        anything persists; a record that fails validation or collides on pid
        is skipped and reported while the rest land.
        """
        docs = list(iter_archive_docs(lines))  # malformed input aborts here
        report = ImportReport()
        for line_no, doc in docs:
            raw_pid = doc.get("pid")
            pid = raw_pid if isinstance(raw_pid, str) and raw_pid else f"line {line_no}"
            try:
                record = parse_archive_record(doc, line_no)
            except RecordInvalidError as exc:
                report.rejected.append((pid, exc.reason))
                continue
            try:
                self.store.put_problem(record.problem)
            except DuplicateError:
                report.rejected.append((pid, "duplicate"))
                continue
            if record.cases:
                self.store.add_test_cases(pid, record.cases, Provenance.imported())
            self.scoring.on_problem_changed(self.store.get_problem(pid))
            report.accepted += 1
        return report

    def export_problem(self, pid: str) -> str:
        problem = self.store.get_problem(pid)
        cases = [(c.input, c.expected_output) for c in self.store.list_cases(pid)]
        submissions = self.store.list_submissions(pid=pid)
        return export_solutions(problem, cases, submissions)

    def activate_problem(
        self, pid: str, check_consistency: bool = True
    ) -> tuple[Problem, Optional[ConsistencyReport]]:
        """Open a problem for submissions, vetting solution agreement first."""
        report: Optional[ConsistencyReport] = None
        if check_consistency:
            report = consistency_filter(
                self.store, self.sandbox, self.registry, pid
            )
            if report.disagreements:
                self.scoring.on_problem_changed(self.store.get_problem(pid))
                return self.store.get_problem(pid), report
        problem = self.store.set_problem_status(pid, ProblemStatus.ACTIVE)
        self.scoring.on_problem_changed(problem)
        return problem, report

    def retire_problem(self, pid: str) -> Problem:
        problem = self.store.set_problem_status(pid, ProblemStatus.RETIRED)
        self.scoring.on_problem_changed(problem)
        return problem

    def run_consistency_filter(
        self,
        pid: str,
        generator: Optional[CaseGeneratorProgram] = None,
        sample_size: int = 8,
        seed0: int = 1,
    ) -> ConsistencyReport:
        report = consistency_filter(
            self.store,
            self.sandbox,
            self.registry,
            pid,
            generator=generator,
            sample_size=sample_size,
            seed0=seed0,
        )
        self.scoring.on_problem_changed(self.store.get_problem(pid))
        return report

    def generate_cases(
        self, generator: CaseGeneratorProgram, count: int, seed0: int = 1
    ) -> GenerationReport:
        report = generate_cases(
            self.store, self.sandbox, self.registry, generator, count, seed0
        )
        if report.disagreements:
            self.store.set_problem_status(generator.pid, ProblemStatus.AMBIGUOUS)
            self.scoring.on_problem_changed(self.store.get_problem(generator.pid))
        return report

    # ---- submissions ----

    def register_backend(self, backend: GeneratorBackend) -> None:
        self.pipeline.register_backend(backend)

    def submit(
        self, uid: str, pid: str, guest_language_id: str, mode: SubmissionMode, source: str
    ) -> Submission:
        self.registry.get(guest_language_id)  # unknown language fails fast
        if not source:
            raise ValidationError("source must be non-empty")
        sub = self.store.record_submission(pid, uid, guest_language_id, mode, source)
        if self._inline:
            return self.pipeline.judge(sub.sid)
        self.queue.submit(uid, sub.sid)
        return sub

    # ---- scoreboard ----

    def ranking(self) -> tuple[RankingEntry, ...]:
        return self.scoring.ranking()

    def ranking_rows(self) -> list[dict[str, object]]:
        """Presentation shape: rank plus two-decimal strings."""
        rows = []
        for i, entry in enumerate(self.scoring.ranking(), start=1):
            rows.append(
                {
                    "rank": i,
                    "user": entry.name,
                    "dp": format_points(entry.dp),
                    "pass": format_percentage(entry.pass_rate),
                }
            )
        return rows

    def write_checkpoint(self) -> CheckpointSnapshot:
        return self.scoring.write_checkpoint()
