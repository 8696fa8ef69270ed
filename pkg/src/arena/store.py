"""Durable state behind a write-ahead log.

Every mutation appends one JSON line ({"op", "doc"}) and fsyncs before the
in-memory tables change, so a crash mid-write loses at most the un-acked
operation. Opening a store replays the log to rebuild the tables; id
counters are recovered from the highest ids seen.

All reads hand out frozen snapshots. A single re-entrant lock serializes
access; operations are short (no sandbox work happens in here).
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from .errors import (
    AttemptExhaustedError,
    DuplicateError,
    NotFoundError,
    NotJudgeableError,
    TerminalVerdictError,
    ValidationError,
)
from .model import (
    ApiToken,
    AttemptPolicy,
    CaseResult,
    CheckpointSnapshot,
    Problem,
    ProblemStats,
    ProblemStatus,
    Provenance,
    Submission,
    SubmissionMode,
    TestCase,
    UserAccount,
    UserGroup,
    Verdict,
    utc_now,
)

__all__ = ["Store"]

_ACTIVATABLE_FROM = (ProblemStatus.DRAFT, ProblemStatus.AMBIGUOUS)


class Store:
    def __init__(self, path: str | os.PathLike[str]):
        self._path = Path(path)
        self._lock = threading.RLock()

        self._users: dict[str, UserAccount] = {}
        self._uids_by_name: dict[str, str] = {}
        self._tokens: dict[str, ApiToken] = {}
        self._problems: dict[str, Problem] = {}
        self._cases: dict[str, list[TestCase]] = {}
        self._submissions: dict[str, Submission] = {}
        self._sids_by_pid: dict[str, list[str]] = {}
        self._sids_by_uid_pid: dict[tuple[str, str], list[str]] = {}
        self._checkpoints: list[CheckpointSnapshot] = []

        self._next_sid = 1
        self._next_case = 1
        self._next_pid = 1
        self._next_uid = 1
        self._next_cp = 1
        self._last_submitted_at: Optional[datetime] = None

        self._path.parent.mkdir(parents=True, exist_ok=True)
        if self._path.exists():
            self._replay()
        self._fh = open(self._path, "a", encoding="utf-8")

    # ---- log machinery ----

    def _append(self, op: str, doc: dict[str, Any]) -> None:
        line = json.dumps({"op": op, "doc": doc}, ensure_ascii=True)
        self._fh.write(line + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def _replay(self) -> None:
        handlers: dict[str, Callable[[dict[str, Any]], None]] = {
            "user": self._apply_user,
            "token": self._apply_token,
            "problem": self._apply_problem,
            "case": self._apply_case,
            "submission": self._apply_submission,
            "checkpoint": self._apply_checkpoint,
        }
        with open(self._path, "r", encoding="utf-8") as fh:
            for raw in fh:
                raw = raw.strip()
                if not raw:
                    continue
                entry = json.loads(raw)
                handlers[entry["op"]](entry["doc"])

    @staticmethod
    def _id_number(identifier: str, prefix: str) -> int:
        return int(identifier[len(prefix):])

    def _apply_user(self, doc: dict[str, Any]) -> None:
        user = UserAccount.from_doc(doc)
        old = self._users.get(user.uid)
        if old is not None and old.name != user.name:
            self._uids_by_name.pop(old.name, None)
        self._users[user.uid] = user
        self._uids_by_name[user.name] = user.uid
        if user.uid.startswith("u") and user.uid[1:].isdigit():
            self._next_uid = max(self._next_uid, self._id_number(user.uid, "u") + 1)

    def _apply_token(self, doc: dict[str, Any]) -> None:
        token = ApiToken.from_doc(doc)
        self._tokens[token.digest] = token

    def _apply_problem(self, doc: dict[str, Any]) -> None:
        problem = Problem.from_doc(doc)
        self._problems[problem.pid] = problem
        self._cases.setdefault(problem.pid, [])
        self._sids_by_pid.setdefault(problem.pid, [])
        if problem.pid.startswith("p") and problem.pid[1:].isdigit():
            self._next_pid = max(self._next_pid, self._id_number(problem.pid, "p") + 1)

    def _apply_case(self, doc: dict[str, Any]) -> None:
        case = TestCase.from_doc(doc)
        self._cases.setdefault(case.pid, []).append(case)
        self._next_case = max(self._next_case, self._id_number(case.case_id, "c") + 1)

    def _apply_submission(self, doc: dict[str, Any]) -> None:
        sub = Submission.from_doc(doc)
        is_new = sub.sid not in self._submissions
        self._submissions[sub.sid] = sub
        if is_new:
            self._sids_by_pid.setdefault(sub.pid, []).append(sub.sid)
            self._sids_by_uid_pid.setdefault((sub.uid, sub.pid), []).append(sub.sid)
        self._next_sid = max(self._next_sid, self._id_number(sub.sid, "s") + 1)
        if self._last_submitted_at is None or sub.submitted_at > self._last_submitted_at:
            self._last_submitted_at = sub.submitted_at

    def _apply_checkpoint(self, doc: dict[str, Any]) -> None:
        cp = CheckpointSnapshot.from_doc(doc)
        self._checkpoints.append(cp)
        self._next_cp = max(self._next_cp, self._id_number(cp.checkpoint_id, "cp") + 1)

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    # ---- users and tokens ----

    def next_uid(self) -> str:
        with self._lock:
            uid = f"u{self._next_uid:06d}"
            self._next_uid += 1
            return uid

    def put_user(self, user: UserAccount) -> None:
        with self._lock:
            existing_uid = self._uids_by_name.get(user.name)
            if existing_uid is not None and existing_uid != user.uid:
                raise DuplicateError(f"user name {user.name!r} is taken")
            self._append("user", user.to_doc())
            self._apply_user(user.to_doc())

    def get_user(self, uid: str) -> UserAccount:
        with self._lock:
            user = self._users.get(uid)
            if user is None:
                raise NotFoundError(f"no user {uid!r}")
            return user

    def find_user_by_name(self, name: str) -> Optional[UserAccount]:
        with self._lock:
            uid = self._uids_by_name.get(name)
            return self._users.get(uid) if uid is not None else None

    def list_users(self) -> tuple[UserAccount, ...]:
        with self._lock:
            return tuple(sorted(self._users.values(), key=lambda u: u.uid))

    def put_token(self, token: ApiToken) -> None:
        with self._lock:
            self.get_user(token.uid)
            self._append("token", token.to_doc())
            self._apply_token(token.to_doc())

    def get_token(self, digest: str) -> Optional[ApiToken]:
        with self._lock:
            token = self._tokens.get(digest)
            if token is None or token.revoked:
                return None
            return token

    def revoke_tokens(self, uid: str) -> int:
        """Revoke every live token for a user; returns how many."""
        with self._lock:
            revoked = 0
            for digest, token in list(self._tokens.items()):
                if token.uid == uid and not token.revoked:
                    doc = ApiToken(
                        digest=digest, uid=uid, created_at=token.created_at, revoked=True
                    ).to_doc()
                    self._append("token", doc)
                    self._apply_token(doc)
                    revoked += 1
            return revoked

    # ---- problems and cases ----

    def next_pid(self) -> str:
        with self._lock:
            pid = f"p{self._next_pid:06d}"
            self._next_pid += 1
            return pid

    def put_problem(self, problem: Problem) -> None:
        with self._lock:
            if problem.pid in self._problems:
                raise DuplicateError(f"problem {problem.pid!r} already exists")
            self._append("problem", problem.to_doc())
            self._apply_problem(problem.to_doc())

    def get_problem(self, pid: str) -> Problem:
        with self._lock:
            problem = self._problems.get(pid)
            if problem is None:
                raise NotFoundError(f"no problem {pid!r}")
            return problem

    def list_problems(
        self, status: Optional[ProblemStatus] = None
    ) -> tuple[Problem, ...]:
        with self._lock:
            items = sorted(self._problems.values(), key=lambda p: p.pid)
            if status is not None:
                items = [p for p in items if p.status is status]
            return tuple(items)

    def set_problem_status(self, pid: str, status: ProblemStatus) -> Problem:
        with self._lock:
            problem = self.get_problem(pid)
            if problem.status is status:
                return problem
            if problem.status is ProblemStatus.RETIRED:
                raise ValidationError(f"problem {pid!r} is retired")
            if status is ProblemStatus.ACTIVE:
                if problem.status not in _ACTIVATABLE_FROM:
                    raise ValidationError(
                        f"cannot activate problem {pid!r} from {problem.status.value}"
                    )
                if not problem.judgeable:
                    raise NotJudgeableError(f"problem {pid!r} has no canonical solution")
                if not self._cases.get(pid):
                    raise NotJudgeableError(f"problem {pid!r} has no test cases")
            updated = problem.with_status(status)
            self._append("problem", updated.to_doc())
            self._apply_problem(updated.to_doc())
            return updated

    def add_test_cases(
        self,
        pid: str,
        payloads: Iterable[tuple[bytes, bytes]],
        provenance: Provenance,
    ) -> tuple[TestCase, ...]:
        with self._lock:
            self.get_problem(pid)
            existing = self._cases.setdefault(pid, [])
            created: list[TestCase] = []
            position = len(existing)
            for raw_in, raw_out in payloads:
                case = TestCase(
                    case_id=f"c{self._next_case:08d}",
                    pid=pid,
                    input=raw_in,
                    expected_output=raw_out,
                    provenance=provenance,
                    position=position,
                )
                self._append("case", case.to_doc())
                self._apply_case(case.to_doc())
                created.append(case)
                position += 1
            return tuple(created)

    def list_cases(self, pid: str) -> tuple[TestCase, ...]:
        with self._lock:
            self.get_problem(pid)
            return tuple(sorted(self._cases.get(pid, []), key=lambda c: c.position))

    # ---- submissions ----

    def _monotone_now(self) -> datetime:
        now = utc_now()
        if self._last_submitted_at is not None and now <= self._last_submitted_at:
            now = self._last_submitted_at + timedelta(microseconds=1)
        return now

    def record_submission(
        self,
        pid: str,
        uid: str,
        guest_language_id: str,
        mode: SubmissionMode,
        source: str,
    ) -> Submission:
        """Admit a new submission in Queued state, enforcing attempt policy.

        A pending (Queued/Judging) submission already holds the attempt for
        single-attempt users; only a host-fault verdict hands it back.
        """
        with self._lock:
            problem = self.get_problem(pid)
            if problem.status is not ProblemStatus.ACTIVE:
                raise NotJudgeableError(f"problem {pid!r} is not open for submissions")
            user = self.get_user(uid)
            if user.group is not UserGroup.GENERATOR:
                raise ValidationError(f"user {uid!r} cannot submit solutions")
            if user.attempt_policy is AttemptPolicy.SINGLE:
                for sid in self._sids_by_uid_pid.get((uid, pid), []):
                    if self._submissions[sid].verdict is not Verdict.INTERNAL_ERROR:
                        raise AttemptExhaustedError(
                            f"user {uid!r} already used the attempt on {pid!r}"
                        )
            sub = Submission(
                sid=f"s{self._next_sid:08d}",
                pid=pid,
                uid=uid,
                guest_language_id=guest_language_id,
                mode=mode,
                source=source,
                submitted_at=self._monotone_now(),
            )
            self._append("submission", sub.to_doc())
            self._apply_submission(sub.to_doc())
            return sub

    def get_submission(self, sid: str) -> Submission:
        with self._lock:
            sub = self._submissions.get(sid)
            if sub is None:
                raise NotFoundError(f"no submission {sid!r}")
            return sub

    def mark_judging(self, sid: str) -> Submission:
        with self._lock:
            sub = self.get_submission(sid)
            if sub.verdict.terminal:
                raise TerminalVerdictError(f"submission {sid!r} is already judged")
            if sub.verdict is Verdict.JUDGING:
                return sub
            updated = replace(sub, verdict=Verdict.JUDGING)
            self._append("submission", updated.to_doc())
            self._apply_submission(updated.to_doc())
            return updated

    def finalize_submission(
        self,
        sid: str,
        verdict: Verdict,
        case_results: tuple[CaseResult, ...] = (),
        total_cpu_ms: Optional[int] = None,
        peak_memory_kib: int = 0,
        resolved_code: Optional[str] = None,
        diagnostic: Optional[str] = None,
    ) -> Submission:
        if not verdict.terminal:
            raise ValidationError(f"{verdict.value} is not a terminal verdict")
        with self._lock:
            sub = self.get_submission(sid)
            if sub.verdict.terminal:
                raise TerminalVerdictError(f"submission {sid!r} is already judged")
            updated = replace(
                sub,
                verdict=verdict,
                case_results=case_results,
                total_cpu_ms=total_cpu_ms,
                peak_memory_kib=peak_memory_kib,
                resolved_code=resolved_code if resolved_code is not None else sub.resolved_code,
                diagnostic=diagnostic,
            )
            self._append("submission", updated.to_doc())
            self._apply_submission(updated.to_doc())
            return updated

    def list_submissions(
        self,
        pid: Optional[str] = None,
        uid: Optional[str] = None,
        verdict: Optional[Verdict] = None,
        offset: int = 0,
        limit: Optional[int] = None,
    ) -> tuple[Submission, ...]:
        with self._lock:
            if pid is not None and uid is not None:
                sids: Iterable[str] = self._sids_by_uid_pid.get((uid, pid), [])
            elif pid is not None:
                sids = self._sids_by_pid.get(pid, [])
            else:
                sids = sorted(self._submissions)
            subs = [self._submissions[s] for s in sids]
            if uid is not None and pid is None:
                subs = [s for s in subs if s.uid == uid]
            if verdict is not None:
                subs = [s for s in subs if s.verdict is verdict]
            subs.sort(key=lambda s: s.sid)
            if limit is None:
                return tuple(subs[offset:])
            return tuple(subs[offset : offset + limit])

    def all_submissions(self) -> tuple[Submission, ...]:
        with self._lock:
            return tuple(self._submissions[s] for s in sorted(self._submissions))

    def pending_sids(self) -> tuple[str, ...]:
        """Submissions still awaiting a verdict, oldest first."""
        with self._lock:
            return tuple(
                s
                for s in sorted(self._submissions)
                if not self._submissions[s].verdict.terminal
            )

    def requeue_pending(self) -> tuple[str, ...]:
        """Reset half-judged work back to Queued after a restart."""
        with self._lock:
            requeued = []
            for sid in sorted(self._submissions):
                sub = self._submissions[sid]
                if sub.verdict is Verdict.JUDGING:
                    doc = replace(sub, verdict=Verdict.QUEUED).to_doc()
                    self._append("submission", doc)
                    self._apply_submission(doc)
                    requeued.append(sid)
                elif sub.verdict is Verdict.QUEUED:
                    requeued.append(sid)
            return tuple(requeued)

    # ---- derived counts ----

    def problem_stats(self, pid: str) -> ProblemStats:
        """Distinct solver/attempter counts, recomputed from raw submissions."""
        with self._lock:
            self.get_problem(pid)
            solved: set[str] = set()
            attempted: set[str] = set()
            for sid in self._sids_by_pid.get(pid, []):
                sub = self._submissions[sid]
                if sub.verdict.counts_as_attempt:
                    attempted.add(sub.uid)
                    if sub.verdict is Verdict.ACCEPTED:
                        solved.add(sub.uid)
            return ProblemStats(
                pid=pid, solved_count=len(solved), attempted_count=len(attempted)
            )

    # ---- checkpoints ----

    def record_checkpoint(self, entries: tuple, taken_at: Optional[datetime] = None) -> CheckpointSnapshot:
        with self._lock:
            ts = taken_at if taken_at is not None else utc_now()
            if self._checkpoints and ts < self._checkpoints[-1].taken_at:
                ts = self._checkpoints[-1].taken_at
            cp = CheckpointSnapshot(
                checkpoint_id=f"cp{self._next_cp:06d}",
                taken_at=ts,
                entries=tuple(entries),
            )
            self._append("checkpoint", cp.to_doc())
            self._apply_checkpoint(cp.to_doc())
            return cp

    def get_checkpoint(self, checkpoint_id: str) -> CheckpointSnapshot:
        with self._lock:
            for cp in self._checkpoints:
                if cp.checkpoint_id == checkpoint_id:
                    return cp
            raise NotFoundError(f"no checkpoint {checkpoint_id!r}")

    def list_checkpoints(self) -> tuple[CheckpointSnapshot, ...]:
        with self._lock:
            return tuple(self._checkpoints)
