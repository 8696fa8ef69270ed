"""Domain types and their persistence codecs.

All types are frozen dataclasses: the store swaps whole records on update,
so every value handed out is a consistent snapshot. Points and rates are
`Fraction` end to end; floats appear only at presentation boundaries.

Codecs (`to_doc` / `from_doc`) produce JSON-safe dicts: bytes are base64,
fractions are exact decimal-or-ratio strings, timestamps are UTC ISO-8601.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction
from typing import Any, Optional

from .errors import ValidationError

__all__ = [
    "AttemptPolicy",
    "ApiToken",
    "CanonicalSolution",
    "CaseOutcome",
    "CaseResult",
    "CheckpointSnapshot",
    "Difficulty",
    "GeneratorKind",
    "ImportReport",
    "Problem",
    "ProblemStats",
    "ProblemStatus",
    "Provenance",
    "RankingEntry",
    "Submission",
    "SubmissionMode",
    "TestCase",
    "UserAccount",
    "UserGroup",
    "Verdict",
]


class Verdict(str, Enum):
    QUEUED = "Queued"
    JUDGING = "Judging"
    ACCEPTED = "Accepted"
    WRONG_ANSWER = "WrongAnswer"
    TIME_LIMIT_EXCEEDED = "TimeLimitExceeded"
    MEMORY_LIMIT_EXCEEDED = "MemoryLimitExceeded"
    RUNTIME_ERROR = "RuntimeError"
    COMPILE_ERROR = "CompileError"
    INTERNAL_ERROR = "InternalError"

    @property
    def terminal(self) -> bool:
        return self not in (Verdict.QUEUED, Verdict.JUDGING)

    @property
    def counts_as_attempt(self) -> bool:
        """Terminal and chargeable to the submitter (host faults are not)."""
        return self.terminal and self is not Verdict.INTERNAL_ERROR


class CaseOutcome(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"
    TIMEOUT = "Timeout"
    MEMORY_EXCEEDED = "MemoryExceeded"
    CRASH = "Crash"


class ProblemStatus(str, Enum):
    DRAFT = "draft"
    ACTIVE = "active"
    AMBIGUOUS = "ambiguous"
    RETIRED = "retired"


class Difficulty(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"
    UNKNOWN = "unknown"


class UserGroup(str, Enum):
    CURATOR = "curator"
    GENERATOR = "generator"
    READER = "reader"


class GeneratorKind(str, Enum):
    MACHINE = "machine"
    HUMAN = "human"
    NONE = "none"


class AttemptPolicy(str, Enum):
    SINGLE = "single"
    UNLIMITED = "unlimited"


class SubmissionMode(str, Enum):
    CODE = "code"
    PROMPT = "prompt"


def _b64e(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _b64d(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except Exception as exc:
        raise ValidationError(f"invalid base64 payload: {exc}") from exc


def encode_fraction(value: Fraction) -> str:
    return str(value)


def decode_fraction(text: str | int | float) -> Fraction:
    # JSON numbers arrive as int/float; str(float) round-trips the decimal
    # literal the author wrote (5.0 -> "5.0" -> 5), keeping values exact.
    try:
        return Fraction(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"invalid rational {text!r}") from exc


def encode_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat()


def decode_ts(text: str) -> datetime:
    return datetime.fromisoformat(text).astimezone(timezone.utc)


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class CanonicalSolution:
    """Curator-supplied reference solution; the oracle for generated cases."""

    language: str
    source: str

    def to_doc(self) -> dict[str, Any]:
        return {"language": self.language, "source": self.source}

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "CanonicalSolution":
        return cls(language=str(doc["language"]), source=str(doc["source"]))


@dataclass(frozen=True)
class Problem:
    pid: str
    title: str
    statement: str
    bps: Fraction
    difficulty: Difficulty = Difficulty.UNKNOWN
    cpu_limit_ms: int = 2000
    memory_limit_kib: int = 262144
    canonical_solutions: tuple[CanonicalSolution, ...] = ()
    status: ProblemStatus = ProblemStatus.DRAFT

    def __post_init__(self) -> None:
        if self.bps < 0:
            raise ValidationError(f"problem {self.pid!r}: bps must be >= 0")
        if self.cpu_limit_ms <= 0 or self.memory_limit_kib <= 0:
            raise ValidationError(f"problem {self.pid!r}: limits must be positive")

    @property
    def judgeable(self) -> bool:
        """Has at least one canonical solution; cases are checked store-side."""
        return len(self.canonical_solutions) >= 1

    def with_status(self, status: ProblemStatus) -> "Problem":
        return replace(self, status=status)

    def to_doc(self) -> dict[str, Any]:
        return {
            "pid": self.pid,
            "title": self.title,
            "statement": self.statement,
            "bps": encode_fraction(self.bps),
            "difficulty": self.difficulty.value,
            "cpu_limit_ms": self.cpu_limit_ms,
            "memory_limit_kib": self.memory_limit_kib,
            "canonical_solutions": [s.to_doc() for s in self.canonical_solutions],
            "status": self.status.value,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "Problem":
        return cls(
            pid=doc["pid"],
            title=doc["title"],
            statement=doc["statement"],
            bps=decode_fraction(doc["bps"]),
            difficulty=Difficulty(doc.get("difficulty", "unknown")),
            cpu_limit_ms=int(doc["cpu_limit_ms"]),
            memory_limit_kib=int(doc["memory_limit_kib"]),
            canonical_solutions=tuple(
                CanonicalSolution.from_doc(d) for d in doc.get("canonical_solutions", [])
            ),
            status=ProblemStatus(doc.get("status", "draft")),
        )


@dataclass(frozen=True)
class Provenance:
    """Where a test case came from: curator-imported or generator-produced."""

    kind: str  # "imported" | "generated"
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in ("imported", "generated"):
            raise ValidationError(f"unknown provenance kind {self.kind!r}")
        if (self.kind == "generated") != (self.seed is not None):
            raise ValidationError("generated cases carry a seed; imported ones do not")

    @classmethod
    def imported(cls) -> "Provenance":
        return cls(kind="imported")

    @classmethod
    def generated(cls, seed: int) -> "Provenance":
        return cls(kind="generated", seed=seed)

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"kind": self.kind}
        if self.seed is not None:
            doc["seed"] = self.seed
        return doc

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "Provenance":
        return cls(kind=doc["kind"], seed=doc.get("seed"))


@dataclass(frozen=True)
class TestCase:
    case_id: str
    pid: str
    input: bytes
    expected_output: bytes
    provenance: Provenance
    position: int

    def __post_init__(self) -> None:
        if self.position < 0:
            raise ValidationError("test case position must be >= 0")

    def to_doc(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "pid": self.pid,
            "input": _b64e(self.input),
            "expected_output": _b64e(self.expected_output),
            "provenance": self.provenance.to_doc(),
            "position": self.position,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "TestCase":
        return cls(
            case_id=doc["case_id"],
            pid=doc["pid"],
            input=_b64d(doc["input"]),
            expected_output=_b64d(doc["expected_output"]),
            provenance=Provenance.from_doc(doc["provenance"]),
            position=int(doc["position"]),
        )


@dataclass(frozen=True)
class UserAccount:
    uid: str
    name: str
    group: UserGroup
    generator_kind: GeneratorKind
    attempt_policy: AttemptPolicy
    secret_hash: str
    backend_id: Optional[str] = None  # prompt-resolution backend for generators

    def __post_init__(self) -> None:
        if self.generator_kind is GeneratorKind.MACHINE and self.attempt_policy is not AttemptPolicy.SINGLE:
            raise ValidationError("machine generators are restricted to a single attempt")
        if self.group is not UserGroup.GENERATOR and self.generator_kind is not GeneratorKind.NONE:
            raise ValidationError("only generator accounts have a generator kind")

    def to_doc(self) -> dict[str, Any]:
        return {
            "uid": self.uid,
            "name": self.name,
            "group": self.group.value,
            "generator_kind": self.generator_kind.value,
            "attempt_policy": self.attempt_policy.value,
            "secret_hash": self.secret_hash,
            "backend_id": self.backend_id,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "UserAccount":
        return cls(
            uid=doc["uid"],
            name=doc["name"],
            group=UserGroup(doc["group"]),
            generator_kind=GeneratorKind(doc["generator_kind"]),
            attempt_policy=AttemptPolicy(doc["attempt_policy"]),
            secret_hash=doc["secret_hash"],
            backend_id=doc.get("backend_id"),
        )


@dataclass(frozen=True)
class ApiToken:
    digest: str  # sha256 of the raw token; raw value never stored
    uid: str
    created_at: datetime
    revoked: bool = False

    def to_doc(self) -> dict[str, Any]:
        return {
            "digest": self.digest,
            "uid": self.uid,
            "created_at": encode_ts(self.created_at),
            "revoked": self.revoked,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "ApiToken":
        return cls(
            digest=doc["digest"],
            uid=doc["uid"],
            created_at=decode_ts(doc["created_at"]),
            revoked=bool(doc["revoked"]),
        )


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    outcome: CaseOutcome
    cpu_ms: int
    memory_kib: int
    stderr_excerpt: str = ""

    def to_doc(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "outcome": self.outcome.value,
            "cpu_ms": self.cpu_ms,
            "memory_kib": self.memory_kib,
            "stderr_excerpt": self.stderr_excerpt,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "CaseResult":
        return cls(
            case_id=doc["case_id"],
            outcome=CaseOutcome(doc["outcome"]),
            cpu_ms=int(doc["cpu_ms"]),
            memory_kib=int(doc["memory_kib"]),
            stderr_excerpt=doc.get("stderr_excerpt", ""),
        )


@dataclass(frozen=True)
class Submission:
    sid: str
    pid: str
    uid: str
    guest_language_id: str
    mode: SubmissionMode
    source: str
    submitted_at: datetime
    verdict: Verdict = Verdict.QUEUED
    resolved_code: Optional[str] = None
    case_results: tuple[CaseResult, ...] = ()
    total_cpu_ms: Optional[int] = None
    peak_memory_kib: int = 0
    diagnostic: Optional[str] = None  # compile log / host-fault detail, bounded

    def __post_init__(self) -> None:
        if self.verdict is Verdict.ACCEPTED:
            if any(r.outcome is not CaseOutcome.PASS for r in self.case_results):
                raise ValidationError("accepted submissions pass every case")
            if not self.case_results:
                raise ValidationError("accepted submissions carry case results")
            expected_total = sum(r.cpu_ms for r in self.case_results)
            if self.total_cpu_ms != expected_total:
                raise ValidationError("total_cpu_ms must equal the sum of per-case cpu")
        elif self.total_cpu_ms is not None:
            raise ValidationError("total_cpu_ms is defined only for accepted submissions")

    def to_doc(self) -> dict[str, Any]:
        return {
            "sid": self.sid,
            "pid": self.pid,
            "uid": self.uid,
            "guest_language_id": self.guest_language_id,
            "mode": self.mode.value,
            "source": self.source,
            "submitted_at": encode_ts(self.submitted_at),
            "verdict": self.verdict.value,
            "resolved_code": self.resolved_code,
            "case_results": [r.to_doc() for r in self.case_results],
            "total_cpu_ms": self.total_cpu_ms,
            "peak_memory_kib": self.peak_memory_kib,
            "diagnostic": self.diagnostic,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "Submission":
        return cls(
            sid=doc["sid"],
            pid=doc["pid"],
            uid=doc["uid"],
            guest_language_id=doc["guest_language_id"],
            mode=SubmissionMode(doc["mode"]),
            source=doc["source"],
            submitted_at=decode_ts(doc["submitted_at"]),
            verdict=Verdict(doc["verdict"]),
            resolved_code=doc.get("resolved_code"),
            case_results=tuple(CaseResult.from_doc(d) for d in doc.get("case_results", [])),
            total_cpu_ms=doc.get("total_cpu_ms"),
            peak_memory_kib=int(doc.get("peak_memory_kib", 0)),
            diagnostic=doc.get("diagnostic"),
        )


@dataclass(frozen=True)
class ProblemStats:
    """Per-problem solver counts; the denominator is attempting users only."""

    pid: str
    solved_count: int
    attempted_count: int

    def __post_init__(self) -> None:
        if self.solved_count > self.attempted_count:
            raise ValidationError("solved users are a subset of attempting users")

    @property
    def acceptance_rate(self) -> Optional[Fraction]:
        if self.attempted_count == 0:
            return None
        return Fraction(self.solved_count, self.attempted_count)


@dataclass(frozen=True)
class RankingEntry:
    uid: str
    name: str
    dp: Fraction
    pass_rate: Fraction
    per_problem: tuple[tuple[str, Fraction, Fraction], ...]  # (pid, cs, es), sorted by pid
    last_accepted_at: Optional[datetime] = None

    def to_doc(self) -> dict[str, Any]:
        return {
            "uid": self.uid,
            "name": self.name,
            "dp": encode_fraction(self.dp),
            "pass_rate": encode_fraction(self.pass_rate),
            "per_problem": [
                [pid, encode_fraction(cs), encode_fraction(es)]
                for pid, cs, es in self.per_problem
            ],
            "last_accepted_at": encode_ts(self.last_accepted_at) if self.last_accepted_at else None,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "RankingEntry":
        return cls(
            uid=doc["uid"],
            name=doc["name"],
            dp=decode_fraction(doc["dp"]),
            pass_rate=decode_fraction(doc["pass_rate"]),
            per_problem=tuple(
                (pid, decode_fraction(cs), decode_fraction(es))
                for pid, cs, es in doc.get("per_problem", [])
            ),
            last_accepted_at=(
                decode_ts(doc["last_accepted_at"]) if doc.get("last_accepted_at") else None
            ),
        )


@dataclass(frozen=True)
class CheckpointSnapshot:
    checkpoint_id: str
    taken_at: datetime
    entries: tuple[RankingEntry, ...]

    def to_doc(self) -> dict[str, Any]:
        return {
            "checkpoint_id": self.checkpoint_id,
            "taken_at": encode_ts(self.taken_at),
            "entries": [e.to_doc() for e in self.entries],
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "CheckpointSnapshot":
        return cls(
            checkpoint_id=doc["checkpoint_id"],
            taken_at=decode_ts(doc["taken_at"]),
            entries=tuple(RankingEntry.from_doc(d) for d in doc.get("entries", [])),
        )


@dataclass
class ImportReport:
    accepted: int = 0
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def to_doc(self) -> dict[str, Any]:
        return {"accepted": self.accepted, "rejected": [list(r) for r in self.rejected]}
