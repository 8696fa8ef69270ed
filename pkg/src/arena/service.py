"""HTTP surface.

Bearer tokens ride in `Authorization: Token <value>`. Write access is
split by account group: curators manage problems and checkpoints,
generators submit solutions, readers only read. Every response body is
produced from a declared model so the served schema document describes
the wire format exactly.
"""

from __future__ import annotations

import base64
import logging
from typing import Any, Literal, Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .app import ArenaService
from .archive import parse_archive_record
from .casegen import CaseGeneratorProgram
from .errors import (
    ArenaError,
    AttemptExhaustedError,
    DuplicateError,
    GeneratorHarnessError,
    ImportFormatError,
    NotFoundError,
    NotJudgeableError,
    UnknownRuntimeError,
    ValidationError,
)
from .model import (
    Problem,
    ProblemStatus,
    Provenance,
    Submission,
    SubmissionMode,
    UserAccount,
    UserGroup,
)
from .scoring import format_percentage, format_points

__all__ = ["PERMISSIONS", "build_app"]

log = logging.getLogger("arena.service")

# (method, path template) -> groups allowed; None means no token required.
# Kept total on purpose: tests iterate this to pin the permission matrix.
PERMISSIONS: dict[tuple[str, str], Optional[frozenset[UserGroup]]] = {
    ("POST", "/api/authentication/"): None,
    ("GET", "/api/schema"): None,
    ("GET", "/api/problem/"): frozenset(UserGroup),
    ("POST", "/api/problem/"): frozenset({UserGroup.CURATOR}),
    ("GET", "/api/problem/{pid}/"): frozenset(UserGroup),
    ("POST", "/api/problem/{pid}/case"): frozenset({UserGroup.CURATOR}),
    ("POST", "/api/problem/{pid}/activate"): frozenset({UserGroup.CURATOR}),
    ("POST", "/api/problem/{pid}/retire"): frozenset({UserGroup.CURATOR}),
    ("GET", "/api/problem/{pid}/submission/"): frozenset(UserGroup),
    ("POST", "/api/submission"): frozenset({UserGroup.GENERATOR}),
    ("GET", "/api/submission/"): frozenset(UserGroup),
    ("GET", "/api/submission/{sid}"): frozenset(UserGroup),
    ("GET", "/api/ranking"): frozenset(UserGroup),
    ("GET", "/api/checkpoint/"): frozenset(UserGroup),
    ("POST", "/api/checkpoint"): frozenset({UserGroup.CURATOR}),
    ("GET", "/api/checkpoint/{checkpoint_id}"): frozenset(UserGroup),
}


# ---- wire documents ----


class TokenRequest(BaseModel):
    name: str
    secret: str


class TokenResponse(BaseModel):
    token: str


class SolutionDoc(BaseModel):
    language: str
    source: str


class CasePayload(BaseModel):
    input: str  # base64
    output: str  # base64


class ProblemCreateRequest(BaseModel):
    pid: Optional[str] = None
    title: str
    statement: str
    bps: float | int | str = 5
    difficulty: str = "unknown"
    cpu_limit_ms: int = 2000
    memory_limit_kib: int = 262144
    canonical_solutions: list[SolutionDoc] = Field(default_factory=list)
    test_cases: list[CasePayload] = Field(default_factory=list)


class ProblemCreateResponse(BaseModel):
    pid: str


class GeneratorDoc(BaseModel):
    language: str
    source: str
    count: int = 20
    seed0: int = 1


class CaseCreateRequest(BaseModel):
    cases: Optional[list[CasePayload]] = None
    generator: Optional[GeneratorDoc] = None


class CaseCreateResponse(BaseModel):
    case_ids: list[str]


class ProblemStatsDoc(BaseModel):
    solved_count: int
    attempted_count: int
    acceptance_rate: Optional[str] = None  # two decimals, null before attempts


class ProblemSummary(BaseModel):
    pid: str
    title: str


class ProblemList(BaseModel):
    problems: list[ProblemSummary]
    total: int


class ProblemDetail(BaseModel):
    pid: str
    title: str
    statement: str
    difficulty: str
    bps: str
    cpu_limit_ms: int
    memory_limit_kib: int
    status: str
    case_count: int
    stats: ProblemStatsDoc


class SubmitRequest(BaseModel):
    pid: str
    language: str
    mode: Literal["code", "prompt"] = "code"
    source: str


class SubmitResponse(BaseModel):
    submission_id: str


class CaseResultDoc(BaseModel):
    case_id: str
    outcome: str
    cpu_ms: int
    memory_kib: int
    stderr_excerpt: str


class SubmissionSummary(BaseModel):
    sid: str
    pid: str
    uid: str
    user: str
    language: str
    mode: str
    verdict: str
    submitted_at: str
    total_cpu_ms: Optional[int] = None


class SubmissionList(BaseModel):
    submissions: list[SubmissionSummary]
    total: int


class SubmissionDetail(SubmissionSummary):
    source: str
    resolved_code: Optional[str] = None
    case_results: list[CaseResultDoc]
    peak_memory_kib: int
    diagnostic: Optional[str] = None


class RankingRow(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    rank: int
    user: str
    dp: str
    pass_: str = Field(alias="pass")


class RankingResponse(BaseModel):
    entries: list[RankingRow]


class ProblemScoreDoc(BaseModel):
    pid: str
    challenge: str
    efficiency: str


class CheckpointEntryDoc(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    rank: int
    uid: str
    user: str
    dp: str
    pass_: str = Field(alias="pass")
    problems: list[ProblemScoreDoc]
    last_accepted_at: Optional[str] = None


class CheckpointSummary(BaseModel):
    checkpoint_id: str
    taken_at: str
    entry_count: int


class CheckpointList(BaseModel):
    checkpoints: list[CheckpointSummary]


class CheckpointDetail(BaseModel):
    checkpoint_id: str
    taken_at: str
    entries: list[CheckpointEntryDoc]


# ---- document builders ----


def _problem_detail(service: ArenaService, problem: Problem) -> ProblemDetail:
    stats = service.store.problem_stats(problem.pid)
    rate = stats.acceptance_rate
    return ProblemDetail(
        pid=problem.pid,
        title=problem.title,
        statement=problem.statement,
        difficulty=problem.difficulty.value,
        bps=format_points(problem.bps),
        cpu_limit_ms=problem.cpu_limit_ms,
        memory_limit_kib=problem.memory_limit_kib,
        status=problem.status.value,
        case_count=len(service.store.list_cases(problem.pid)),
        stats=ProblemStatsDoc(
            solved_count=stats.solved_count,
            attempted_count=stats.attempted_count,
            acceptance_rate=None if rate is None else format_points(rate),
        ),
    )


def _submission_summary(service: ArenaService, sub: Submission) -> dict[str, Any]:
    user = service.store.get_user(sub.uid)
    return {
        "sid": sub.sid,
        "pid": sub.pid,
        "uid": sub.uid,
        "user": user.name,
        "language": sub.guest_language_id,
        "mode": sub.mode.value,
        "verdict": sub.verdict.value,
        "submitted_at": sub.submitted_at.isoformat(),
        "total_cpu_ms": sub.total_cpu_ms,
    }


def _checkpoint_detail(cp) -> CheckpointDetail:
    entries = []
    for i, entry in enumerate(cp.entries, start=1):
        entries.append(
            CheckpointEntryDoc(
                rank=i,
                uid=entry.uid,
                user=entry.name,
                dp=format_points(entry.dp),
                **{"pass": format_percentage(entry.pass_rate)},
                problems=[
                    ProblemScoreDoc(
                        pid=pid, challenge=format_points(cs), efficiency=format_points(es)
                    )
                    for pid, cs, es in entry.per_problem
                ],
                last_accepted_at=(
                    entry.last_accepted_at.isoformat() if entry.last_accepted_at else None
                ),
            )
        )
    return CheckpointDetail(
        checkpoint_id=cp.checkpoint_id, taken_at=cp.taken_at.isoformat(), entries=entries
    )


def _decode_case_payloads(cases: list[CasePayload]) -> list[tuple[bytes, bytes]]:
    decoded = []
    for i, case in enumerate(cases):
        try:
            decoded.append(
                (
                    base64.b64decode(case.input.encode("ascii"), validate=True),
                    base64.b64decode(case.output.encode("ascii"), validate=True),
                )
            )
        except Exception:
            raise ValidationError(f"test_cases[{i}] is not valid base64")
    return decoded


# ---- application ----


def build_app(service: ArenaService) -> FastAPI:
    app = FastAPI(
        title="arena",
        version="0.1.0",
        openapi_url="/api/schema",
        docs_url=None,
        redoc_url=None,
    )
    app.state.service = service

    # Spec'd status mapping: 400 for malformed documents, not FastAPI's 422.
    @app.exception_handler(RequestValidationError)
    async def _on_bad_request(request: Request, exc: RequestValidationError):
        problems = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err.get("loc", ()) if p != "body")
            problems.append(f"{loc}: {err.get('msg', 'invalid')}")
        return JSONResponse(status_code=400, content={"detail": "; ".join(problems)})

    @app.exception_handler(AttemptExhaustedError)
    async def _on_attempt(request: Request, exc: AttemptExhaustedError):
        return JSONResponse(status_code=409, content={"detail": "single attempt exhausted"})

    @app.exception_handler(DuplicateError)
    async def _on_duplicate(request: Request, exc: DuplicateError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(NotFoundError)
    async def _on_missing(request: Request, exc: NotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(NotJudgeableError)
    async def _on_not_judgeable(request: Request, exc: NotJudgeableError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(UnknownRuntimeError)
    async def _on_unknown_runtime(request: Request, exc: UnknownRuntimeError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ValidationError)
    async def _on_invalid(request: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ArenaError)
    async def _on_arena_error(request: Request, exc: ArenaError):
        log.exception("unhandled service error")
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    def current_user(authorization: Optional[str] = Header(default=None)) -> UserAccount:
        if not authorization:
            raise HTTPException(status_code=401, detail="missing token")
        scheme, _, token = authorization.partition(" ")
        if scheme != "Token" or not token:
            raise HTTPException(status_code=401, detail="malformed authorization header")
        user = service.resolve_token(token.strip())
        if user is None:
            raise HTTPException(status_code=401, detail="invalid or revoked token")
        return user

    def require(*groups: UserGroup):
        allowed = frozenset(groups)

        def check(user: UserAccount = Depends(current_user)) -> UserAccount:
            if user.group not in allowed:
                raise HTTPException(status_code=403, detail="forbidden for this account group")
            return user

        return check

    curator = require(UserGroup.CURATOR)
    generator = require(UserGroup.GENERATOR)
    anyone = require(*UserGroup)

    # ---- authentication ----

    @app.post("/api/authentication/", response_model=TokenResponse)
    def issue_token(body: TokenRequest) -> TokenResponse:
        token = service.authenticate(body.name, body.secret)
        if token is None:
            raise HTTPException(status_code=401, detail="bad credentials")
        return TokenResponse(token=token)

    # ---- problems ----

    @app.get("/api/problem/", response_model=ProblemList)
    def list_problems(
        user: UserAccount = Depends(anyone),
        offset: int = Query(default=0, ge=0),
        limit: int = Query(default=100, ge=1, le=1000),
    ) -> ProblemList:
        problems = service.store.list_problems()
        if user.group is not UserGroup.CURATOR:
            problems = tuple(p for p in problems if p.status is ProblemStatus.ACTIVE)
        window = problems[offset : offset + limit]
        return ProblemList(
            problems=[ProblemSummary(pid=p.pid, title=p.title) for p in window],
            total=len(problems),
        )

    @app.post("/api/problem/", response_model=ProblemCreateResponse, status_code=201)
    def create_problem(
        body: ProblemCreateRequest, user: UserAccount = Depends(curator)
    ) -> ProblemCreateResponse:
        doc = body.model_dump()
        if doc["pid"] is None:
            doc["pid"] = service.store.next_pid()
        try:
            record = parse_archive_record(doc, 0)
        except ImportFormatError as exc:
            raise ValidationError(exc.reason)
        service.store.put_problem(record.problem)
        if record.cases:
            service.store.add_test_cases(record.problem.pid, record.cases, Provenance.imported())
        service.scoring.on_problem_changed(record.problem)
        return ProblemCreateResponse(pid=record.problem.pid)

    def _visible_problem(user: UserAccount, pid: str) -> Problem:
        problem = service.store.get_problem(pid)
        if user.group is not UserGroup.CURATOR and problem.status not in (
            ProblemStatus.ACTIVE,
            ProblemStatus.RETIRED,
        ):
            raise NotFoundError(f"no problem {pid!r}")
        return problem

    @app.get("/api/problem/{pid}/", response_model=ProblemDetail)
    def problem_detail(pid: str, user: UserAccount = Depends(anyone)) -> ProblemDetail:
        return _problem_detail(service, _visible_problem(user, pid))

    @app.post("/api/problem/{pid}/case", response_model=CaseCreateResponse, status_code=201)
    def add_cases(
        pid: str, body: CaseCreateRequest, user: UserAccount = Depends(curator)
    ) -> CaseCreateResponse:
        if (body.cases is None) == (body.generator is None):
            raise ValidationError("provide exactly one of cases or generator")
        service.store.get_problem(pid)
        if body.cases is not None:
            created = service.store.add_test_cases(
                pid, _decode_case_payloads(body.cases), Provenance.imported()
            )
            return CaseCreateResponse(case_ids=[c.case_id for c in created])
        gen = body.generator
        assert gen is not None
        program = CaseGeneratorProgram(pid=pid, guest_language_id=gen.language, source=gen.source)
        try:
            report = service.generate_cases(program, gen.count, gen.seed0)
        except GeneratorHarnessError as exc:
            raise ValidationError(str(exc))
        if report.disagreements:
            details = "; ".join(d.detail for d in report.disagreements[:5])
            raise HTTPException(
                status_code=409,
                detail=f"reference solutions disagree, problem marked ambiguous: {details}",
            )
        return CaseCreateResponse(case_ids=[c.case_id for c in report.cases])

    @app.post("/api/problem/{pid}/activate", response_model=ProblemCreateResponse)
    def activate_problem(pid: str, user: UserAccount = Depends(curator)) -> ProblemCreateResponse:
        try:
            problem, report = service.activate_problem(pid)
        except NotJudgeableError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if report is not None and report.disagreements:
            details = "; ".join(d.detail for d in report.disagreements[:5])
            raise HTTPException(
                status_code=409,
                detail=f"reference solutions disagree, problem marked ambiguous: {details}",
            )
        return ProblemCreateResponse(pid=problem.pid)

    @app.post("/api/problem/{pid}/retire", response_model=ProblemCreateResponse)
    def retire_problem(pid: str, user: UserAccount = Depends(curator)) -> ProblemCreateResponse:
        problem = service.retire_problem(pid)
        return ProblemCreateResponse(pid=problem.pid)

    @app.get("/api/problem/{pid}/submission/", response_model=SubmissionList)
    def problem_submissions(
        pid: str,
        user: UserAccount = Depends(anyone),
        offset: int = Query(default=0, ge=0),
        limit: int = Query(default=100, ge=1, le=1000),
    ) -> SubmissionList:
        _visible_problem(user, pid)
        all_subs = service.store.list_submissions(pid=pid)
        window = all_subs[offset : offset + limit]
        return SubmissionList(
            submissions=[SubmissionSummary(**_submission_summary(service, s)) for s in window],
            total=len(all_subs),
        )

    # ---- submissions ----

    @app.post("/api/submission", response_model=SubmitResponse, status_code=202)
    def submit(body: SubmitRequest, user: UserAccount = Depends(generator)) -> SubmitResponse:
        sub = service.submit(
            uid=user.uid,
            pid=body.pid,
            guest_language_id=body.language,
            mode=SubmissionMode(body.mode),
            source=body.source,
        )
        return SubmitResponse(submission_id=sub.sid)

    @app.get("/api/submission/", response_model=SubmissionList)
    def list_submissions(
        user: UserAccount = Depends(anyone),
        pid: Optional[str] = Query(default=None),
        uid: Optional[str] = Query(default=None),
        offset: int = Query(default=0, ge=0),
        limit: int = Query(default=100, ge=1, le=1000),
    ) -> SubmissionList:
        all_subs = service.store.list_submissions(pid=pid, uid=uid)
        window = all_subs[offset : offset + limit]
        return SubmissionList(
            submissions=[SubmissionSummary(**_submission_summary(service, s)) for s in window],
            total=len(all_subs),
        )

    @app.get("/api/submission/{sid}", response_model=SubmissionDetail)
    def submission_detail(sid: str, user: UserAccount = Depends(anyone)) -> SubmissionDetail:
        sub = service.store.get_submission(sid)
        return SubmissionDetail(
            **_submission_summary(service, sub),
            source=sub.source,
            resolved_code=sub.resolved_code,
            case_results=[
                CaseResultDoc(
                    case_id=r.case_id,
                    outcome=r.outcome.value,
                    cpu_ms=r.cpu_ms,
                    memory_kib=r.memory_kib,
                    stderr_excerpt=r.stderr_excerpt,
                )
                for r in sub.case_results
            ],
            peak_memory_kib=sub.peak_memory_kib,
            diagnostic=sub.diagnostic,
        )

    # ---- scoreboard ----

    @app.get("/api/ranking", response_model=RankingResponse)
    def ranking(user: UserAccount = Depends(anyone)) -> RankingResponse:
        rows = [
            RankingRow(
                rank=row["rank"], user=row["user"], dp=row["dp"], **{"pass": row["pass"]}
            )
            for row in service.ranking_rows()
        ]
        return RankingResponse(entries=rows)

    @app.get("/api/checkpoint/", response_model=CheckpointList)
    def list_checkpoints(user: UserAccount = Depends(anyone)) -> CheckpointList:
        return CheckpointList(
            checkpoints=[
                CheckpointSummary(
                    checkpoint_id=cp.checkpoint_id,
                    taken_at=cp.taken_at.isoformat(),
                    entry_count=len(cp.entries),
                )
                for cp in service.store.list_checkpoints()
            ]
        )

    @app.post("/api/checkpoint", response_model=CheckpointDetail, status_code=201)
    def create_checkpoint(user: UserAccount = Depends(curator)) -> CheckpointDetail:
        return _checkpoint_detail(service.write_checkpoint())

    @app.get("/api/checkpoint/{checkpoint_id}", response_model=CheckpointDetail)
    def checkpoint_detail(
        checkpoint_id: str, user: UserAccount = Depends(anyone)
    ) -> CheckpointDetail:
        return _checkpoint_detail(service.store.get_checkpoint(checkpoint_id))

    return app
