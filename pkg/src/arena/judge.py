"""The judging pipeline: source in, terminal verdict out.

Cases run in position order and stop at the first failure. Host-side faults
(a sandbox that cannot start, a backend that cannot answer) are retried once
and then surface as an internal-error verdict rather than being charged to
the submitter. Observers are notified exactly once per submission, after the
terminal verdict is durably recorded.
"""

from __future__ import annotations

import logging
from typing import Callable, Mapping, Optional

from .backends import GeneratorBackend
from .errors import BackendError, SandboxSetupError, UnknownRuntimeError
from .model import (
    CaseOutcome,
    CaseResult,
    ProblemStatus,
    Submission,
    SubmissionMode,
    Verdict,
)
from .sandbox import (
    CompileFailure,
    CompiledArtifact,
    RunLimits,
    RunResult,
    RunStatus,
    RuntimeRegistry,
    Sandbox,
)
from .store import Store

__all__ = ["JudgePipeline", "compare_output"]

log = logging.getLogger("arena.judge")

_STDERR_EXCERPT_CHARS = 500

_CASE_OUTCOME_BY_STATUS = {
    RunStatus.TIMEOUT: CaseOutcome.TIMEOUT,
    RunStatus.MEMORY_EXCEEDED: CaseOutcome.MEMORY_EXCEEDED,
    RunStatus.KILLED: CaseOutcome.CRASH,
    RunStatus.NONZERO_EXIT: CaseOutcome.CRASH,
}

_VERDICT_BY_OUTCOME = {
    CaseOutcome.FAIL: Verdict.WRONG_ANSWER,
    CaseOutcome.TIMEOUT: Verdict.TIME_LIMIT_EXCEEDED,
    CaseOutcome.MEMORY_EXCEEDED: Verdict.MEMORY_LIMIT_EXCEEDED,
    CaseOutcome.CRASH: Verdict.RUNTIME_ERROR,
}


def compare_output(actual: bytes, expected: bytes) -> bool:
    """Whitespace-tolerant equality: per-line trailing space and trailing
    blank lines are ignored; undecodable payloads fall back to exact bytes."""
    try:
        actual_text = actual.decode("utf-8")
        expected_text = expected.decode("utf-8")
    except UnicodeDecodeError:
        return actual == expected
    actual_lines = [line.rstrip() for line in actual_text.splitlines()]
    expected_lines = [line.rstrip() for line in expected_text.splitlines()]
    while actual_lines and actual_lines[-1] == "":
        actual_lines.pop()
    while expected_lines and expected_lines[-1] == "":
        expected_lines.pop()
    return actual_lines == expected_lines


def _excerpt(stderr: bytes) -> str:
    return stderr.decode("utf-8", errors="replace")[:_STDERR_EXCERPT_CHARS]


class JudgePipeline:
    def __init__(
        self,
        store: Store,
        sandbox: Sandbox,
        registry: RuntimeRegistry,
        backends: Optional[Mapping[str, GeneratorBackend]] = None,
        output_cap_bytes: int = 8 * 1024 * 1024,
    ):
        self._store = store
        self._sandbox = sandbox
        self._registry = registry
        self._backends = dict(backends or {})
        self._output_cap = output_cap_bytes
        self._observers: list[Callable[[Submission], None]] = []

    def add_observer(self, callback: Callable[[Submission], None]) -> None:
        """Called once with each submission after its verdict is recorded."""
        self._observers.append(callback)

    def register_backend(self, backend: GeneratorBackend) -> None:
        """Install or replace the generator behind backend.backend_id."""
        self._backends[backend.backend_id] = backend

    # ---- pipeline ----

    def judge(self, sid: str) -> Submission:
        sub = self._store.get_submission(sid)
        if sub.verdict.terminal:
            return sub  # already judged; idempotent under requeue races
        self._store.mark_judging(sid)

        resolved: Optional[str] = None
        code = sub.source
        if sub.mode is SubmissionMode.PROMPT:
            try:
                resolved = self._resolve_prompt(sub)
            except BackendError as exc:
                return self._finish(
                    sid, Verdict.INTERNAL_ERROR, diagnostic=f"backend failure: {exc}"
                )
            code = resolved

        try:
            runtime = self._registry.get(sub.guest_language_id)
        except UnknownRuntimeError as exc:
            return self._finish(sid, Verdict.INTERNAL_ERROR, diagnostic=str(exc))

        try:
            prepared = self._retry_once(lambda: self._sandbox.prepare(runtime, code))
        except SandboxSetupError as exc:
            return self._finish(
                sid, Verdict.INTERNAL_ERROR, resolved=resolved, diagnostic=str(exc)
            )
        if isinstance(prepared, CompileFailure):
            return self._finish(
                sid, Verdict.COMPILE_ERROR, resolved=resolved, diagnostic=prepared.log
            )

        try:
            return self._run_cases(sid, prepared, resolved)
        finally:
            prepared.cleanup()

    def _run_cases(
        self, sid: str, artifact: CompiledArtifact, resolved: Optional[str]
    ) -> Submission:
        sub = self._store.get_submission(sid)
        problem = self._store.get_problem(sub.pid)
        cases = self._store.list_cases(sub.pid)
        if not cases:
            return self._finish(
                sid, Verdict.INTERNAL_ERROR, resolved=resolved,
                diagnostic=f"problem {sub.pid!r} has no test cases",
            )
        limits = RunLimits(
            cpu_ms=problem.cpu_limit_ms,
            memory_kib=problem.memory_limit_kib,
            output_cap_bytes=self._output_cap,
        )
        results: list[CaseResult] = []
        for case in cases:
            try:
                run = self._retry_once(
                    lambda: self._sandbox.execute(artifact, case.input, limits)
                )
            except SandboxSetupError as exc:
                return self._finish(
                    sid, Verdict.INTERNAL_ERROR, resolved=resolved, diagnostic=str(exc)
                )
            outcome = self._case_outcome(run, case.expected_output)
            results.append(
                CaseResult(
                    case_id=case.case_id,
                    outcome=outcome,
                    cpu_ms=run.cpu_ms,
                    memory_kib=run.peak_memory_kib,
                    stderr_excerpt=_excerpt(run.stderr),
                )
            )
            if outcome is not CaseOutcome.PASS:
                break

        case_results = tuple(results)
        peak = max((r.memory_kib for r in case_results), default=0)
        last = case_results[-1]
        if last.outcome is CaseOutcome.PASS:
            total = sum(r.cpu_ms for r in case_results)
            return self._finish(
                sid,
                Verdict.ACCEPTED,
                case_results=case_results,
                total_cpu_ms=total,
                peak_memory_kib=peak,
                resolved=resolved,
            )
        return self._finish(
            sid,
            _VERDICT_BY_OUTCOME[last.outcome],
            case_results=case_results,
            peak_memory_kib=peak,
            resolved=resolved,
            diagnostic=last.stderr_excerpt or None,
        )

    @staticmethod
    def _case_outcome(run: RunResult, expected: bytes) -> CaseOutcome:
        if run.status is RunStatus.OK:
            return (
                CaseOutcome.PASS
                if compare_output(run.stdout, expected)
                else CaseOutcome.FAIL
            )
        return _CASE_OUTCOME_BY_STATUS[run.status]

    def _resolve_prompt(self, sub: Submission) -> str:
        user = self._store.get_user(sub.uid)
        backend_id = user.backend_id or "mock"
        backend = self._backends.get(backend_id)
        if backend is None:
            raise BackendError(backend_id, "no such backend")
        return backend.resolve(sub.source, sub.pid)

    @staticmethod
    def _retry_once(op):
        try:
            return op()
        except SandboxSetupError as exc:
            log.warning("sandbox setup failed, retrying once: %s", exc)
            return op()

    def _finish(
        self,
        sid: str,
        verdict: Verdict,
        case_results: tuple[CaseResult, ...] = (),
        total_cpu_ms: Optional[int] = None,
        peak_memory_kib: int = 0,
        resolved: Optional[str] = None,
        diagnostic: Optional[str] = None,
    ) -> Submission:
        final = self._store.finalize_submission(
            sid,
            verdict,
            case_results=case_results,
            total_cpu_ms=total_cpu_ms,
            peak_memory_kib=peak_memory_kib,
            resolved_code=resolved,
            diagnostic=diagnostic,
        )
        for observer in self._observers:
            try:
                observer(final)
            except Exception:
                log.exception("submission observer failed for %s", sid)
        return final

    # ---- self-test ----

    def health_check(self) -> dict[str, bool]:
        """Run each active problem's first reference solution over its cases."""
        report: dict[str, bool] = {}
        for problem in self._store.list_problems(status=ProblemStatus.ACTIVE):
            if not problem.canonical_solutions:
                report[problem.pid] = False
                continue
            solution = problem.canonical_solutions[0]
            try:
                runtime = self._registry.get(solution.language)
                prepared = self._sandbox.prepare(runtime, solution.source)
            except (UnknownRuntimeError, SandboxSetupError):
                report[problem.pid] = False
                continue
            if isinstance(prepared, CompileFailure):
                report[problem.pid] = False
                continue
            limits = RunLimits(
                cpu_ms=problem.cpu_limit_ms,
                memory_kib=problem.memory_limit_kib,
                output_cap_bytes=self._output_cap,
            )
            ok = True
            try:
                for case in self._store.list_cases(problem.pid):
                    run = self._sandbox.execute(prepared, case.input, limits)
                    if run.status is not RunStatus.OK or not compare_output(
                        run.stdout, case.expected_output
                    ):
                        ok = False
                        break
            except SandboxSetupError:
                ok = False
            finally:
                prepared.cleanup()
            report[problem.pid] = ok
        return report
