"""Test-case generation and cross-solution consistency checks.

A case generator is a guest program that receives a seed as its only
argument and prints one test input. Every reference solution is run on that
input; the case is kept only when all of them agree on the output. Any
disagreement is reported, and a problem whose reference solutions disagree
is marked ambiguous so it stops being scored until a curator intervenes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from .errors import GeneratorHarnessError, NotFoundError, SandboxSetupError
from .judge import compare_output
from .model import ProblemStatus, Provenance, TestCase
from .sandbox import CompileFailure, CompiledArtifact, RunLimits, RunStatus, RuntimeRegistry, Sandbox
from .store import Store

__all__ = [
    "CaseGeneratorProgram",
    "ConsistencyReport",
    "Disagreement",
    "GenerationReport",
    "generate_cases",
    "consistency_filter",
]

log = logging.getLogger("arena.casegen")

_GENERATOR_LIMITS = RunLimits(cpu_ms=10_000, wall_ms=30_000, memory_kib=512 * 1024)


@dataclass(frozen=True)
class CaseGeneratorProgram:
    pid: str
    guest_language_id: str
    source: str


@dataclass(frozen=True)
class Disagreement:
    """Two reference solutions (or a solution and a crash) diverged."""

    pid: str
    seed: Optional[int]
    case_id: Optional[str]
    detail: str


@dataclass(frozen=True)
class GenerationReport:
    cases: tuple[TestCase, ...]
    disagreements: tuple[Disagreement, ...]
    skipped_seeds: tuple[int, ...]


@dataclass(frozen=True)
class ConsistencyReport:
    pid: str
    status: ProblemStatus
    disagreements: tuple[Disagreement, ...]


class _SolutionSet:
    """Compiled reference solutions, reused across seeds."""

    def __init__(self, sandbox: Sandbox, registry: RuntimeRegistry, problem):
        self.artifacts: list[CompiledArtifact] = []
        self.failures: list[str] = []
        for i, solution in enumerate(problem.canonical_solutions):
            runtime = registry.get(solution.language)
            prepared = sandbox.prepare(runtime, solution.source)
            if isinstance(prepared, CompileFailure):
                self.failures.append(f"solution {i} does not compile: {prepared.log}")
            else:
                self.artifacts.append(prepared)

    def cleanup(self) -> None:
        for artifact in self.artifacts:
            artifact.cleanup()


def _agreed_output(
    sandbox: Sandbox,
    solutions: _SolutionSet,
    case_input: bytes,
    limits: RunLimits,
    pid: str,
    seed: Optional[int],
    case_id: Optional[str],
) -> tuple[Optional[bytes], Optional[Disagreement]]:
    """Run every solution on one input; return its output iff they all agree."""
    reference: Optional[bytes] = None
    for i, artifact in enumerate(solutions.artifacts):
        run = sandbox.execute(artifact, case_input, limits)
        if run.status is not RunStatus.OK:
            return None, Disagreement(
                pid=pid,
                seed=seed,
                case_id=case_id,
                detail=f"solution {i} failed with {run.status.value}",
            )
        if reference is None:
            reference = run.stdout
        elif not compare_output(run.stdout, reference):
            return None, Disagreement(
                pid=pid,
                seed=seed,
                case_id=case_id,
                detail=f"solution {i} disagrees with solution 0",
            )
    return reference, None


def generate_cases(
    store: Store,
    sandbox: Sandbox,
    registry: RuntimeRegistry,
    generator: CaseGeneratorProgram,
    count: int,
    seed0: int = 1,
) -> GenerationReport:
    """Produce up to `count` agreed-upon cases and persist them."""
    problem = store.get_problem(generator.pid)
    if not problem.canonical_solutions:
        raise GeneratorHarnessError(f"problem {generator.pid!r} has no reference solutions")

    gen_runtime = registry.get(generator.guest_language_id)
    prepared_gen = sandbox.prepare(gen_runtime, generator.source)
    if isinstance(prepared_gen, CompileFailure):
        raise GeneratorHarnessError(f"generator does not compile: {prepared_gen.log}")

    solution_limits = RunLimits(
        cpu_ms=max(problem.cpu_limit_ms * 5, 10_000),
        memory_kib=max(problem.memory_limit_kib * 2, 512 * 1024),
    )

    solutions = _SolutionSet(sandbox, registry, problem)
    try:
        if solutions.failures:
            raise GeneratorHarnessError("; ".join(solutions.failures))

        payloads: list[tuple[bytes, bytes]] = []
        seeds_kept: list[int] = []
        disagreements: list[Disagreement] = []
        skipped: list[int] = []
        for seed in range(seed0, seed0 + count):
            gen_run = sandbox.execute(
                prepared_gen, b"", _GENERATOR_LIMITS, extra_argv=(str(seed),)
            )
            if gen_run.status is not RunStatus.OK or gen_run.stdout_truncated:
                log.warning(
                    "generator for %s failed on seed %d (%s); skipping",
                    generator.pid,
                    seed,
                    gen_run.status.value,
                )
                skipped.append(seed)
                continue
            output, disagreement = _agreed_output(
                sandbox,
                solutions,
                gen_run.stdout,
                solution_limits,
                generator.pid,
                seed,
                None,
            )
            if disagreement is not None:
                disagreements.append(disagreement)
                continue
            assert output is not None
            payloads.append((gen_run.stdout, output))
            seeds_kept.append(seed)

        if count > 0 and not payloads and not disagreements:
            raise GeneratorHarnessError(
                f"generator for {generator.pid!r} produced no usable cases"
            )

        created: list[TestCase] = []
        for (raw_in, raw_out), seed in zip(payloads, seeds_kept):
            created.extend(
                store.add_test_cases(
                    generator.pid, [(raw_in, raw_out)], Provenance.generated(seed)
                )
            )
        return GenerationReport(
            cases=tuple(created),
            disagreements=tuple(disagreements),
            skipped_seeds=tuple(skipped),
        )
    finally:
        solutions.cleanup()
        prepared_gen.cleanup()


def consistency_filter(
    store: Store,
    sandbox: Sandbox,
    registry: RuntimeRegistry,
    pid: str,
    generator: Optional[CaseGeneratorProgram] = None,
    sample_size: int = 8,
    seed0: int = 1,
) -> ConsistencyReport:
    """Probe a problem for reference-solution disagreement.

    With a generator, fresh sampled inputs are used (and kept on agreement);
    without one, the stored case inputs are replayed through every solution.
    Any divergence flips the problem to ambiguous.
    """
    problem = store.get_problem(pid)
    if problem.status is ProblemStatus.RETIRED:
        raise NotFoundError(f"problem {pid!r} is retired")

    disagreements: list[Disagreement] = []
    if len(problem.canonical_solutions) < 2 and generator is None:
        # A single solution cannot disagree with itself over stored inputs.
        return ConsistencyReport(pid=pid, status=problem.status, disagreements=())

    if generator is not None:
        report = generate_cases(store, sandbox, registry, generator, sample_size, seed0)
        disagreements.extend(report.disagreements)
    else:
        solution_limits = RunLimits(
            cpu_ms=max(problem.cpu_limit_ms * 5, 10_000),
            memory_kib=max(problem.memory_limit_kib * 2, 512 * 1024),
        )
        solutions = _SolutionSet(sandbox, registry, problem)
        try:
            if solutions.failures:
                disagreements.extend(
                    Disagreement(pid=pid, seed=None, case_id=None, detail=f)
                    for f in solutions.failures
                )
            else:
                for case in store.list_cases(pid):
                    _, disagreement = _agreed_output(
                        sandbox,
                        solutions,
                        case.input,
                        solution_limits,
                        pid,
                        None,
                        case.case_id,
                    )
                    if disagreement is not None:
                        disagreements.append(disagreement)
        finally:
            solutions.cleanup()

    if disagreements:
        updated = store.set_problem_status(pid, ProblemStatus.AMBIGUOUS)
        return ConsistencyReport(
            pid=pid, status=updated.status, disagreements=tuple(disagreements)
        )
    return ConsistencyReport(
        pid=pid, status=store.get_problem(pid).status, disagreements=()
    )
