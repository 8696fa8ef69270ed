"""Problem archive import and solution export.

Import format: one JSON object per line. An optional leading header line
(any object carrying a "format" key) is skipped. Each record needs pid,
title, and statement; everything else has defaults. Case payloads are
base64 so binary inputs survive the trip.

Export format: a header line, then one line per submission, sorted and
key-ordered so identical state always serializes to identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Iterator, Optional

from .errors import ImportFormatError, RecordInvalidError, ValidationError
from .model import (
    CanonicalSolution,
    Difficulty,
    Problem,
    Submission,
    decode_fraction,
    encode_fraction,
)

EXPORT_FORMAT = "arena-solutions"
EXPORT_VERSION = 1

__all__ = [
    "ArchiveRecord",
    "EXPORT_FORMAT",
    "EXPORT_VERSION",
    "export_solutions",
    "iter_archive_docs",
    "parse_archive",
    "parse_export",
    "problem_to_record",
]


@dataclass(frozen=True)
class ArchiveRecord:
    """One parsed import line: the problem plus its raw case payloads."""

    problem: Problem
    cases: tuple[tuple[bytes, bytes], ...]  # (input, expected_output)


def _require_str(doc: dict[str, Any], key: str, line_no: int) -> str:
    value = doc.get(key)
    if value is None:
        raise RecordInvalidError(line_no, f"missing field {key}")
    if not isinstance(value, str) or not value:
        raise RecordInvalidError(line_no, f"field {key} must be a non-empty string")
    return value


def _parse_bps(doc: dict[str, Any], line_no: int) -> Fraction:
    raw = doc.get("bps", 5)
    if isinstance(raw, bool) or not isinstance(raw, (int, float, str)):
        raise RecordInvalidError(line_no, f"bps must be a number, got {type(raw).__name__}")
    try:
        bps = decode_fraction(raw)
    except ValidationError as exc:
        raise RecordInvalidError(line_no, str(exc)) from exc
    if bps < 0:
        raise RecordInvalidError(line_no, "bps must be >= 0")
    return bps


def _parse_int(doc: dict[str, Any], key: str, default: int, line_no: int) -> int:
    raw = doc.get(key, default)
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise RecordInvalidError(line_no, f"{key} must be an integer")
    if raw <= 0:
        raise RecordInvalidError(line_no, f"{key} must be positive")
    return raw


def _parse_case(doc: Any, index: int, line_no: int) -> tuple[bytes, bytes]:
    import base64

    if not isinstance(doc, dict):
        raise RecordInvalidError(line_no, f"test_cases[{index}] must be an object")
    try:
        raw_in = base64.b64decode(str(doc["input"]).encode("ascii"), validate=True)
        raw_out = base64.b64decode(str(doc["output"]).encode("ascii"), validate=True)
    except KeyError as exc:
        raise RecordInvalidError(line_no, f"test_cases[{index}] missing {exc.args[0]!r}") from exc
    except Exception as exc:
        raise RecordInvalidError(line_no, f"test_cases[{index}] is not valid base64") from exc
    return raw_in, raw_out


def _parse_solution(doc: Any, index: int, line_no: int) -> CanonicalSolution:
    if not isinstance(doc, dict):
        raise RecordInvalidError(line_no, f"canonical_solutions[{index}] must be an object")
    language = doc.get("language")
    source = doc.get("source")
    if not isinstance(language, str) or not language:
        raise RecordInvalidError(line_no, f"canonical_solutions[{index}] missing language")
    if not isinstance(source, str) or not source:
        raise RecordInvalidError(line_no, f"canonical_solutions[{index}] missing source")
    return CanonicalSolution(language=language, source=source)


def parse_archive_record(doc: dict[str, Any], line_no: int) -> ArchiveRecord:
    pid = _require_str(doc, "pid", line_no)
    title = _require_str(doc, "title", line_no)
    statement = _require_str(doc, "statement", line_no)
    bps = _parse_bps(doc, line_no)
    difficulty_raw = doc.get("difficulty", "unknown")
    try:
        difficulty = Difficulty(difficulty_raw)
    except ValueError:
        raise RecordInvalidError(line_no, f"unknown difficulty {difficulty_raw!r}") from None
    cpu_limit_ms = _parse_int(doc, "cpu_limit_ms", 2000, line_no)
    memory_limit_kib = _parse_int(doc, "memory_limit_kib", 262144, line_no)

    solutions_raw = doc.get("canonical_solutions", [])
    if not isinstance(solutions_raw, list):
        raise RecordInvalidError(line_no, "canonical_solutions must be a list")
    solutions = tuple(_parse_solution(d, i, line_no) for i, d in enumerate(solutions_raw))

    cases_raw = doc.get("test_cases", [])
    if not isinstance(cases_raw, list):
        raise RecordInvalidError(line_no, "test_cases must be a list")
    cases = tuple(_parse_case(d, i, line_no) for i, d in enumerate(cases_raw))

    try:
        problem = Problem(
            pid=pid,
            title=title,
            statement=statement,
            bps=bps,
            difficulty=difficulty,
            cpu_limit_ms=cpu_limit_ms,
            memory_limit_kib=memory_limit_kib,
            canonical_solutions=solutions,
        )
    except ValidationError as exc:
        raise RecordInvalidError(line_no, str(exc)) from exc
    return ArchiveRecord(problem=problem, cases=cases)


def iter_archive_docs(lines: Iterable[str]) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_no, doc) pairs; a line that is not a JSON object sinks
    the whole archive (ImportFormatError), per-record problems do not."""
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            doc = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ImportFormatError(line_no, f"not valid JSON: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ImportFormatError(line_no, "each line must be a JSON object")
        if line_no == 1 and "format" in doc and "pid" not in doc:
            continue  # header line
        yield line_no, doc


def parse_archive(lines: Iterable[str]) -> Iterator[ArchiveRecord]:
    """Yield records from an archive stream; raise on the first bad line."""
    for line_no, doc in iter_archive_docs(lines):
        yield parse_archive_record(doc, line_no)


def problem_to_record(
    problem: Problem, cases: Iterable[tuple[bytes, bytes]]
) -> dict[str, Any]:
    """Render a problem back into the import line shape."""
    import base64

    bps = problem.bps
    # Integral values export as plain JSON numbers; anything else keeps the
    # exact ratio string so a re-import reproduces the same Fraction.
    bps_out: Any = int(bps) if bps.denominator == 1 else encode_fraction(bps)
    return {
        "pid": problem.pid,
        "title": problem.title,
        "statement": problem.statement,
        "bps": bps_out,
        "difficulty": problem.difficulty.value,
        "cpu_limit_ms": problem.cpu_limit_ms,
        "memory_limit_kib": problem.memory_limit_kib,
        "canonical_solutions": [s.to_doc() for s in problem.canonical_solutions],
        "test_cases": [
            {
                "input": base64.b64encode(i).decode("ascii"),
                "output": base64.b64encode(o).decode("ascii"),
            }
            for i, o in cases
        ],
    }


def _submission_record(sub: Submission) -> dict[str, Any]:
    # Deliberately excludes wall-clock noise the importer cannot reproduce.
    return {
        "sid": sub.sid,
        "uid": sub.uid,
        "language": sub.guest_language_id,
        "mode": sub.mode.value,
        "source": sub.source,
        "resolved_code": sub.resolved_code,
        "verdict": sub.verdict.value,
        "total_cpu_ms": sub.total_cpu_ms,
        "case_results": [r.to_doc() for r in sub.case_results],
    }


def export_solutions(
    problem: Problem,
    cases: Iterable[tuple[bytes, bytes]],
    submissions: Iterable[Submission],
) -> str:
    """Serialize one problem with its submissions, byte-stable.

    The line is the import record plus a `submissions` array, so an export
    document feeds straight back into the importer (extra keys ignored).
    """
    record = problem_to_record(problem, cases)
    record["format"] = EXPORT_FORMAT
    record["version"] = EXPORT_VERSION
    record["submissions"] = [
        _submission_record(sub) for sub in sorted(submissions, key=lambda s: s.sid)
    ]
    return json.dumps(record, sort_keys=True, ensure_ascii=True) + "\n"


@dataclass(frozen=True)
class ExportDocument:
    record: ArchiveRecord
    submissions: tuple[dict[str, Any], ...]


def parse_export(text: str) -> ExportDocument:
    """Inverse of export_solutions, for round-trip verification."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ImportFormatError(1, "empty export document")
    doc = json.loads(lines[0])
    if doc.get("format") != EXPORT_FORMAT:
        raise ImportFormatError(1, f"unexpected format {doc.get('format')!r}")
    record = parse_archive_record(doc, 1)
    return ExportDocument(record=record, submissions=tuple(doc.get("submissions", ())))
