import json
from fractions import Fraction

import pytest

from arena.archive import (
    iter_archive_docs,
    parse_archive,
    parse_archive_record,
    parse_export,
    problem_to_record,
)
from arena.errors import ImportFormatError, RecordInvalidError

from conftest import archive_line, echo_archive_line, problem_record


def test_minimal_record_parses_with_defaults():
    (rec,) = parse_archive([archive_line("p1")])
    assert rec.problem.pid == "p1"
    assert rec.problem.bps == Fraction(5)  # default point share
    assert rec.problem.cpu_limit_ms == 2000
    assert rec.problem.memory_limit_kib == 262144
    assert rec.cases == ()


def test_cases_survive_base64_roundtrip():
    (rec,) = parse_archive(
        [archive_line("p1", cases=[(b"\x00\xffbinary", b"ok\n")])]
    )
    assert rec.cases == ((b"\x00\xffbinary", b"ok\n"),)


def test_header_line_is_skipped():
    lines = ['{"format": "anything", "version": 1}', echo_archive_line("p1")]
    assert [r.problem.pid for r in parse_archive(lines)] == ["p1"]


def test_blank_lines_are_ignored():
    lines = ["", archive_line("p1"), "   ", archive_line("p2")]
    assert [r.problem.pid for r in parse_archive(lines)] == ["p1", "p2"]


def test_non_json_line_fails_with_position():
    with pytest.raises(ImportFormatError) as err:
        list(iter_archive_docs([archive_line("p1"), "not json at all"]))
    assert err.value.line_no == 2


def test_array_line_is_malformed_not_merely_invalid():
    with pytest.raises(ImportFormatError) as err:
        list(iter_archive_docs(["[1, 2, 3]"]))
    assert not isinstance(err.value, RecordInvalidError)


def test_missing_statement_is_a_record_level_failure():
    doc = problem_record("p4")
    del doc["statement"]
    with pytest.raises(RecordInvalidError) as err:
        parse_archive_record(doc, 4)
    assert err.value.reason == "missing field statement"
    assert err.value.line_no == 4


@pytest.mark.parametrize(
    "mutation, fragment",
    [
        ({"bps": -1}, "bps"),
        ({"bps": True}, "bps"),
        ({"cpu_limit_ms": 0}, "cpu_limit_ms"),
        ({"memory_limit_kib": "big"}, "memory_limit_kib"),
        ({"difficulty": "impossible"}, "difficulty"),
        ({"title": ""}, "title"),
        ({"canonical_solutions": [{"language": "python3"}]}, "source"),
        ({"test_cases": [{"input": "!!!", "output": "AA=="}]}, "base64"),
        ({"test_cases": "nope"}, "test_cases"),
    ],
)
def test_bad_field_shapes_are_record_level(mutation, fragment):
    doc = problem_record("p1")
    doc.update(mutation)
    with pytest.raises(RecordInvalidError) as err:
        parse_archive_record(doc, 1)
    assert fragment in err.value.reason


def test_bps_accepts_exact_ratio_strings():
    (rec,) = parse_archive([archive_line("p1", bps="7/3")])
    assert rec.problem.bps == Fraction(7, 3)
    (rec,) = parse_archive([archive_line("p2", bps=2.5)])
    assert rec.problem.bps == Fraction(5, 2)


def test_problem_record_roundtrip_is_exact():
    (rec,) = parse_archive([echo_archive_line("p1", bps="7/3")])
    doc = problem_to_record(rec.problem, rec.cases)
    again = parse_archive_record(doc, 1)
    assert again.problem == rec.problem
    assert again.cases == rec.cases


def test_integral_bps_exports_as_plain_number():
    (rec,) = parse_archive([archive_line("p1", bps=5)])
    doc = problem_to_record(rec.problem, rec.cases)
    assert doc["bps"] == 5


def test_export_is_reimportable_and_byte_stable(service):
    from conftest import add_human, import_and_activate, ECHO_PY

    import_and_activate(service, [echo_archive_line("p1")])
    user = add_human(service, "alice")
    from arena.model import SubmissionMode

    service.submit(user.uid, "p1", "python3", SubmissionMode.CODE, ECHO_PY)

    text = service.export_problem("p1")
    assert text == service.export_problem("p1")  # deterministic bytes

    doc = parse_export(text)
    assert doc.record.problem.pid == "p1"
    assert len(doc.submissions) == 1
    assert doc.submissions[0]["verdict"] == "Accepted"

    # the export line doubles as an import record
    (rec,) = parse_archive(text.splitlines())
    assert rec.problem.title == doc.record.problem.title
    assert rec.cases == doc.record.cases


def test_export_orders_submissions_by_sid(service):
    from conftest import add_human, import_and_activate, ECHO_PY, WRONG_PY
    from arena.model import SubmissionMode

    import_and_activate(service, [echo_archive_line("p1")])
    alice = add_human(service, "alice")
    bob = add_human(service, "bob")
    service.submit(bob.uid, "p1", "python3", SubmissionMode.CODE, WRONG_PY)
    service.submit(alice.uid, "p1", "python3", SubmissionMode.CODE, ECHO_PY)

    doc = parse_export(service.export_problem("p1"))
    sids = [s["sid"] for s in doc.submissions]
    assert sids == sorted(sids)
    verdicts = {s["sid"]: s["verdict"] for s in doc.submissions}
    assert set(verdicts.values()) == {"Accepted", "WrongAnswer"}
