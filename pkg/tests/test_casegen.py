import pytest

from arena.casegen import CaseGeneratorProgram, consistency_filter, generate_cases
from arena.errors import GeneratorHarnessError, NotFoundError
from arena.model import ProblemStatus
from arena.sandbox import Sandbox, default_registry

from conftest import (
    GEN_SUM_PY,
    SUM_PY,
    SUM_PY_ALT,
    SUM_PY_OFF_BY_ONE,
    archive_line,
    sandbox_dir,
    sum_archive_line,
)


@pytest.fixture(scope="module")
def box():
    return Sandbox(sandbox_dir())


@pytest.fixture(scope="module")
def registry():
    return default_registry()


def import_sum_problem(service, pid="p1", solutions=None):
    sols = solutions or [("python3", SUM_PY)]
    report = service.import_archive(
        [archive_line(pid, cases=[(b"1 2\n", b"3\n")], solutions=sols)]
    )
    assert report.accepted == 1
    return service.store.get_problem(pid)


def generator(pid="p1"):
    return CaseGeneratorProgram(pid=pid, guest_language_id="python3", source=GEN_SUM_PY)


def test_generated_cases_carry_seeds_and_agreed_outputs(service, box, registry):
    import_sum_problem(service)
    report = generate_cases(service.store, box, registry, generator(), count=4, seed0=10)
    assert len(report.cases) == 4
    assert report.disagreements == ()
    assert [c.provenance.seed for c in report.cases] == [10, 11, 12, 13]
    # input comes from the generator, output from the reference solution
    assert report.cases[0].input == b"10 71\n"
    assert report.cases[0].expected_output == b"81\n"
    stored = service.store.list_cases("p1")
    assert len(stored) == 5  # the imported case plus four generated ones


def test_two_agreeing_solutions_generate_cleanly(service, box, registry):
    import_sum_problem(service, solutions=[("python3", SUM_PY), ("python3", SUM_PY_ALT)])
    report = generate_cases(service.store, box, registry, generator(), count=3)
    assert len(report.cases) == 3
    assert report.disagreements == ()


def test_divergent_solutions_record_disagreements_not_cases(service, box, registry):
    import_sum_problem(
        service, solutions=[("python3", SUM_PY), ("python3", SUM_PY_OFF_BY_ONE)]
    )
    report = generate_cases(service.store, box, registry, generator(), count=3)
    assert report.cases == ()
    assert len(report.disagreements) == 3
    assert all(d.pid == "p1" for d in report.disagreements)
    assert all(d.seed is not None for d in report.disagreements)
    assert len(service.store.list_cases("p1")) == 1  # only the imported case


def test_zero_count_generates_nothing_without_complaint(service, box, registry):
    import_sum_problem(service)
    report = generate_cases(service.store, box, registry, generator(), count=0)
    assert report.cases == ()
    assert report.disagreements == ()


def test_generator_that_does_not_compile_is_a_harness_error(service, box, registry):
    import_sum_problem(service)
    broken = CaseGeneratorProgram(pid="p1", guest_language_id="c", source="int main( {")
    with pytest.raises(GeneratorHarnessError):
        generate_cases(service.store, box, registry, broken, count=2)


def test_problem_without_solutions_cannot_generate(service, box, registry):
    service.import_archive([archive_line("p1", cases=[(b"1 2\n", b"3\n")])])
    with pytest.raises(GeneratorHarnessError):
        generate_cases(service.store, box, registry, generator(), count=2)


def test_crashing_generator_seeds_are_skipped(service, box, registry):
    import_sum_problem(service)
    flaky = CaseGeneratorProgram(
        pid="p1",
        guest_language_id="python3",
        source=(
            "import sys\n"
            "seed = int(sys.argv[1])\n"
            "if seed % 2 == 0:\n"
            "    raise SystemExit(9)\n"
            "print(seed, seed)\n"
        ),
    )
    report = generate_cases(service.store, box, registry, flaky, count=4, seed0=1)
    assert [c.provenance.seed for c in report.cases] == [1, 3]
    assert set(report.skipped_seeds) == {2, 4}


# ---- consistency filter ----


def activate(service, pid="p1"):
    service.store.set_problem_status(pid, ProblemStatus.ACTIVE)


def test_filter_keeps_agreeing_problems(service, box, registry):
    import_sum_problem(service, solutions=[("python3", SUM_PY), ("python3", SUM_PY_ALT)])
    activate(service)
    report = consistency_filter(service.store, box, registry, "p1")
    assert report.disagreements == ()
    assert report.status is ProblemStatus.ACTIVE
    assert service.store.get_problem("p1").status is ProblemStatus.ACTIVE


def test_filter_marks_divergent_problems_ambiguous(service, box, registry):
    import_sum_problem(
        service, solutions=[("python3", SUM_PY), ("python3", SUM_PY_OFF_BY_ONE)]
    )
    activate(service)
    report = consistency_filter(service.store, box, registry, "p1")
    assert report.disagreements
    assert report.status is ProblemStatus.AMBIGUOUS
    assert service.store.get_problem("p1").status is ProblemStatus.AMBIGUOUS


def test_filter_with_generator_uses_fresh_inputs(service, box, registry):
    import_sum_problem(
        service, solutions=[("python3", SUM_PY), ("python3", SUM_PY_OFF_BY_ONE)]
    )
    report = consistency_filter(
        service.store, box, registry, "p1", generator=generator(), sample_size=2
    )
    assert len(report.disagreements) == 2
    assert all(d.seed is not None for d in report.disagreements)


def test_filter_is_vacuous_for_a_single_solution_without_generator(service, box, registry):
    import_sum_problem(service)
    activate(service)
    report = consistency_filter(service.store, box, registry, "p1")
    assert report.disagreements == ()
    assert report.status is ProblemStatus.ACTIVE


def test_filter_refuses_retired_problems(service, box, registry):
    import_sum_problem(service)
    service.store.set_problem_status("p1", ProblemStatus.RETIRED)
    with pytest.raises(NotFoundError):
        consistency_filter(service.store, box, registry, "p1")


def test_filter_checks_solutions_against_each_other_not_stored_answers(
    service, box, registry
):
    # a poisoned recorded answer is health_check's problem; the filter only
    # asks whether the reference solutions agree among themselves
    from arena.model import Provenance

    import_sum_problem(service, solutions=[("python3", SUM_PY), ("python3", SUM_PY_ALT)])
    service.store.add_test_cases("p1", [(b"2 2\n", b"5\n")], Provenance.imported())
    activate(service)
    report = consistency_filter(service.store, box, registry, "p1")
    assert report.disagreements == ()
    assert report.status is ProblemStatus.ACTIVE
    assert service.pipeline.health_check() == {"p1": False}


def test_filter_failure_leaves_status_untouched(service, box, registry):
    import_sum_problem(service, solutions=[("python3", SUM_PY), ("python3", SUM_PY_ALT)])
    broken = CaseGeneratorProgram(pid="p1", guest_language_id="c", source="int main( {")
    with pytest.raises(GeneratorHarnessError):
        consistency_filter(service.store, box, registry, "p1", generator=broken)
    assert service.store.get_problem("p1").status is ProblemStatus.DRAFT
