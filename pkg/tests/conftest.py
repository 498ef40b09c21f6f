import numpy as np
import pandas as pd
import pytest

from leapbench.dataset import RawTables, SynthConfig, build_cohort, generate_synthetic


def make_tables(info, vle_rows=(), sites=(), assessments=(), submissions=()):
    """Small hand-written RawTables; ``info`` rows are (module, presentation, student, result)."""
    student_info = pd.DataFrame(list(info), columns=["code_module", "code_presentation",
                                                     "id_student", "final_result"])
    student_info["id_student"] = student_info["id_student"].astype("int64")
    student_vle = pd.DataFrame(list(vle_rows), columns=["code_module", "code_presentation", "id_student",
                                                        "id_site", "date", "sum_click"])
    student_vle = student_vle.astype({"id_student": "int64", "id_site": "int64", "date": "int64",
                                      "sum_click": "int64"})
    vle = pd.DataFrame(list(sites), columns=["id_site", "code_module", "code_presentation", "activity_type"])
    vle = vle.astype({"id_site": "int64"})
    a = pd.DataFrame(list(assessments), columns=["code_module", "code_presentation", "id_assessment", "date"])
    a = a.astype({"id_assessment": "int64"})
    a["date"] = a["date"].astype("Int64")
    sa = pd.DataFrame(list(submissions), columns=["id_assessment", "id_student", "date_submitted", "score"])
    sa = sa.astype({"id_assessment": "int64", "id_student": "int64", "score": "float64"})
    sa["date_submitted"] = sa["date_submitted"].astype("Int64")
    return RawTables(student_info, student_vle, vle, a, sa)


@pytest.fixture
def two_student_tables():
    """Student 1 has the worked interaction/assessment examples; student 2 acts only on day 20."""
    return make_tables(
        info=[("AAA", "2013J", 1, "Pass"), ("AAA", "2013J", 2, "Fail")],
        vle_rows=[
            ("AAA", "2013J", 1, 100, 1, 3),
            ("AAA", "2013J", 1, 200, 5, 2),
            ("AAA", "2013J", 2, 100, 20, 7),
        ],
        sites=[(100, "AAA", "2013J", "forumng"), (200, "AAA", "2013J", "resource")],
        assessments=[("AAA", "2013J", 10, 19), ("AAA", "2013J", 11, 33)],
        submissions=[(10, 1, 18, 80.0), (11, 1, 33, 60.0), (10, 2, 20, 50.0)],
    )


@pytest.fixture(scope="session")
def small_synth_tables():
    return generate_synthetic(SynthConfig(n_instances=400, seed=11))


@pytest.fixture(scope="session")
def small_cohort(small_synth_tables):
    return build_cohort(small_synth_tables)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
