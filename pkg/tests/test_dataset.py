import os

import numpy as np
import pytest

from leapbench.dataset import (
    TABLE_FILES,
    DataError,
    InstanceKey,
    MalformedTableError,
    MissingTableError,
    SynthConfig,
    UnknownOutcomeError,
    build_cohort,
    derive_label,
    generate_synthetic,
    load_tables,
    write_tables,
)

from .conftest import make_tables


@pytest.mark.parametrize("value, label", [
    ("Pass", 1), ("Distinction", 1), ("Fail", 0), ("Withdrawn", 0),
])
def test_derive_label_total_over_stored_values(value, label):
    assert derive_label(value) == label


@pytest.mark.parametrize("value", ["pass", "PASS", "", "Unknown", None, " Pass"])
def test_derive_label_rejects_everything_else(value):
    with pytest.raises(UnknownOutcomeError) as err:
        derive_label(value)
    assert repr(value) in str(err.value)


def test_load_tables_empty_directory(tmp_path):
    with pytest.raises(MissingTableError):
        load_tables(tmp_path)


def test_load_tables_names_missing_file(tmp_path, two_student_tables):
    write_tables(two_student_tables, tmp_path)
    os.remove(tmp_path / "vle.csv")
    with pytest.raises(MissingTableError, match="vle.csv"):
        load_tables(tmp_path)


def test_synthetic_export_round_trips(tmp_path):
    tables = generate_synthetic(SynthConfig(n_instances=150, seed=5, missing_score_rate=0.2))
    write_tables(tables, tmp_path)
    assert load_tables(tmp_path).equals(tables)


def test_round_trip_keeps_missing_due_dates_and_scores(tmp_path):
    tables = make_tables(
        info=[("AAA", "2013J", 1, "Pass")],
        assessments=[("AAA", "2013J", 10, None)],
        submissions=[(10, 1, 4, None)],
    )
    write_tables(tables, tmp_path)
    back = load_tables(tmp_path)
    assert back.equals(tables)
    assert back.assessments["date"].isna().all()
    assert back.student_assessment["score"].isna().all()


def test_question_mark_is_missing(tmp_path, two_student_tables):
    write_tables(two_student_tables, tmp_path)
    path = tmp_path / "studentAssessment.csv"
    lines = path.read_text().splitlines()
    lines[1] = lines[1].rsplit(",", 1)[0] + ",?"
    path.write_text("\n".join(lines) + "\n")
    assert load_tables(tmp_path).student_assessment["score"].isna().sum() == 1


@pytest.mark.parametrize("table, bad_line", [
    ("studentVle.csv", "AAA,2013J,1,100,x,3"),
    ("studentVle.csv", "AAA,2013J,1,100,1.5,3"),
    ("studentVle.csv", "AAA,2013J,1,100,1,3,9,9"),
    ("studentVle.csv", "AAA,2013J,1,100,1,-2"),
    ("studentVle.csv", "AAA,2013J,1,100,,3"),
])
def test_malformed_rows(tmp_path, two_student_tables, table, bad_line):
    write_tables(two_student_tables, tmp_path)
    with open(tmp_path / table, "a") as fh:
        fh.write(bad_line + "\n")
    with pytest.raises(MalformedTableError):
        load_tables(tmp_path)


def test_extra_columns_are_ignored(tmp_path, two_student_tables):
    write_tables(two_student_tables, tmp_path)
    path = tmp_path / "studentInfo.csv"
    lines = path.read_text().splitlines()
    path.write_text("\n".join([lines[0] + ",gender"] + [l + ",M" for l in lines[1:]]) + "\n")
    assert load_tables(tmp_path).equals(two_student_tables)


def test_ingest_report_counts(two_student_tables):
    t = two_student_tables
    t.student_vle.loc[len(t.student_vle)] = ["AAA", "2013J", 1, 999, 2, 1]
    t.student_assessment.loc[len(t.student_assessment)] = [10, 1, 18, 70.0]
    report = t.ingest_report()
    assert report["unresolved_id_site"] == 1
    assert report["duplicate_submissions"] == 2
    assert report["rows_student_vle"] == 4


def test_cohort_one_student_no_events():
    cohort = build_cohort(make_tables(info=[("AAA", "2013J", 7, "Withdrawn")]))
    assert cohort.n_instances == 1
    assert len(cohort.interactions) == 0 and len(cohort.submissions) == 0
    assert cohort.keys() == [InstanceKey("AAA", "2013J", 7)]
    assert cohort.summary()["positive_fraction"] == 0.0


def test_cohort_size_matches_generator():
    cohort = build_cohort(generate_synthetic(SynthConfig(n_instances=500, seed=2)))
    assert cohort.n_instances == 500


def test_cohort_partitions_streams(two_student_tables):
    cohort = build_cohort(two_student_tables)
    assert cohort.summary()["runs"] == 1
    assert sorted(cohort.interactions["date"]) == [1, 5, 20]
    assert sorted(cohort.submissions["date"]) == [18, 20, 33]
    assert list(cohort.labels) == [1, 0]


def test_dropped_rows_match_brute_force_set_difference(rng):
    info = [("AAA", "2013J", s, "Pass" if s % 2 else "Fail") for s in range(1, 9)]
    vle_rows, submissions = [], []
    for _ in range(60):
        s = int(rng.integers(1, 13))
        mod = "AAA" if rng.random() < 0.8 else "BBB"
        vle_rows.append((mod, "2013J", s, 100, int(rng.integers(-5, 40)), 1))
        submissions.append((int(rng.choice([10, 10, 11, 99])), s, int(rng.integers(0, 40)), 50.0))
    tables = make_tables(info, vle_rows, [(100, "AAA", "2013J", "quiz")],
                         [("AAA", "2013J", 10, 5), ("BBB", "2013J", 11, 9)], submissions)
    cohort = build_cohort(tables)

    known = {(m, p, s) for m, p, s, _ in info}
    expected_vle_drops = sum((m, p, s) not in known for m, p, s, *_ in vle_rows)
    run_of = {10: ("AAA", "2013J"), 11: ("BBB", "2013J")}
    unknown_assessment = sum(a not in run_of for a, *_ in submissions)
    unknown_instance = sum(a in run_of and (*run_of[a], s) not in known for a, s, *_ in submissions)
    assert cohort.report["dropped_interactions_unknown_instance"] == expected_vle_drops
    assert cohort.report["dropped_submissions_unknown_assessment"] == unknown_assessment
    assert cohort.report["dropped_submissions_unknown_instance"] == unknown_instance
    assert len(cohort.interactions) == len(vle_rows) - expected_vle_drops
    assert len(cohort.submissions) == len(submissions) - unknown_assessment - unknown_instance


def test_submissions_without_date_are_excluded_and_counted():
    tables = make_tables(
        info=[("AAA", "2013J", 1, "Pass")],
        assessments=[("AAA", "2013J", 10, 5)],
        submissions=[(10, 1, None, 90.0), (10, 1, 6, 70.0)],
    )
    cohort = build_cohort(tables)
    assert cohort.report["excluded_submissions_without_date"] == 1
    assert list(cohort.submissions["date"]) == [6]


def test_duplicate_instance_rejected():
    with pytest.raises(DataError, match="duplicate"):
        build_cohort(make_tables(info=[("AAA", "2013J", 1, "Pass"), ("AAA", "2013J", 1, "Fail")]))


def test_synthetic_is_deterministic(tmp_path):
    cfg = SynthConfig(n_instances=300, seed=9)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    assert a.equals(b)
    pa, pb = write_tables(a, tmp_path / "a"), write_tables(b, tmp_path / "b")
    for name in TABLE_FILES:
        assert open(pa[name], "rb").read() == open(pb[name], "rb").read()
    assert not generate_synthetic(SynthConfig(n_instances=300, seed=10)).equals(a)


def test_synthetic_positive_count_within_binomial_bound():
    # 3 sigma of Binomial(1000, 0.5) is 47.4; the contract asks for +-40
    for seed in range(5):
        tables = generate_synthetic(SynthConfig(n_instances=1000, positive_rate=0.5, seed=seed))
        n_pos = tables.student_info["final_result"].isin(["Pass", "Distinction"]).sum()
        assert abs(n_pos - 500) <= 40


def test_synthetic_satisfies_table_invariants():
    cfg = SynthConfig(n_instances=300, seed=4)
    t = generate_synthetic(cfg)
    assert t.student_vle["id_site"].isin(t.vle["id_site"]).all()
    assert (t.student_vle["sum_click"] >= 1).all()
    assert t.student_vle["date"].between(-cfg.pre_course_days, cfg.course_length_days).all()
    assert t.student_assessment["date_submitted"].between(-cfg.pre_course_days, cfg.course_length_days).all()
    assert set(t.assessments["date"]) == set(cfg.assessment_days)
    offsets = t.student_assessment.merge(t.assessments, on="id_assessment")
    assert (offsets["date_submitted"] - offsets["date"]).abs().max() <= cfg.submission_window


def test_synthetic_signal_direction():
    t = generate_synthetic(SynthConfig(n_instances=2000, seed=3, engagement_effect=1.0, score_effect=1.0))
    cohort = build_cohort(t)
    y = cohort.labels
    clicks = np.bincount(cohort.interactions["iid"], weights=cohort.interactions["sum_click"],
                         minlength=cohort.n_instances)
    assert clicks[y == 1].mean() > clicks[y == 0].mean()
    sub = cohort.submissions.dropna(subset=["score"])
    assert sub["score"][y[sub["iid"]] == 1].mean() > sub["score"][y[sub["iid"]] == 0].mean() + 10


@pytest.mark.parametrize("kwargs", [
    {"n_instances": 0}, {"positive_rate": 0.0}, {"positive_rate": 1.0},
    {"assessment_days": (70,)}, {"assessment_days": (-1,)}, {"course_length_days": 0},
])
def test_synth_config_validation(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)
