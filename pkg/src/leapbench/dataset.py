"""OULAD-schema ingestion, label derivation, cohort assembly and a synthetic generator.

Tables are held as pandas DataFrames with a fixed set of columns per table.
Columns present in the CSV files but not listed in ``TABLE_COLUMNS`` (for
example demographics in ``studentInfo.csv``) are never read.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

TABLE_FILES = {
    "student_info": "studentInfo.csv",
    "student_vle": "studentVle.csv",
    "vle": "vle.csv",
    "assessments": "assessments.csv",
    "student_assessment": "studentAssessment.csv",
}

KEY_COLUMNS = ["code_module", "code_presentation", "id_student"]

# column -> dtype; nullable columns use pandas extension / float dtypes
TABLE_COLUMNS: dict[str, dict[str, str]] = {
    "student_info": {
        "code_module": "str",
        "code_presentation": "str",
        "id_student": "int64",
        "final_result": "str",
    },
    "student_vle": {
        "code_module": "str",
        "code_presentation": "str",
        "id_student": "int64",
        "id_site": "int64",
        "date": "int64",
        "sum_click": "int64",
    },
    "vle": {
        "id_site": "int64",
        "code_module": "str",
        "code_presentation": "str",
        "activity_type": "str",
    },
    "assessments": {
        "code_module": "str",
        "code_presentation": "str",
        "id_assessment": "int64",
        "date": "Int64",
    },
    "student_assessment": {
        "id_assessment": "int64",
        "id_student": "int64",
        "date_submitted": "Int64",
        "score": "float64",
    },
}

LABEL_MAP = {"Pass": 1, "Distinction": 1, "Fail": 0, "Withdrawn": 0}


class DataError(Exception):
    """Raised when input tables are missing or malformed."""


class MissingTableError(DataError):
    def __init__(self, path):
        super().__init__(f"missing input table: {path}")
        self.path = str(path)


class MalformedTableError(DataError):
    def __init__(self, path, detail):
        super().__init__(f"malformed table {path}: {detail}")
        self.path = str(path)
        self.detail = detail


class UnknownOutcomeError(DataError, ValueError):
    def __init__(self, value):
        super().__init__(f"unknown final_result value: {value!r}")
        self.value = value


class InstanceKey(NamedTuple):
    """One learner in one course run."""

    module: str
    presentation: str
    student: int


def derive_label(final_result: str) -> int:
    """Map an OULAD ``final_result`` string to the binary success label.

    Pass and Distinction map to 1, Fail and Withdrawn to 0. Matching is
    case-sensitive; anything else raises :class:`UnknownOutcomeError`.
    """
    try:
        return LABEL_MAP[final_result]
    except (KeyError, TypeError):
        raise UnknownOutcomeError(final_result) from None


def derive_labels(final_results: pd.Series) -> np.ndarray:
    mapped = final_results.map(LABEL_MAP)
    bad = mapped.isna()
    if bad.any():
        raise UnknownOutcomeError(final_results[bad].iloc[0])
    return mapped.to_numpy(dtype=np.int8)


@dataclass(eq=False)
class RawTables:
    """The five OULAD tables restricted to the columns this package uses."""

    student_info: pd.DataFrame
    student_vle: pd.DataFrame
    vle: pd.DataFrame
    assessments: pd.DataFrame
    student_assessment: pd.DataFrame

    def frames(self) -> dict[str, pd.DataFrame]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def equals(self, other: RawTables) -> bool:
        return all(
            a.reset_index(drop=True).equals(b.reset_index(drop=True))
            for a, b in zip(self.frames().values(), other.frames().values())
        )

    def row_counts(self) -> dict[str, int]:
        return {name: len(df) for name, df in self.frames().items()}

    def ingest_report(self) -> dict[str, int]:
        """Row counts plus the data-quality counters reported at load time."""
        report = {f"rows_{k}": v for k, v in self.row_counts().items()}
        sa = self.student_assessment
        report["unresolved_id_site"] = int(
            (~self.student_vle["id_site"].isin(self.vle["id_site"])).sum()
        )
        report["duplicate_submissions"] = int(
            sa.duplicated(["id_assessment", "id_student"], keep=False).sum()
        )
        report["submissions_without_date"] = int(sa["date_submitted"].isna().sum())
        report["submissions_without_score"] = int(sa["score"].isna().sum())
        report["assessments_without_due_date"] = int(self.assessments["date"].isna().sum())
        return report


def _coerce(df: pd.DataFrame, columns: dict[str, str], path) -> pd.DataFrame:
    out = {}
    for col, dtype in columns.items():
        s = df[col]
        if dtype == "str":
            if s.isna().any():
                raise MalformedTableError(path, f"column {col!r} has missing values")
            out[col] = s.astype(str)
            continue
        num = pd.to_numeric(s, errors="coerce")
        bad = num.isna() & s.notna()
        if bad.any():
            raise MalformedTableError(
                path, f"non-numeric value {s[bad].iloc[0]!r} in column {col!r}"
            )
        if dtype == "float64":
            out[col] = num.astype("float64")
            continue
        if (num.dropna() % 1 != 0).any():
            raise MalformedTableError(path, f"non-integer value in column {col!r}")
        if dtype == "int64":
            if num.isna().any():
                raise MalformedTableError(path, f"column {col!r} has missing values")
            out[col] = num.astype("int64")
        else:
            out[col] = num.astype("Int64")
    return pd.DataFrame(out)


def _read_table(root, name: str) -> pd.DataFrame:
    path = os.path.join(root, TABLE_FILES[name])
    if not os.path.isfile(path):
        raise MissingTableError(path)
    columns = TABLE_COLUMNS[name]
    try:
        raw = pd.read_csv(
            path,
            dtype=str,
            na_values=["?", ""],
            keep_default_na=False,
            encoding="utf-8",
        )
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise MalformedTableError(path, str(exc).strip()) from None
    except pd.errors.EmptyDataError:
        raise MalformedTableError(path, "no header row") from None
    missing = [c for c in columns if c not in raw.columns]
    if missing:
        raise MalformedTableError(path, f"missing columns {missing}")
    return _coerce(raw, columns, path)


def load_tables(root_path) -> RawTables:
    """Read the five OULAD CSV files from ``root_path``.

    Raises
    ------
    MissingTableError
        If any of the five files is absent.
    MalformedTableError
        On parse errors, wrong field counts, non-integer days or clicks, or
        negative click counts.
    """
    if not os.path.isdir(root_path):
        raise MissingTableError(root_path)
    frames = {name: _read_table(root_path, name) for name in TABLE_FILES}
    if (frames["student_vle"]["sum_click"] < 0).any():
        raise MalformedTableError(
            os.path.join(root_path, TABLE_FILES["student_vle"]), "negative sum_click"
        )
    tables = RawTables(**frames)
    logger.info("loaded tables from %s: %s", root_path, tables.ingest_report())
    return tables


def write_tables(tables: RawTables, root_path) -> dict[str, str]:
    """Write tables in the OULAD CSV layout; returns name -> file path."""
    os.makedirs(root_path, exist_ok=True)
    paths = {}
    for name, df in tables.frames().items():
        path = os.path.join(root_path, TABLE_FILES[name])
        df.to_csv(path, index=False, na_rep="", lineterminator="\n", encoding="utf-8")
        paths[name] = path
    return paths


@dataclass(frozen=True, eq=False)
class Cohort:
    """Prediction instances with their labels and raw record streams.

    ``instances`` is sorted by (module, presentation, student) and carries a
    dense integer ``iid`` used to index every per-instance array. The record
    streams ``interactions`` and ``submissions`` are untruncated; they hold
    every admissible-at-some-time record and are only ever read through
    :mod:`leapbench.temporal_guard`.
    """

    instances: pd.DataFrame
    interactions: pd.DataFrame
    submissions: pd.DataFrame
    site_meta: pd.DataFrame
    assessment_meta: pd.DataFrame
    report: dict = field(default_factory=dict)

    @property
    def n_instances(self) -> int:
        return len(self.instances)

    @property
    def labels(self) -> np.ndarray:
        return self.instances["label"].to_numpy()

    def keys(self) -> list[InstanceKey]:
        inst = self.instances
        return [
            InstanceKey(m, p, int(s))
            for m, p, s in zip(inst["code_module"], inst["code_presentation"], inst["id_student"])
        ]

    def summary(self) -> dict:
        y = self.labels
        runs = self.instances[["code_module", "code_presentation"]].drop_duplicates()
        n_pos = int(y.sum())
        return {
            "instances": self.n_instances,
            "runs": len(runs),
            "modules": int(self.instances["code_module"].nunique()),
            "presentations": int(self.instances["code_presentation"].nunique()),
            "positives": n_pos,
            "negatives": self.n_instances - n_pos,
            "positive_fraction": n_pos / self.n_instances if self.n_instances else float("nan"),
            **self.report,
        }


def build_cohort(tables: RawTables) -> Cohort:
    """Assemble instances, labels and per-source record streams.

    Interaction and submission rows whose instance is absent from
    ``student_info`` are dropped and counted, as are submissions with no
    ``date_submitted`` (banked or transferred results).
    """
    info = tables.student_info
    if info.duplicated(KEY_COLUMNS).any():
        dup = info[info.duplicated(KEY_COLUMNS)].iloc[0]
        raise DataError(f"duplicate instance in studentInfo: {tuple(dup[KEY_COLUMNS])}")
    for col in ("code_module", "code_presentation"):
        if (info[col].str.len() == 0).any():
            raise DataError(f"empty {col} in studentInfo")

    instances = info.sort_values(KEY_COLUMNS, kind="mergesort").reset_index(drop=True)
    instances = instances[KEY_COLUMNS].copy()
    instances["label"] = derive_labels(
        info.sort_values(KEY_COLUMNS, kind="mergesort")["final_result"].reset_index(drop=True)
    )
    instances.insert(0, "iid", np.arange(len(instances), dtype=np.int64))
    report = tables.ingest_report()

    lookup = instances[["iid", *KEY_COLUMNS]]
    sv = tables.student_vle.merge(lookup, on=KEY_COLUMNS, how="left", sort=False)
    orphan_vle = sv["iid"].isna()
    report["dropped_interactions_unknown_instance"] = int(orphan_vle.sum())
    interactions = sv.loc[~orphan_vle, ["iid", "id_site", "date", "sum_click"]]
    interactions = interactions.astype({"iid": np.int64}).reset_index(drop=True)

    sa = tables.student_assessment.merge(
        tables.assessments[["id_assessment", "code_module", "code_presentation"]],
        on="id_assessment",
        how="left",
        sort=False,
    )
    unknown_assessment = sa["code_module"].isna()
    report["dropped_submissions_unknown_assessment"] = int(unknown_assessment.sum())
    sa = sa.loc[~unknown_assessment].merge(lookup, on=KEY_COLUMNS, how="left", sort=False)
    orphan_sa = sa["iid"].isna()
    report["dropped_submissions_unknown_instance"] = int(orphan_sa.sum())
    sa = sa.loc[~orphan_sa]
    undated = sa["date_submitted"].isna()
    report["excluded_submissions_without_date"] = int(undated.sum())
    submissions = sa.loc[~undated, ["iid", "id_assessment", "date_submitted", "score"]]
    submissions = submissions.astype({"iid": np.int64, "date_submitted": np.int64})
    submissions = submissions.rename(columns={"date_submitted": "date"}).reset_index(drop=True)

    site_meta = tables.vle[["id_site", "activity_type"]].drop_duplicates("id_site")
    assessment_meta = tables.assessments[["id_assessment", "date"]].rename(
        columns={"date": "due_date"}
    )
    assessment_meta = assessment_meta.drop_duplicates("id_assessment")

    return Cohort(
        instances=instances,
        interactions=interactions,
        submissions=submissions,
        site_meta=site_meta.reset_index(drop=True),
        assessment_meta=assessment_meta.reset_index(drop=True),
        report=report,
    )


ACTIVITY_TYPES = (
    "resource", "oucontent", "url", "homepage", "subpage", "forumng",
    "quiz", "glossary", "ouwiki", "oucollaborate", "dataplus", "page",
)


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic OULAD-shaped generator.

    ``engagement_effect`` shifts the latent activity level of positive
    learners (logit scale); ``score_effect`` is the gap between class mean
    scores in units of the per-assessment score standard deviation.
    """

    n_instances: int = 1000
    course_length_days: int = 56
    positive_rate: float = 0.47
    engagement_effect: float = 0.8
    assessment_days: tuple[int, ...] = (19, 33, 47)
    score_effect: float = 1.0
    seed: int = 0
    n_runs: int = 2
    sites_per_run: int = 40
    pre_course_days: int = 10
    submission_window: int = 3
    submit_probability: float = 0.85
    missing_score_rate: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "assessment_days", tuple(int(d) for d in self.assessment_days))
        problems = []
        for name in ("n_instances", "course_length_days", "n_runs", "sites_per_run"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if not 0 < self.positive_rate < 1:
            problems.append("positive_rate must lie in (0, 1)")
        if any(d < 0 or d > self.course_length_days for d in self.assessment_days):
            problems.append("assessment_days must lie within [0, course_length_days]")
        if self.pre_course_days < 0 or self.submission_window < 0:
            problems.append("pre_course_days and submission_window must be non-negative")
        if not 0 <= self.submit_probability <= 1 or not 0 <= self.missing_score_rate < 1:
            problems.append("submit_probability and missing_score_rate must be probabilities")
        if problems:
            raise ValueError("; ".join(problems))


def _run_codes(n_runs):
    modules = ["AAA", "BBB", "CCC", "DDD", "EEE", "FFF", "GGG"]
    presentations = ["2013B", "2013J", "2014B", "2014J"]
    return [(modules[i % 7], presentations[(i // 7) % 4]) for i in range(n_runs)]


def generate_synthetic(config: SynthConfig) -> RawTables:
    """Generate OULAD-shaped tables with a planted, tunable signal.

    Every random draw comes from one ``numpy.random.Generator`` seeded with
    ``config.seed`` so identical configs produce identical tables. All
    records fall within ``[-pre_course_days, course_length_days]``.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_instances
    lo, hi = -config.pre_course_days, config.course_length_days
    runs = _run_codes(config.n_runs)

    y = (rng.random(n) < config.positive_rate).astype(np.int64)
    run_of = rng.integers(0, len(runs), size=n)
    student_ids = 10000 + rng.permutation(n * 5)[:n]
    outcome = np.where(
        y == 1,
        np.where(rng.random(n) < 0.2, "Distinction", "Pass"),
        np.where(rng.random(n) < 0.5, "Withdrawn", "Fail"),
    )
    student_info = pd.DataFrame({
        "code_module": [runs[r][0] for r in run_of],
        "code_presentation": [runs[r][1] for r in run_of],
        "id_student": student_ids.astype(np.int64),
        "final_result": outcome,
    })

    site_rows = []
    for r, (mod, pres) in enumerate(runs):
        for s in range(config.sites_per_run):
            site_rows.append((500000 + r * 1000 + s, mod, pres, ACTIVITY_TYPES[s % len(ACTIVITY_TYPES)]))
    vle = pd.DataFrame(site_rows, columns=["id_site", "code_module", "code_presentation", "activity_type"])

    # engagement: Bernoulli activity per day, Poisson number of records per active day
    latent = rng.normal(0.0, 1.0, size=n) + config.engagement_effect * y
    days = np.arange(lo, hi + 1)
    p_active = 1.0 / (1.0 + np.exp(-(latent - 1.0)))
    active = rng.random((n, len(days))) < p_active[:, None]
    inst_idx, day_idx = np.nonzero(active)
    n_rec = 1 + rng.poisson(1.5 * np.exp(0.3 * latent[inst_idx]))
    rec_inst = np.repeat(inst_idx, n_rec)
    rec_day = days[np.repeat(day_idx, n_rec)]
    rec_site = 500000 + run_of[rec_inst] * 1000 + rng.integers(0, config.sites_per_run, size=len(rec_inst))
    rec_clicks = 1 + rng.poisson(2.0, size=len(rec_inst))
    student_vle = pd.DataFrame({
        "code_module": student_info["code_module"].to_numpy()[rec_inst],
        "code_presentation": student_info["code_presentation"].to_numpy()[rec_inst],
        "id_student": student_ids[rec_inst].astype(np.int64),
        "id_site": rec_site.astype(np.int64),
        "date": rec_day.astype(np.int64),
        "sum_click": rec_clicks.astype(np.int64),
    })

    a_rows = []
    for r, (mod, pres) in enumerate(runs):
        for k, due in enumerate(config.assessment_days):
            a_rows.append((mod, pres, 1000 + r * 100 + k, due))
    assessments = pd.DataFrame(a_rows, columns=["code_module", "code_presentation", "id_assessment", "date"])
    assessments["date"] = assessments["date"].astype("Int64")

    n_assess = len(config.assessment_days)
    submitted = rng.random((n, n_assess)) < config.submit_probability
    offsets = rng.integers(-config.submission_window, config.submission_window + 1, size=(n, n_assess))
    ability = rng.normal(0.0, 1.0, size=(n, n_assess)) + config.score_effect * (y[:, None] - 0.5)
    scores = np.clip(np.rint(65.0 + 15.0 * ability), 0, 100)
    scores[rng.random((n, n_assess)) < config.missing_score_rate] = np.nan
    si, ak = np.nonzero(submitted)
    due = np.asarray(config.assessment_days, dtype=np.int64)[ak]
    student_assessment = pd.DataFrame({
        "id_assessment": (1000 + run_of[si] * 100 + ak).astype(np.int64),
        "id_student": student_ids[si].astype(np.int64),
        "date_submitted": pd.array(np.clip(due + offsets[si, ak], lo, hi), dtype="Int64"),
        "score": scores[si, ak].astype(np.float64),
    })
    return RawTables(student_info, student_vle, vle, assessments, student_assessment)
