"""Early representation of a learner at a cutoff and cutoff-specific datasets."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .dataset import KEY_COLUMNS, Cohort
from .temporal_guard import (
    AuditReport,
    Policy,
    ProvenanceLedger,
    SourceKind,
    SourceView,
    audit,
    effective_cutoff,
    guarded_join,
    truncate,
)


class FeatureGroup(str, enum.Enum):
    INTERACTION = "interaction"
    ASSESSMENT = "assessment"


INTERACTION_FEATURES = (
    "total_clicks_t",
    "active_days_t",
    "unique_resources_t",
    "unique_activity_types_t",
    "daily_clicks_mean_t",
    "daily_clicks_std_t",
    "daily_clicks_max_t",
)
ASSESSMENT_FEATURES = (
    "n_submissions_t",
    "mean_submission_delay_t",
    "avg_score_t",
)
FEATURE_NAMES = INTERACTION_FEATURES + ASSESSMENT_FEATURES
FEATURE_GROUPS = {
    **{name: FeatureGroup.INTERACTION for name in INTERACTION_FEATURES},
    **{name: FeatureGroup.ASSESSMENT for name in ASSESSMENT_FEATURES},
}


def interaction_features(view: SourceView, instance, t, ledger: ProvenanceLedger) -> np.ndarray:
    """Interaction features of one instance, computed record by record.

    ``view`` is an interaction view already truncated and joined to site
    metadata. This is the readable reference for :func:`interaction_matrix`.
    """
    rows = view.records[view.records["iid"] == instance]
    daily: dict[int, float] = {}
    sites, types = set(), set()
    total = 0.0
    for day, site, clicks, atype in zip(rows["date"], rows["id_site"], rows["sum_click"],
                                        rows.get("activity_type", pd.Series(index=rows.index, dtype=object))):
        ledger.record_access(instance, FeatureGroup.INTERACTION, day)
        total += clicks
        daily[int(day)] = daily.get(int(day), 0.0) + clicks
        sites.add(site)
        if isinstance(atype, str):
            types.add(atype)
    if not daily:
        return np.zeros(len(INTERACTION_FEATURES))
    per_day = np.array(list(daily.values()), dtype=float)
    return np.array([
        total, len(daily), len(sites), len(types),
        per_day.mean(), per_day.std(), per_day.max(),
    ])


def assessment_features(view: SourceView, instance, t, ledger: ProvenanceLedger) -> np.ndarray:
    """Submission count, mean delay against the due day, and mean score of one instance.

    Rows without a due day are skipped for the delay; rows without a score
    are skipped for the average. Each value is 0 when it has no inputs.
    """
    rows = view.records[view.records["iid"] == instance]
    delays, scores = [], []
    for day, due, score in zip(rows["date"], rows["due_date"], rows["score"]):
        ledger.record_access(instance, FeatureGroup.ASSESSMENT, day)
        if not pd.isna(due):
            delays.append(float(day) - float(due))
        if not pd.isna(score):
            scores.append(float(score))
    return np.array([
        float(len(rows)),
        float(np.mean(delays)) if delays else 0.0,
        float(np.mean(scores)) if scores else 0.0,
    ])


def interaction_matrix(view: SourceView, n_instances: int, ledger: ProvenanceLedger) -> np.ndarray:
    """Vectorized :func:`interaction_features` for every instance at once."""
    df = view.records
    out = np.zeros((n_instances, len(INTERACTION_FEATURES)))
    if len(df) == 0:
        return out
    iid = df["iid"].to_numpy(dtype=np.int64)
    ledger.record_many(iid, FeatureGroup.INTERACTION, df["date"].to_numpy())

    clicks = df["sum_click"].to_numpy(dtype=np.float64)
    out[:, 0] = np.bincount(iid, weights=clicks, minlength=n_instances)

    daily = df.groupby(["iid", "date"], sort=True)["sum_click"].sum()
    day_iid = daily.index.get_level_values(0).to_numpy(dtype=np.int64)
    day_sum = daily.to_numpy(dtype=np.float64)
    active = np.bincount(day_iid, minlength=n_instances).astype(np.float64)
    out[:, 1] = active

    out[:, 2] = np.bincount(
        df.drop_duplicates(["iid", "id_site"])["iid"].to_numpy(dtype=np.int64), minlength=n_instances
    )
    if "activity_type" in df:
        typed = df.dropna(subset=["activity_type"]).drop_duplicates(["iid", "activity_type"])
        out[:, 3] = np.bincount(typed["iid"].to_numpy(dtype=np.int64), minlength=n_instances)

    has = active > 0
    mean = np.zeros(n_instances)
    mean[has] = np.bincount(day_iid, weights=day_sum, minlength=n_instances)[has] / active[has]
    dev = day_sum - mean[day_iid]
    var = np.zeros(n_instances)
    var[has] = np.bincount(day_iid, weights=dev * dev, minlength=n_instances)[has] / active[has]
    peak = np.zeros(n_instances)
    np.maximum.at(peak, day_iid, day_sum)
    out[:, 4] = mean
    out[:, 5] = np.sqrt(var)
    out[:, 6] = peak
    return out


def assessment_matrix(view: SourceView, n_instances: int, ledger: ProvenanceLedger) -> np.ndarray:
    """Vectorized :func:`assessment_features` for every instance at once."""
    df = view.records
    out = np.zeros((n_instances, len(ASSESSMENT_FEATURES)))
    if len(df) == 0:
        return out
    iid = df["iid"].to_numpy(dtype=np.int64)
    day = df["date"].to_numpy(dtype=np.float64)
    ledger.record_many(iid, FeatureGroup.ASSESSMENT, df["date"].to_numpy())
    out[:, 0] = np.bincount(iid, minlength=n_instances)

    due = pd.to_numeric(df["due_date"], errors="coerce").to_numpy(dtype=np.float64, na_value=np.nan)
    has_due = ~np.isnan(due)
    n_due = np.bincount(iid[has_due], minlength=n_instances)
    delay_sum = np.bincount(iid[has_due], weights=day[has_due] - due[has_due], minlength=n_instances)
    np.divide(delay_sum, n_due, out=out[:, 1], where=n_due > 0)

    score = df["score"].to_numpy(dtype=np.float64, na_value=np.nan)
    has_score = ~np.isnan(score)
    n_scored = np.bincount(iid[has_score], minlength=n_instances)
    score_sum = np.bincount(iid[has_score], weights=score[has_score], minlength=n_instances)
    np.divide(score_sum, n_scored, out=out[:, 2], where=n_scored > 0)
    return out


def assemble(interaction_part, assessment_part) -> np.ndarray:
    """Concatenate the two feature groups in the fixed feature order.

    Works on single vectors and on row-aligned matrices alike.
    """
    a = np.asarray(interaction_part, dtype=np.float64)
    b = np.asarray(assessment_part, dtype=np.float64)
    if a.shape[-1] != len(INTERACTION_FEATURES) or b.shape[-1] != len(ASSESSMENT_FEATURES):
        raise ValueError(
            f"feature parts have widths {a.shape[-1]} and {b.shape[-1]}, "
            f"expected {len(INTERACTION_FEATURES)} and {len(ASSESSMENT_FEATURES)}"
        )
    if a.shape[:-1] != b.shape[:-1]:
        raise ValueError(f"feature parts are not row-aligned: {a.shape} vs {b.shape}")
    out = np.concatenate([a, b], axis=-1)
    if not np.isfinite(out).all():
        raise ValueError("non-finite feature value")
    return out


@dataclass(frozen=True, eq=False)
class CutoffDataset:
    cutoff: int
    instances: pd.DataFrame
    X: np.ndarray
    y: np.ndarray
    policy: Policy
    audit: AuditReport

    def __post_init__(self):
        if not len(self.instances) == len(self.X) == len(self.y):
            raise ValueError("rows, instances and labels differ in length")
        if self.policy is Policy.STRICT and not self.audit.passed:
            raise ValueError("strict dataset attached to a failed audit")

    def __len__(self):
        return len(self.y)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return FEATURE_NAMES

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(FEATURE_NAMES))
        df["label"] = self.y
        for col in KEY_COLUMNS:
            df[col] = self.instances[col].to_numpy()
        return df.sort_values(KEY_COLUMNS, kind="mergesort").reset_index(drop=True)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def cutoff_views(cohort: Cohort, t, policy=Policy.STRICT, truncate_fn=truncate):
    """Truncate both timestamped sources, then join each to its metadata."""
    policy = Policy(policy)
    interactions = truncate_fn(
        SourceView.raw(cohort.interactions, SourceKind.INTERACTION),
        effective_cutoff(policy, SourceKind.INTERACTION, t),
    )
    submissions = truncate_fn(
        SourceView.raw(cohort.submissions, SourceKind.ASSESSMENT_SUBMISSION),
        effective_cutoff(policy, SourceKind.ASSESSMENT_SUBMISSION, t),
    )
    interactions = guarded_join(
        interactions, SourceView.metadata(cohort.site_meta), on="id_site", policy=policy, how="left"
    )
    submissions = guarded_join(
        submissions, SourceView.metadata(cohort.assessment_meta), on="id_assessment",
        policy=policy, how="left",
    )
    return interactions, submissions


def build_cutoff_dataset(cohort: Cohort, t: int, policy=Policy.STRICT, *,
                         truncate_fn=truncate) -> CutoffDataset:
    """Build the labelled feature matrix for cutoff ``t`` under ``policy``.

    Both timestamped sources are truncated before they are joined or
    aggregated. Under the strict policy a failed provenance audit raises
    :class:`~leapbench.temporal_guard.ProtocolViolation`. ``truncate_fn`` is
    exposed so fault-injection tests can hand the pipeline a broken
    truncation step.
    """
    policy = Policy(policy)
    t = int(t)
    ledger = ProvenanceLedger(t)
    inter_view, sub_view = cutoff_views(cohort, t, policy, truncate_fn)
    n = cohort.n_instances
    X = assemble(interaction_matrix(inter_view, n, ledger), assessment_matrix(sub_view, n, ledger))
    report = audit(ledger, t, policy)
    report.raise_for_violation()
    return CutoffDataset(
        cutoff=t,
        instances=cohort.instances[["iid", *KEY_COLUMNS]],
        X=X,
        y=cohort.labels.astype(np.int64),
        policy=policy,
        audit=report,
    )
