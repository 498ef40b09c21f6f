"""Splits, metrics, and the per-cutoff benchmark, ablation and importance loops."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .dataset import Cohort
from .features import FEATURE_NAMES, CutoffDataset, build_cutoff_dataset
from .models import MODEL_NAMES, ModelSpec, feature_importance, get_spec, predict_proba, train_model
from .temporal_guard import Policy

logger = logging.getLogger(__name__)

CUTOFFS = (7, 14, 21, 28, 35, 42, 49, 56)
SEEDS = (0, 1, 2, 3, 4)
METRICS = ("roc_auc", "pr_auc", "brier", "f1_at_half")
RESULT_COLUMNS = ["policy", "cutoff", "model", "seed", *METRICS, "wall_seconds"]


class MetricUndefinedError(ValueError):
    pass


class IncompleteSeedsError(ValueError):
    pass


# -- splitting ---------------------------------------------------------------

def stratified_split(y, seed: int, train_fraction: float = 0.8):
    """Per-class shuffled split; returns sorted (train_idx, test_idx).

    Each class contributes ``floor((1 - train_fraction) * n_class)`` rows to
    the test side (at least one), the rest go to training. The permutation
    depends only on ``seed`` and the label vector.
    """
    if isinstance(y, CutoffDataset):
        y = y.y
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    test_fraction = 1.0 - train_fraction
    train, test = [], []
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        if len(members) < 2:
            raise ValueError(f"class {cls} has {len(members)} member(s); need at least 2 to split")
        perm = rng.permutation(members)
        n_test = max(1, int(np.floor(len(members) * test_fraction + 1e-9)))
        test.append(perm[:n_test])
        train.append(perm[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


# -- metrics -----------------------------------------------------------------

def _binary(y, p):
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape or y.ndim != 1:
        raise ValueError("labels and scores must be 1-d arrays of equal length")
    return y, p


def _average_ranks(x):
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    boundaries = np.flatnonzero(np.diff(xs)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(xs)]])
    avg = (starts + ends + 1) / 2.0  # mean of 1-based ranks start+1 .. end
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def roc_auc(y, p) -> float:
    """Probability that a random positive outscores a random negative (ties count half)."""
    y, p = _binary(y, p)
    n_pos = int((y == 1).sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("ROC-AUC needs both classes")
    ranks = _average_ranks(p)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(y, p) -> float:
    """Mean of precision@k over the ranks k holding a positive.

    Rows are ordered by descending score; equal scores keep their input
    order.
    """
    y, p = _binary(y, p)
    n_pos = int((y == 1).sum())
    if n_pos == 0:
        raise MetricUndefinedError("average precision needs at least one positive")
    order = np.argsort(-p, kind="stable")
    hits = y[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits == 1].sum() / n_pos)


def brier(y, p) -> float:
    y, p = _binary(y, p)
    if len(y) == 0:
        raise MetricUndefinedError("Brier score of an empty sample")
    return float(np.mean((y - p) ** 2))


@dataclass(frozen=True)
class F1Result:
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    degenerate: bool


def f1_report(y, p, threshold: float = 0.5) -> F1Result:
    """F1 of hard labels ``p >= threshold``, with the confusion counts.

    With no positives predicted or present at all (TP = FP = FN = 0) the
    score is 0 and ``degenerate`` is set.
    """
    y, p = _binary(y, p)
    pred = p >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if tp == 0:
        return F1Result(0.0, precision, recall, tp, fp, fn, fp == 0 and fn == 0)
    return F1Result(2 * precision * recall / (precision + recall), precision, recall, tp, fp, fn, False)


def f1_at_half(y, p) -> float:
    return f1_report(y, p).f1


@dataclass(frozen=True)
class MetricSet:
    roc_auc: float
    pr_auc: float
    brier: float
    f1_at_half: float


def compute_metrics(y, p) -> MetricSet:
    return MetricSet(roc_auc(y, p), average_precision(y, p), brier(y, p), f1_at_half(y, p))


# -- benchmark loop ----------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    cutoff: int
    model: str
    seed: int
    policy: Policy
    metrics: MetricSet
    wall_seconds: float

    def row(self) -> dict:
        return {"policy": self.policy.value, "cutoff": self.cutoff, "model": self.model,
                "seed": self.seed, **asdict(self.metrics), "wall_seconds": self.wall_seconds}


def _as_spec(model) -> ModelSpec:
    return model if isinstance(model, ModelSpec) else get_spec(model)


def evaluate_cell(dataset: CutoffDataset, spec: ModelSpec, seed: int) -> RunResult:
    """Split, fit on the training rows, score the held-out rows."""
    start = time.perf_counter()
    train, test = stratified_split(dataset.y, seed)
    model = train_model(spec, dataset.X[train], dataset.y[train], seed=seed)
    p = predict_proba(model, dataset.X[test])
    try:
        metrics = compute_metrics(dataset.y[test], p)
    except MetricUndefinedError as exc:
        raise MetricUndefinedError(
            f"{exc} (cutoff {dataset.cutoff}, model {spec.name}, seed {seed}, "
            f"policy {dataset.policy.value})"
        ) from None
    return RunResult(dataset.cutoff, spec.name, int(seed), dataset.policy, metrics,
                     time.perf_counter() - start)


def _evaluate_task(args):
    return evaluate_cell(*args)


def build_datasets(cohort: Cohort, cutoffs, policy=Policy.STRICT) -> dict[int, CutoffDataset]:
    """One dataset per cutoff; a strict audit failure raises before anything is trained."""
    return {int(t): build_cutoff_dataset(cohort, int(t), policy) for t in cutoffs}


def run_benchmark(cohort: Cohort, cutoffs=CUTOFFS, models=MODEL_NAMES, seeds=SEEDS,
                  policy=Policy.STRICT, *, datasets: dict | None = None, jobs: int = 1,
                  progress=None) -> list[RunResult]:
    """Evaluate every (cutoff, model, seed) cell under one policy.

    Results come back ordered by (cutoff, model order, seed) regardless of
    ``jobs``. ``datasets`` may carry prebuilt cutoff datasets for the same
    policy.
    """
    policy = Policy(policy)
    specs = [_as_spec(m) for m in models]
    if datasets is None:
        datasets = build_datasets(cohort, cutoffs, policy)
    tasks = [(datasets[int(t)], spec, int(s)) for t in cutoffs for spec in specs for s in seeds]
    for ds, _, _ in tasks:
        if ds.policy is not policy:
            raise ValueError("prebuilt dataset policy does not match the requested policy")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_task, tasks))
    else:
        results = []
        for task in tasks:
            results.append(evaluate_cell(*task))
            if progress is not None:
                progress(results[-1])
    return results


def results_frame(results) -> pd.DataFrame:
    return pd.DataFrame([r.row() for r in results], columns=RESULT_COLUMNS)


def results_from_frame(df: pd.DataFrame) -> list[RunResult]:
    return [
        RunResult(int(r.cutoff), str(r.model), int(r.seed), Policy(r.policy),
                  MetricSet(*(float(getattr(r, m)) for m in METRICS)), float(r.wall_seconds))
        for r in df.itertuples(index=False)
    ]


@dataclass(frozen=True)
class AggregateResult:
    policy: Policy
    cutoff: int
    model: str
    n_seeds: int
    mean: dict
    std: dict

    def rows(self) -> list[dict]:
        return [{"policy": self.policy.value, "cutoff": self.cutoff, "model": self.model,
                 "metric": m, "metric_mean": self.mean[m], "metric_std": self.std[m],
                 "n_seeds": self.n_seeds} for m in METRICS]


def aggregate(results, seeds=SEEDS, model_order=MODEL_NAMES) -> list[AggregateResult]:
    """Mean and sample standard deviation (n - 1) over seeds for every cell.

    Every (policy, cutoff, model) cell must hold exactly the seeds in
    ``seeds``; otherwise :class:`IncompleteSeedsError` names the gaps.
    """
    expected = sorted(int(s) for s in seeds)
    cells: dict[tuple, dict[int, RunResult]] = {}
    for r in results:
        cell = cells.setdefault((r.policy, r.cutoff, r.model), {})
        if r.seed in cell:
            raise ValueError(f"duplicate result for {r.policy.value}/{r.cutoff}/{r.model}/seed {r.seed}")
        cell[r.seed] = r
    problems = []
    for (policy, t, model), by_seed in cells.items():
        if sorted(by_seed) != expected:
            missing = sorted(set(expected) - set(by_seed))
            extra = sorted(set(by_seed) - set(expected))
            problems.append(f"{policy.value}/t={t}/{model}: missing seeds {missing}, unexpected {extra}")
    if problems:
        raise IncompleteSeedsError("incomplete seed sets: " + "; ".join(sorted(problems)))

    order = {m: i for i, m in enumerate(model_order)}
    out = []
    for key in sorted(cells, key=lambda k: (list(Policy).index(k[0]), k[1], order.get(k[2], len(order)), k[2])):
        by_seed = cells[key]
        values = {m: np.array([getattr(by_seed[s].metrics, m) for s in expected]) for m in METRICS}
        ddof = 1 if len(expected) > 1 else 0
        out.append(AggregateResult(
            key[0], key[1], key[2], len(expected),
            {m: float(v.mean()) for m, v in values.items()},
            {m: float(v.std(ddof=ddof)) for m, v in values.items()},
        ))
    return out


def aggregate_frame(aggregates) -> pd.DataFrame:
    return pd.DataFrame([row for a in aggregates for row in a.rows()])


def best_per_cutoff(aggregates, metric="roc_auc", policy=Policy.STRICT) -> pd.DataFrame:
    """The top model per cutoff by mean ``metric`` (lowest for Brier)."""
    df = aggregate_frame([a for a in aggregates if a.policy is Policy(policy)])
    df = df[df["metric"] == metric]
    ascending = metric == "brier"
    df = df.sort_values(["cutoff", "metric_mean"], ascending=[True, ascending], kind="mergesort")
    return df.groupby("cutoff", sort=True).head(1).reset_index(drop=True)


# -- ablation and importance -------------------------------------------------

@dataclass
class AblationResult:
    results: list
    aggregates: list

    def long(self) -> pd.DataFrame:
        """Plot-ready rows: policy, cutoff, model, metric, mean, std."""
        return aggregate_frame(self.aggregates)

    def table(self, metric="roc_auc") -> pd.DataFrame:
        """One row per (cutoff, model) with each policy's mean and its delta to strict."""
        df = self.long()
        df = df[df["metric"] == metric]
        wide = df.pivot_table(index=["cutoff", "model"], columns="policy", values="metric_mean",
                              sort=False).reset_index()
        wide.columns.name = None
        for p in Policy:
            if p is not Policy.STRICT and p.value in wide:
                wide[f"delta_{p.value}"] = wide[p.value] - wide[Policy.STRICT.value]
        return wide


def ablation(cohort: Cohort, cutoffs=CUTOFFS, models=("RF", "GBDT"), seeds=SEEDS,
             policies=tuple(Policy), jobs: int = 1) -> AblationResult:
    """Run the same grid under each policy.

    The split for a seed depends only on labels and seed, and every policy
    keeps every instance, so all policies share identical partitions.
    """
    results = []
    for policy in policies:
        results.extend(run_benchmark(cohort, cutoffs, models, seeds, policy, jobs=jobs))
    return AblationResult(results, aggregate(results, seeds, [getattr(m, "name", m) for m in models]))


def importance_profile(cohort: Cohort, cutoffs=CUTOFFS, models=("LR", "RF", "GBDT"), seed=0,
                       datasets: dict | None = None) -> list:
    """Strict-policy feature rankings per (cutoff, model), fit on the seed's training split."""
    if datasets is None:
        datasets = build_datasets(cohort, cutoffs, Policy.STRICT)
    reports = []
    for t in cutoffs:
        ds = datasets[int(t)]
        if ds.policy is not Policy.STRICT:
            raise ValueError("importance profiles use strict datasets only")
        train, _ = stratified_split(ds.y, seed)
        for m in models:
            fitted = train_model(_as_spec(m), ds.X[train], ds.y[train], seed=seed)
            reports.append(feature_importance(fitted, FEATURE_NAMES, cutoff=int(t)))
    return reports


def importance_frame(reports, policy=Policy.STRICT) -> pd.DataFrame:
    rows = [
        {"policy": Policy(policy).value, "cutoff": r.cutoff, "model": r.model,
         "rank": rank, "feature": name, "weight": weight}
        for r in reports for rank, (name, weight) in enumerate(r.ranking, start=1)
    ]
    return pd.DataFrame(rows, columns=["policy", "cutoff", "model", "rank", "feature", "weight"])
