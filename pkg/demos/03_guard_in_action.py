# The provenance guard catching a broken truncation step.
#
# We hand the dataset builder a truncation function that lets a single record
# from day 30 slip through at cutoff 7. The strict audit refuses to hand back
# a dataset and says which instance and feature group were contaminated.

import pandas as pd

from leapbench.dataset import SynthConfig, build_cohort, generate_synthetic
from leapbench.features import build_cutoff_dataset
from leapbench.temporal_guard import Policy, ProtocolViolation, SourceView, truncate

cohort = build_cohort(generate_synthetic(SynthConfig(n_instances=300, seed=4)))


def sloppy_truncate(view, t):
    out = truncate(view, t)
    if view.source_kind.value != "assessment_submission":
        return out
    stray = view.records.iloc[[0]].assign(iid=12, date=30)
    return SourceView(pd.concat([out.records, stray]), out.cutoff, out.source_kind)


try:
    build_cutoff_dataset(cohort, 7, truncate_fn=sloppy_truncate)
except ProtocolViolation as exc:
    print("halted:", exc)
    print(exc.report.to_jsonl())

# The leaky policies run to completion and keep the evidence as diagnostics.
ds = build_cutoff_dataset(cohort, 7, Policy.LEAKY_ASSESSMENT)
print(ds.audit.verdict, ds.audit.n_violations, "instances read assessment data past day 7")
