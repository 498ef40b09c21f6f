"""Leakage-controlled benchmarking of early outcome prediction from LMS logs.

The pipeline at each cutoff day ``t``: truncate every timestamped source to
``day <= t``, join the truncated views to their metadata, build the feature
matrix while recording the latest day each feature group touched, audit
those days against ``t``, then train and score one model per cutoff.
"""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    Cohort,
    InstanceKey,
    RawTables,
    SynthConfig,
    build_cohort,
    derive_label,
    generate_synthetic,
    load_tables,
    write_tables,
)
from .features import FEATURE_NAMES, CutoffDataset, build_cutoff_dataset  # noqa: E402
from .temporal_guard import UNBOUNDED, Policy, ProtocolViolation  # noqa: E402

__all__ = [
    "Cohort", "InstanceKey", "RawTables", "SynthConfig", "build_cohort", "derive_label",
    "generate_synthetic", "load_tables", "write_tables", "FEATURE_NAMES", "CutoffDataset",
    "build_cutoff_dataset", "UNBOUNDED", "Policy", "ProtocolViolation",
]
