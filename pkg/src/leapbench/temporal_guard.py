"""Cutoff-first truncation, guarded joins and provenance auditing.

Every timestamped source reaches feature code as a :class:`SourceView` that
records the cutoff it was truncated at. Joins refuse to combine views whose
cutoffs disagree, and feature code reports the day of every record it reads
to a :class:`ProvenanceLedger`, which :func:`audit` checks against the
cutoff after the features are built.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np
import pandas as pd


class _Unbounded:
    """Sentinel cutoff for untruncated views. Deliberately not comparable."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __reduce__(self):
        return (_Unbounded, ())

    def _refuse(self, other):
        raise TypeError("UNBOUNDED cutoff cannot be ordered against a day")

    __lt__ = __le__ = __gt__ = __ge__ = _refuse


UNBOUNDED = _Unbounded()


def is_unbounded(cutoff) -> bool:
    return cutoff is UNBOUNDED


class Policy(str, enum.Enum):
    STRICT = "strict"
    LEAKY_ASSESSMENT = "leaky-assessment"
    LEAKY_ALL = "leaky-all"

    @property
    def is_leaky(self) -> bool:
        return self is not Policy.STRICT

    @property
    def label(self) -> str:
        return {"strict": "Strict", "leaky-assessment": "Leaky-Assessment",
                "leaky-all": "Leaky-All"}[self.value]


class SourceKind(str, enum.Enum):
    INTERACTION = "interaction"
    ASSESSMENT_SUBMISSION = "assessment_submission"
    METADATA = "metadata"


class ProtocolViolation(Exception):
    """A strict-mode availability constraint was broken; the run must stop."""

    def __init__(self, message, report: AuditReport | None = None):
        super().__init__(message)
        self.report = report


class CutoffMismatchError(ProtocolViolation):
    pass


@dataclass(frozen=True)
class TimedRecord:
    instance: Any
    day: int
    source_kind: SourceKind
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.day):
            raise ValueError("record day must be finite")
        if self.source_kind is SourceKind.METADATA:
            raise ValueError("metadata rows carry no timestamp")


@dataclass(frozen=True, eq=False)
class SourceView:
    """An immutable table of records together with the cutoff applied to it.

    ``records`` has an ``iid`` column, a ``date`` column (the record day) and
    source-specific payload columns. Metadata views have no ``date`` and a
    cutoff of ``None``: they are exempt from truncation.
    """

    records: pd.DataFrame
    cutoff: Any
    source_kind: SourceKind

    def __post_init__(self):
        if self.source_kind is SourceKind.METADATA:
            if self.cutoff is not None:
                raise ValueError("metadata views carry no cutoff")
        elif self.cutoff is None:
            raise ValueError("timestamped views need a cutoff (a day or UNBOUNDED)")

    @classmethod
    def raw(cls, records: pd.DataFrame, source_kind: SourceKind) -> SourceView:
        return cls(records, UNBOUNDED, source_kind)

    @classmethod
    def metadata(cls, records: pd.DataFrame) -> SourceView:
        return cls(records, None, SourceKind.METADATA)

    @classmethod
    def from_records(cls, records: Iterable[TimedRecord], cutoff=UNBOUNDED) -> SourceView:
        records = list(records)
        kinds = {r.source_kind for r in records}
        if len(kinds) > 1:
            raise ValueError("records of mixed source kinds")
        kind = kinds.pop() if kinds else SourceKind.INTERACTION
        rows = [{"iid": r.instance, "date": int(r.day), **r.payload} for r in records]
        df = pd.DataFrame(rows, columns=None if rows else ["iid", "date"])
        return cls(df, cutoff, kind)

    def to_records(self) -> list[TimedRecord]:
        payload_cols = [c for c in self.records.columns if c not in ("iid", "date")]
        return [
            TimedRecord(row["iid"], int(row["date"]), self.source_kind,
                        {c: row[c] for c in payload_cols})
            for row in self.records.to_dict("records")
        ]

    @property
    def is_timestamped(self) -> bool:
        return self.source_kind is not SourceKind.METADATA

    def __len__(self):
        return len(self.records)

    def days(self) -> np.ndarray:
        return self.records["date"].to_numpy()

    def violations(self) -> pd.DataFrame:
        """Rows whose day exceeds the view's own cutoff (a scan, not a trust)."""
        if not self.is_timestamped or is_unbounded(self.cutoff):
            return self.records.iloc[:0]
        return self.records[self.records["date"] > self.cutoff]


def truncate(source: SourceView, t) -> SourceView:
    """Keep exactly the records with ``day <= t``; ``t`` may be UNBOUNDED.

    The input must be untruncated or truncated at a cutoff no earlier than
    ``t``; row order and multiplicity are preserved.
    """
    if not source.is_timestamped:
        raise ValueError("metadata views are exempt from truncation")
    if is_unbounded(t):
        if not is_unbounded(source.cutoff):
            raise ValueError("cannot widen a truncated view to UNBOUNDED")
        return source
    t = int(t)
    if not is_unbounded(source.cutoff) and t > source.cutoff:
        raise ValueError(f"cannot widen a view truncated at {source.cutoff} to {t}")
    kept = source.records[source.records["date"].to_numpy() <= t]
    return SourceView(kept, t, source.source_kind)


def guarded_join(a: SourceView, b: SourceView, on, policy: Policy = Policy.STRICT,
                 how: str = "inner") -> SourceView:
    """Equi-join two views after checking their cutoffs agree.

    Under ``Policy.STRICT`` every timestamped input must carry the same
    finite cutoff. Metadata inputs contribute payload columns only; the
    output ``date`` is taken from the timestamped side (the later of the two
    days if both sides are timestamped).
    """
    policy = Policy(policy)
    timed = [v for v in (a, b) if v.is_timestamped]
    if not timed:
        raise ValueError("guarded_join needs at least one timestamped view")
    if policy is Policy.STRICT and any(is_unbounded(v.cutoff) for v in timed):
        raise ProtocolViolation("strict join received an untruncated (UNBOUNDED) view")
    finite = {v.cutoff for v in timed if not is_unbounded(v.cutoff)}
    if len(finite) > 1:
        raise CutoffMismatchError(f"joined views have different cutoffs {sorted(finite)}")
    cutoff = UNBOUNDED if any(is_unbounded(v.cutoff) for v in timed) else finite.pop()

    left, right = a.records, b.records
    if len(timed) == 2:
        joined = left.merge(right, on=on, how=how, suffixes=("", "_right"), sort=False)
        joined["date"] = np.maximum(joined["date"], joined.pop("date_right"))
    else:
        joined = left.merge(right, on=on, how=how, sort=False)
    kind = a.source_kind if a.is_timestamped else b.source_kind
    return SourceView(joined.reset_index(drop=True), cutoff, kind)


def effective_cutoff(policy: Policy, source_kind: SourceKind, t):
    """The cutoff each source is truncated at under ``policy``."""
    policy = Policy(policy)
    source_kind = SourceKind(source_kind)
    if policy is Policy.STRICT:
        return t
    if policy is Policy.LEAKY_ASSESSMENT:
        return UNBOUNDED if source_kind is SourceKind.ASSESSMENT_SUBMISSION else t
    return UNBOUNDED


class ProvenanceLedger:
    """Maximum accessed day per (instance, feature group) for one run.

    Groups never accessed for an instance have no entry, which is distinct
    from an entry of day 0.
    """

    def __init__(self, cutoff=None):
        self.cutoff = cutoff
        self._entries: dict[tuple[Any, Any], int] = {}

    def record_access(self, instance, group, day) -> None:
        key = (instance, group)
        day = int(day)
        prev = self._entries.get(key)
        if prev is None or day > prev:
            self._entries[key] = day

    def record_many(self, instances, group, days) -> None:
        """Bulk version of :meth:`record_access` for aligned arrays."""
        instances = np.asarray(instances)
        if instances.size == 0:
            return
        maxima = pd.Series(np.asarray(days)).groupby(instances, sort=True).max()
        for inst, day in zip(maxima.index.tolist(), maxima.to_numpy().tolist()):
            self.record_access(inst, group, day)

    def get(self, instance, group, default=None):
        return self._entries.get((instance, group), default)

    def __contains__(self, key):
        return key in self._entries

    def __len__(self):
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def merge(self, other: ProvenanceLedger) -> ProvenanceLedger:
        """Entrywise maximum of two ledgers (for per-worker shards)."""
        merged = ProvenanceLedger(self.cutoff)
        merged._entries = dict(self._entries)
        for (inst, group), day in other.items():
            merged.record_access(inst, group, day)
        return merged


@dataclass
class AuditReport:
    cutoff: int
    policy: Policy
    group_max: dict
    violations: list
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict != "fail"

    @property
    def n_violations(self) -> int:
        return len(self.violations)

    def raise_for_violation(self) -> None:
        if self.verdict == "fail":
            inst, group, day = self.violations[0]
            raise ProtocolViolation(
                f"provenance audit failed at cutoff {self.cutoff}: {self.n_violations} "
                f"violation(s), first {inst} group {_group_name(group)} accessed day {day}",
                report=self,
            )

    def summary(self) -> dict:
        return {
            "type": "summary",
            "cutoff": self.cutoff,
            "policy": self.policy.value,
            "verdict": self.verdict,
            "violations": self.n_violations,
            "group_max": {_group_name(g): d for g, d in sorted(
                self.group_max.items(), key=lambda kv: _group_name(kv[0]))},
        }

    def to_jsonl(self, instance_names: Mapping | None = None) -> str:
        """One JSON object per violation followed by the summary object."""
        lines = []
        for inst, group, day in self.violations:
            name = instance_names[inst] if instance_names is not None else inst
            if isinstance(name, tuple):
                name = list(name)
            lines.append(json.dumps({
                "type": "violation", "cutoff": self.cutoff, "policy": self.policy.value,
                "instance": name, "group": _group_name(group), "provenance_day": day,
            }, default=_jsonable))
        lines.append(json.dumps(self.summary(), default=_jsonable))
        return "\n".join(lines) + "\n"


def _group_name(group) -> str:
    return getattr(group, "value", str(group))


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(type(obj).__name__)


def audit(ledger: ProvenanceLedger, t: int, policy: Policy = Policy.STRICT) -> AuditReport:
    """Compare every provenance entry against the cutoff ``t``.

    Strict runs fail on any entry after ``t``; leaky runs keep going and
    report the same violations as diagnostics.
    """
    policy = Policy(policy)
    violations = []
    group_max: dict = {}
    for (inst, group), day in ledger.items():
        if group not in group_max or day > group_max[group]:
            group_max[group] = day
        if day > t:
            violations.append((inst, group, day))
    violations.sort(key=lambda v: (_sort_key(v[0]), _group_name(v[1])))
    if not violations:
        verdict = "pass"
    elif policy is Policy.STRICT:
        verdict = "fail"
    else:
        verdict = "pass-with-diagnostics"
    return AuditReport(int(t), policy, group_max, violations, verdict)


def _sort_key(instance):
    return (str(type(instance)), instance)
