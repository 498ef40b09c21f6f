"""Command-line entry point: ``leapbench {validate,run,ablate,synth,report}``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 protocol
violation (strict audit failure), 5 undefined metric.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import pandas as pd

from . import __version__, dataset, evaluation, features
from .dataset import DataError, SynthConfig
from .evaluation import CUTOFFS, SEEDS, IncompleteSeedsError, MetricUndefinedError
from .models import MODEL_NAMES
from .temporal_guard import Policy, ProtocolViolation

logger = logging.getLogger("leapbench")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PROTOCOL = 4
EXIT_METRIC = 5

RUN_OUTPUTS = ("results.csv", "aggregate.csv", "best_per_cutoff.csv", "manifest.json")
ABLATE_OUTPUTS = ("ablation_results.csv", "ablation_long.csv", "ablation.csv", "manifest.json")


class ConfigError(Exception):
    pass


@dataclass
class BenchmarkConfig:
    data_root: str | None = None
    synth: SynthConfig | None = None
    cutoffs: tuple = CUTOFFS
    models: tuple = MODEL_NAMES
    seeds: tuple = SEEDS
    policy: Policy = Policy.STRICT
    out: str = "leapbench-out"
    jobs: int = 1
    explicit: set = field(default_factory=set, repr=False)

    def validate(self):
        if list(self.cutoffs) != sorted(set(self.cutoffs)) or any(t <= 0 for t in self.cutoffs):
            raise ConfigError(f"cutoffs must be strictly increasing positive integers: {list(self.cutoffs)}")
        unknown = [m for m in self.models if m not in MODEL_NAMES]
        if unknown:
            raise ConfigError(f"unknown model(s) {', '.join(unknown)}; choose from {', '.join(MODEL_NAMES)}")
        if not self.models:
            raise ConfigError("no models selected")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be a non-empty list without repeats")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self

    def echo(self) -> dict:
        return {
            "data_root": self.data_root,
            "synth": None if self.synth is None else _synth_echo(self.synth),
            "cutoffs": list(self.cutoffs),
            "models": list(self.models),
            "seeds": list(self.seeds),
            "policy": self.policy.value,
        }


def _synth_echo(cfg: SynthConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["assessment_days"] = list(d["assessment_days"])
    return d


def _int_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from None


def _str_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(str(v) for v in text)
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _policy(text) -> Policy:
    try:
        return Policy(str(text).strip().lower())
    except ValueError:
        raise ConfigError(f"unknown policy {text!r}; choose strict, leaky-assessment or leaky-all") from None


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines (``#`` comments), or a run manifest in JSON."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = doc.get("config", doc)
        flat = {k: v for k, v in cfg.items() if k != "synth" and v is not None}
        for k, v in (cfg.get("synth") or {}).items():
            flat[f"synth_{k}"] = v
        return flat
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


_SYNTH_FIELDS = {f.name: f for f in dataclasses.fields(SynthConfig)}


def synth_config_from(values: dict, prefix: str = "synth_") -> SynthConfig | None:
    picked = {}
    for key, value in values.items():
        name = key[len(prefix):] if key.startswith(prefix) else (key if not prefix else None)
        if name is None:
            continue
        if name not in _SYNTH_FIELDS:
            raise ConfigError(f"unknown synthetic-data setting {key!r}")
        if name == "assessment_days":
            picked[name] = _int_list(value)
        elif name in ("positive_rate", "engagement_effect", "score_effect",
                      "submit_probability", "missing_score_rate"):
            picked[name] = float(value)
        else:
            picked[name] = int(value)
    if not picked:
        return None
    try:
        return SynthConfig(**picked)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synthetic config: {exc}") from None


def resolve_config(args, defaults: dict | None = None) -> BenchmarkConfig:
    values = dict(defaults or {})
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in ("data_root", "cutoffs", "models", "seeds", "policy", "out", "jobs"):
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    known = {"data_root", "cutoffs", "models", "seeds", "policy", "out", "jobs"}
    extra = [k for k in values if k not in known and not k.startswith("synth_")]
    if extra:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(extra))}")
    cfg = BenchmarkConfig(explicit=set(values))
    try:
        if "data_root" in values:
            cfg.data_root = str(values["data_root"])
        cfg.synth = synth_config_from(values)
        if "cutoffs" in values:
            cfg.cutoffs = _int_list(values["cutoffs"])
        if "models" in values:
            cfg.models = _str_list(values["models"])
        if "seeds" in values:
            cfg.seeds = _int_list(values["seeds"])
        if "policy" in values:
            cfg.policy = _policy(values["policy"])
        if "out" in values:
            cfg.out = str(values["out"])
        if "jobs" in values:
            cfg.jobs = int(values["jobs"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.data_root and cfg.synth:
        raise ConfigError("give either data_root or synthetic settings, not both")
    if not cfg.data_root and not cfg.synth:
        raise ConfigError("no data source: set data_root (or --data-root) or synth_* settings")
    return cfg.validate()


def load_cohort(cfg: BenchmarkConfig):
    if cfg.data_root:
        tables = dataset.load_tables(cfg.data_root)
    else:
        tables = dataset.generate_synthetic(cfg.synth)
    return dataset.build_cohort(tables)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def results_digest(df: pd.DataFrame) -> str:
    """Hash of a results table without its wall-clock column."""
    body = df.drop(columns=["wall_seconds"], errors="ignore").to_csv(index=False, lineterminator="\n")
    return hashlib.sha256(body.encode()).hexdigest()


def _write_csv(df: pd.DataFrame, path):
    df.to_csv(path, index=False, lineterminator="\n")


def _write_manifest(cfg, out, command, files, extra=None):
    manifest = {
        "tool": "leapbench",
        "version": __version__,
        "command": command,
        "config": cfg.echo(),
        "files": {name: _sha256(os.path.join(out, name)) for name in files},
        **(extra or {}),
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _instance_names(cohort):
    return {int(i): (m, p, int(s)) for i, m, p, s in cohort.instances[
        ["iid", "code_module", "code_presentation", "id_student"]].itertuples(index=False)}


def build_audited_datasets(cohort, cutoffs, policy, audit_path):
    """Build every cutoff dataset, appending each audit to ``audit_path``.

    On a strict violation the failing audit is still written before the
    exception propagates.
    """
    names = _instance_names(cohort)
    datasets = {}
    with open(audit_path, "a", encoding="utf-8") as log:
        for t in cutoffs:
            try:
                ds = features.build_cutoff_dataset(cohort, t, policy)
            except ProtocolViolation as exc:
                if exc.report is not None:
                    log.write(exc.report.to_jsonl(names))
                raise
            log.write(ds.audit.to_jsonl(names))
            datasets[int(t)] = ds
    return datasets


def _remove(out, names):
    for name in names:
        path = os.path.join(out, name)
        if os.path.exists(path):
            os.remove(path)


def cmd_validate(args) -> int:
    cfg = resolve_config(args)
    cohort = load_cohort(cfg)
    summary = cohort.summary()
    summary["source"] = cfg.data_root or "synthetic"
    print(json.dumps(summary, indent=2, default=str))
    print(f"{summary['instances']} instances, {summary['runs']} runs, "
          f"{100 * summary['positive_fraction']:.1f}% positive", file=sys.stderr)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    os.makedirs(cfg.out, exist_ok=True)
    audit_path = os.path.join(cfg.out, "audit.jsonl")
    _remove(cfg.out, (*RUN_OUTPUTS, "audit.jsonl"))
    cohort = load_cohort(cfg)
    try:
        datasets = build_audited_datasets(cohort, cfg.cutoffs, cfg.policy, audit_path)
        results = evaluation.run_benchmark(cohort, cfg.cutoffs, cfg.models, cfg.seeds, cfg.policy,
                                           datasets=datasets, jobs=cfg.jobs, progress=_progress)
    except ProtocolViolation:
        _remove(cfg.out, RUN_OUTPUTS)
        raise
    frame = evaluation.results_frame(results)
    _write_csv(frame, os.path.join(cfg.out, "results.csv"))
    aggregates = evaluation.aggregate(results, cfg.seeds, cfg.models)
    _write_csv(evaluation.aggregate_frame(aggregates), os.path.join(cfg.out, "aggregate.csv"))
    _write_csv(evaluation.best_per_cutoff(aggregates, policy=cfg.policy),
               os.path.join(cfg.out, "best_per_cutoff.csv"))
    _write_manifest(cfg, cfg.out, "run", ["results.csv", "aggregate.csv", "best_per_cutoff.csv", "audit.jsonl"],
                    {"results_digest": results_digest(frame)})
    print(f"wrote {len(results)} results to {cfg.out}", file=sys.stderr)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = resolve_config(args, defaults={"models": "RF,GBDT"})
    policies = tuple(Policy) if "policy" not in cfg.explicit else (
        (Policy.STRICT, cfg.policy) if cfg.policy is not Policy.STRICT else (Policy.STRICT,))
    os.makedirs(cfg.out, exist_ok=True)
    audit_path = os.path.join(cfg.out, "audit.jsonl")
    _remove(cfg.out, (*ABLATE_OUTPUTS, "audit.jsonl"))
    cohort = load_cohort(cfg)
    results = []
    try:
        for policy in policies:
            datasets = build_audited_datasets(cohort, cfg.cutoffs, policy, audit_path)
            results.extend(evaluation.run_benchmark(cohort, cfg.cutoffs, cfg.models, cfg.seeds, policy,
                                                    datasets=datasets, jobs=cfg.jobs, progress=_progress))
    except ProtocolViolation:
        _remove(cfg.out, ABLATE_OUTPUTS)
        raise
    ab = evaluation.AblationResult(results, evaluation.aggregate(results, cfg.seeds, cfg.models))
    frame = evaluation.results_frame(results)
    _write_csv(frame, os.path.join(cfg.out, "ablation_results.csv"))
    _write_csv(ab.long(), os.path.join(cfg.out, "ablation_long.csv"))
    _write_csv(ab.table(), os.path.join(cfg.out, "ablation.csv"))
    _write_manifest(cfg, cfg.out, "ablate",
                    ["ablation_results.csv", "ablation_long.csv", "ablation.csv", "audit.jsonl"],
                    {"results_digest": results_digest(frame), "policies": [p.value for p in policies]})
    print(ab.table().to_string(index=False), file=sys.stderr)
    return EXIT_OK


def cmd_synth(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    values = {(k if k.startswith("synth_") else f"synth_{k}"): v for k, v in values.items()}
    for name in ("n_instances", "seed"):
        flag = getattr(args, name)
        if flag is not None:
            values[f"synth_{name}"] = flag
    cfg = synth_config_from(values) or SynthConfig()
    out = args.out or "synthetic-oulad"
    paths = dataset.write_tables(dataset.generate_synthetic(cfg), out)
    hashes = {os.path.basename(p): _sha256(p) for p in paths.values()}
    with open(os.path.join(out, "synth_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"synth": _synth_echo(cfg), "files": hashes}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(paths)} tables to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    if not os.path.isfile(args.results):
        raise DataError(f"results file not found: {args.results}")
    frame = pd.read_csv(args.results, float_precision="round_trip")
    missing = [c for c in evaluation.RESULT_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"results file lacks columns {missing}")
    seeds = _int_list(args.seeds) if args.seeds else tuple(sorted(frame["seed"].unique().tolist()))
    results = evaluation.results_from_frame(frame)
    models = tuple(dict.fromkeys(frame["model"].tolist()))
    aggregates = evaluation.aggregate(results, seeds, models)
    out = args.out or os.path.dirname(os.path.abspath(args.results))
    os.makedirs(out, exist_ok=True)
    _write_csv(evaluation.aggregate_frame(aggregates), os.path.join(out, "aggregate.csv"))
    for policy in dict.fromkeys(a.policy for a in aggregates):
        best = evaluation.best_per_cutoff(aggregates, policy=policy)
        suffix = "" if policy is Policy.STRICT else f"_{policy.value}"
        _write_csv(best, os.path.join(out, f"best_per_cutoff{suffix}.csv"))
    print(f"aggregated {len(results)} results into {out}", file=sys.stderr)
    return EXIT_OK


def _progress(result):
    logger.info("t=%d %s seed=%d roc_auc=%.4f (%.1fs)", result.cutoff, result.model, result.seed,
                result.metrics.roc_auc, result.wall_seconds)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leapbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, policy=True):
        p.add_argument("--config", help="key = value config file (or a manifest.json)")
        p.add_argument("--data-root", dest="data_root", help="directory with the five OULAD CSV files")
        p.add_argument("--out", help="output directory")
        p.add_argument("--cutoffs", help="comma-separated cutoff days")
        p.add_argument("--models", help=f"comma-separated subset of {','.join(MODEL_NAMES)}")
        p.add_argument("--seeds", help="comma-separated split seeds")
        if policy:
            p.add_argument("--policy", choices=[p_.value for p_ in Policy])
        p.add_argument("--jobs", type=int, help="worker processes for the model grid")

    p = sub.add_parser("validate", help="load the data and report cohort statistics")
    common(p)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("run", help="benchmark every cutoff/model/seed under one policy")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("ablate", help="compare strict and leaky policies")
    common(p)
    p.set_defaults(func=cmd_ablate)
    p = sub.add_parser("synth", help="write synthetic OULAD-schema tables")
    p.add_argument("--config", help="key = value synthetic settings")
    p.add_argument("--out", help="output directory")
    p.add_argument("--n-instances", dest="n_instances", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser("report", help="re-aggregate an existing results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--seeds", help="expected seed set (default: seeds present in the file)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, IncompleteSeedsError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ProtocolViolation as exc:
        print(f"protocol violation: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except MetricUndefinedError as exc:
        print(f"metric undefined: {exc}", file=sys.stderr)
        return EXIT_METRIC


if __name__ == "__main__":
    sys.exit(main())
