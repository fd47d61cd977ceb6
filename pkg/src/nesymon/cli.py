"""Command-line front door wiring the pipeline end to end.

Subcommands cover the full workflow: ingest raw logs, mine candidate
rules, compile a knowledge base, train, evaluate, run the ablation grid,
and generate synthetic logs.  Every run resolves its configuration (file
plus flag overrides), writes the resolved document and a hash next to
its outputs, and skips work when the same hash already produced them.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .autodiff import NonFiniteError
from .eventlog import (
    EventLog,
    LabelingSpec,
    ParseError,
    extract_prefixes,
    parse_csv,
    parse_log,
    parse_xes,
    serialize_log,
    split,
)
from .features import FeatureConfig, build_schema
from .kb import RuleError, collect_temporal_pairs, compile_kb
from .kb.crisp import EvalError
from .kb.dsl import DslError, parse_rules

OUT_ROOT_ENV = "NESYMON_OUT_ROOT"

_DATA_ERRORS = (ParseError, DslError, RuleError, EvalError, ValueError,
                KeyError, TypeError, OSError, yaml.YAMLError)


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise _UsageExit(message)


# --------------------------------------------------------------------------
# configuration


DEFAULTS = {
    "dataset": None,
    "timestamp_format": None,
    "csv_mapping": {},
    "labeling": {},
    "prefix": {"min_len": 2, "max_len": 40},
    "rules": None,
    "mining": {
        "min_support": 0.9,
        "min_confidence": 0.8,
        "pairs": [],
        "threshold_grid": [1, 2, 4, 8, 12, 24, 48],
        "lift_min": 1.5,
        "support_min": 0.1,
    },
    "features": {
        "temporal_pairs": "auto",
        "include_cycle_time": True,
        "exclude_attributes": "auto",
    },
    "backbone": {"embed_dim": 16, "hidden_dim": 32, "layers": 1,
                 "head_hidden": [16]},
    "train": {"epochs": 100, "patience": 20, "batch_size": 64, "lr": 0.01,
              "modes": "ABC", "objective": "satagg", "seed": 0,
              "slope": 25.0, "p_universal": 2.0, "p_exists": 2.0,
              "p_sat": 2.0, "formula_weights": {}, "debug": True},
    "ablation": {"variants": None, "seeds": [0, 1, 2, 3, 4], "mix": 0.5},
    "evaluate": {"mix": None},
    "synth": {"scenario": "timed-antibiotic", "n_traces": 1000,
              "compliant_frac": 0.5, "outcome_rate": 0.05,
              "label_noise": 0.05},
    "out_dir": "runs/run",
    "seed": 0,
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if (key in merged and isinstance(merged[key], dict)
                and isinstance(value, dict)):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


@dataclasses.dataclass
class RunConfig:
    """Resolved run settings; every subcommand reads the slice it needs."""

    values: dict

    @classmethod
    def load(cls, path: str | None, overrides: dict) -> "RunConfig":
        merged = DEFAULTS
        if path:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
            if not isinstance(loaded, dict):
                raise ValueError(f"config file {path} must hold a mapping")
            unknown = set(loaded) - set(DEFAULTS)
            if unknown:
                raise ValueError(
                    f"unknown config keys: {', '.join(sorted(unknown))}")
            merged = _deep_merge(merged, loaded)
        merged = _deep_merge(merged, overrides)
        return cls(merged)

    def __getitem__(self, key: str):
        return self.values[key]

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.values, sort_keys=True,
                              default_flow_style=False)

    def digest(self, stage: str, input_paths: list[str | None]) -> str:
        payload = {"stage": stage, "config": self.values,
                   "inputs": [_file_digest(p) for p in input_paths if p]}
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _overrides_from(args: argparse.Namespace) -> dict:
    """Map CLI flags onto their config paths; unset flags change nothing."""
    paths = {
        "input": ("dataset",),
        "timestamp_format": ("timestamp_format",),
        "rules": ("rules",),
        "out": ("out_dir",),
        "seed": ("seed",),
        "min_support": ("mining", "min_support"),
        "min_confidence": ("mining", "min_confidence"),
        "epochs": ("train", "epochs"),
        "patience": ("train", "patience"),
        "batch_size": ("train", "batch_size"),
        "lr": ("train", "lr"),
        "modes": ("train", "modes"),
        "objective": ("train", "objective"),
        "slope": ("train", "slope"),
        "mix": None,  # per-command meaning, handled below
        "seeds": ("ablation", "seeds"),
        "variants": ("ablation", "variants"),
        "scenario": ("synth", "scenario"),
        "n_traces": ("synth", "n_traces"),
        "compliant_frac": ("synth", "compliant_frac"),
        "outcome_rate": ("synth", "outcome_rate"),
        "label_noise": ("synth", "label_noise"),
    }
    overrides: dict = {}
    for flag, target in paths.items():
        if not hasattr(args, flag) or getattr(args, flag) is None:
            continue
        value = getattr(args, flag)
        if flag == "mix":
            section = "evaluate" if args.command == "evaluate" else "ablation"
            target = (section, "mix")
        elif flag in ("seeds", "variants"):
            value = [v.strip() for v in value.split(",") if v.strip()]
            if flag == "seeds":
                value = [int(v) for v in value]
        node = overrides
        for key in target[:-1]:
            node = node.setdefault(key, {})
        node[target[-1]] = value
    return overrides


def _resolve_out(config: RunConfig) -> Path:
    out = Path(config["out_dir"])
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


class _Stage:
    """Hash-keyed idempotence: skip a stage whose outputs already match."""

    def __init__(self, name: str, config: RunConfig, out: Path,
                 inputs: list[str | None], outputs: list[str], force: bool):
        self.name = name
        self.out = out
        self.outputs = [out / o for o in outputs]
        self.hash_path = out / f"{name}.hash"
        self.digest = config.digest(name, inputs)
        self.config = config
        self.force = force

    def up_to_date(self) -> bool:
        if self.force or not self.hash_path.exists():
            return False
        if self.hash_path.read_text(encoding="utf-8").strip() != self.digest:
            return False
        return all(p.exists() for p in self.outputs)

    def finish(self) -> None:
        (self.out / "config.resolved.yaml").write_text(
            self.config.to_yaml(), encoding="utf-8")
        self.hash_path.write_text(self.digest + "\n", encoding="utf-8")

    def announce_skip(self) -> None:
        print(f"[{self.name}] up to date (hash {self.digest}); "
              "use --force to rerun")


# --------------------------------------------------------------------------
# shared pipeline pieces


def _load_log(config: RunConfig) -> EventLog:
    path = config["dataset"]
    if not path:
        raise ValueError("no dataset given; set 'dataset' in the config "
                         "or pass --input")
    suffix = Path(path).suffix.lower()
    if suffix == ".xes":
        return parse_xes(path)
    if suffix == ".csv":
        mapping = config["csv_mapping"]
        if not mapping:
            raise ValueError("CSV input needs a csv_mapping section with "
                             "case, activity, and timestamp roles")
        return parse_csv(path, mapping, config["timestamp_format"])
    with open(path, "r", encoding="utf-8") as fh:
        return parse_log(fh.read())


def _labeling(config: RunConfig) -> LabelingSpec:
    spec = config["labeling"]
    if not spec:
        raise ValueError("no labeling section in the config; outcome "
                         "labels are required for this command")
    return LabelingSpec(**spec)


def _read_rules(config: RunConfig):
    path = config["rules"]
    if not path:
        raise ValueError("no rule file given; set 'rules' in the config "
                         "or pass --rules")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_rules(fh.read())


def _feature_config(config: RunConfig, rules, labeling) -> FeatureConfig:
    feats = config["features"]
    pairs = feats["temporal_pairs"]
    if pairs == "auto":
        pairs = collect_temporal_pairs(rules) if rules else ()
    else:
        pairs = tuple((a, b) for a, b in pairs)
    exclude = feats["exclude_attributes"]
    if exclude == "auto":
        exclude = ()
        if labeling is not None and labeling.attribute:
            exclude = (labeling.attribute,)
    return FeatureConfig(temporal_pairs=tuple(pairs),
                         include_cycle_time=feats["include_cycle_time"],
                         exclude_attributes=tuple(exclude))


def _backbone_config(config: RunConfig):
    from .neural import BackboneConfig

    section = dict(config["backbone"])
    section["head_hidden"] = tuple(section.get("head_hidden", ()))
    return BackboneConfig(**section)


def _train_config(config: RunConfig):
    from .ltn import TrainConfig

    section = dict(config["train"])
    modes = section.get("modes", "ABC")
    if isinstance(modes, str):
        modes = frozenset() if modes.lower() in ("", "none") \
            else frozenset(modes.upper())
    section["modes"] = modes
    weights = section.get("formula_weights", {})
    if isinstance(weights, dict):
        section["formula_weights"] = tuple(sorted(
            (str(k), float(v)) for k, v in weights.items()))
    allowed = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown train options: {', '.join(sorted(unknown))}")
    return TrainConfig(**section)


def _prepared(config: RunConfig):
    """Log through schema and compiled kb, split by trace."""
    log = _load_log(config)
    labeling = _labeling(config)
    bounds = config["prefix"]
    prefixes = extract_prefixes(log, labeling, bounds["min_len"],
                                bounds["max_len"])
    sp = split(prefixes, seed=config["seed"])
    rules = _read_rules(config)
    fc = _feature_config(config, rules, labeling)
    schema = build_schema(sp.train.prefixes, fc)
    kb = compile_kb(rules, schema)
    return log, sp, schema, kb


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args, config: RunConfig) -> int:
    out = _resolve_out(config)
    stage = _Stage("ingest", config, out, [config["dataset"]],
                   ["log.tsv", "ingest-stats.txt"], args.force)
    if stage.up_to_date():
        stage.announce_skip()
        return 0
    log = _load_log(config)
    if not log.traces:
        raise ValueError("ingested log contains no traces")
    (out / "log.tsv").write_text(serialize_log(log), encoding="utf-8")
    lengths = [len(t.events) for t in log]
    activities = sorted({e.activity for t in log for e in t.events})
    case_attrs = sorted({k for t in log for k in t.case_payload})
    event_attrs = sorted({k for t in log for e in t.events for k in e.payload})
    lines = [
        f"traces: {len(log)}",
        f"events: {sum(lengths)}",
        f"trace length: min {min(lengths)} max {max(lengths)} "
        f"mean {np.mean(lengths):.2f}",
        f"activities ({len(activities)}): {', '.join(activities)}",
        f"case attributes: {', '.join(case_attrs) or '(none)'}",
        f"event attributes: {', '.join(event_attrs) or '(none)'}",
    ]
    for key, count in sorted(log.warnings.items()):
        lines.append(f"warning {key}: {count}")
    (out / "ingest-stats.txt").write_text("\n".join(lines) + "\n",
                                          encoding="utf-8")
    stage.finish()
    print("\n".join(lines))
    print(f"[ingest] wrote {out / 'log.tsv'}")
    return 0


def cmd_mine(args, config: RunConfig) -> int:
    from .rulemine import (
        PayloadMiningConfig,
        declare_to_mined,
        merge_manual,
        mine_declare,
        mine_payload,
        mine_temporal,
        write_rules,
    )

    out = _resolve_out(config)
    stage = _Stage("mine", config, out, [config["dataset"], args.manual],
                   ["mined.rules", "mine-stats.txt"], args.force)
    if stage.up_to_date():
        stage.announce_skip()
        return 0
    log = _load_log(config)
    mining = config["mining"]
    notes: list[str] = []
    mined = [declare_to_mined(c)
             for c in mine_declare(log, mining["min_support"])]
    n_declare = len(mined)
    n_temporal = n_payload = 0
    if config["labeling"]:
        labeling = _labeling(config)
        pairs = [tuple(p) for p in mining["pairs"]]
        if pairs:
            found = mine_temporal(log, pairs, mining["threshold_grid"],
                                  labeling,
                                  min_confidence=mining["min_confidence"],
                                  warnings=notes)
            n_temporal = len(found)
            mined.extend(found)
        payload_cfg = PayloadMiningConfig(lift_min=mining["lift_min"],
                                          support_min=mining["support_min"])
        found = mine_payload(log, labeling, payload_cfg, warnings=notes)
        n_payload = len(found)
        mined.extend(found)
    else:
        notes.append("no labeling configured; outcome miners skipped")
    if args.manual:
        with open(args.manual, "r", encoding="utf-8") as fh:
            mined = merge_manual(mined, fh.read())
    if not mined:
        raise ValueError("mining produced no rules above the thresholds; "
                         "lower min_support or add manual rules")
    header = (f"mined from {config['dataset']}: {n_declare} control-flow, "
              f"{n_temporal} temporal, {n_payload} payload rule(s)")
    doc = write_rules(mined, header=header)
    (out / "mined.rules").write_text(doc, encoding="utf-8")
    stats = [header] + [f"note: {n}" for n in notes]
    (out / "mine-stats.txt").write_text("\n".join(stats) + "\n",
                                        encoding="utf-8")
    stage.finish()
    print("\n".join(stats))
    print(f"[mine] wrote {out / 'mined.rules'} ({len(mined)} rule(s))")
    return 0


def cmd_compile_kb(args, config: RunConfig) -> int:
    out = _resolve_out(config)
    stage = _Stage("compile-kb", config, out,
                   [config["dataset"], config["rules"]],
                   ["kb-report.txt"], args.force)
    if stage.up_to_date():
        stage.announce_skip()
        return 0
    log = _load_log(config)
    labeling = _labeling(config) if config["labeling"] else None
    bounds = config["prefix"]
    if labeling is not None:
        prefixes = extract_prefixes(log, labeling, bounds["min_len"],
                                    bounds["max_len"]).prefixes
    else:
        from .eventlog import Prefix
        prefixes = [Prefix(t, len(t.events), 0) for t in log
                    if len(t.events) >= 1]
    rules = _read_rules(config)
    fc = _feature_config(config, rules, labeling)
    schema = build_schema(prefixes, fc)
    kb = compile_kb(rules, schema)
    report = kb.report()
    (out / "kb-report.txt").write_text(report + "\n", encoding="utf-8")
    stage.finish()
    print(report)
    return 0


def cmd_train(args, config: RunConfig) -> int:
    from . import ltn
    from .neural import PredicateModel

    out = _resolve_out(config)
    stage = _Stage("train", config, out,
                   [config["dataset"], config["rules"]],
                   ["model.nsy1", "history.jsonl", "train-summary.txt"],
                   args.force)
    if stage.up_to_date():
        stage.announce_skip()
        return 0
    _, sp, schema, kb = _prepared(config)
    tc = _train_config(config)
    bb = _backbone_config(config)
    enabled = "A" in tc.modes
    slot_fn = lambda prefixes: ltn.inject_mode_a(
        kb, prefixes, schema, enabled=enabled, slope=tc.slope)[0]
    model = PredicateModel(bb, schema, expansion_width=len(kb.mode_a),
                           seed=tc.seed)
    result = ltn.train(model, kb, sp.train.prefixes, sp.validation.prefixes,
                       schema, tc, history_path=out / "history.jsonl",
                       slot_fn=slot_fn)
    result.model.save(out / "model.nsy1", extra_meta={
        "modes": sorted(tc.modes),
        "objective": tc.objective,
        "slope": tc.slope,
        "best_epoch": result.best_epoch,
        "best_val_f1": result.best_val_f1,
        "rules": str(config["rules"]),
        "run_hash": stage.digest,
    })
    summary = [
        f"stopped after epoch {result.stopped_epoch}",
        f"best epoch: {result.best_epoch}",
        f"best validation F1: {result.best_val_f1:.4f}",
        f"train prefixes: {len(sp.train)}",
        f"validation prefixes: {len(sp.validation)}",
        f"modes: {''.join(sorted(tc.modes)) or '(none)'} "
        f"objective: {tc.objective}",
    ]
    (out / "train-summary.txt").write_text("\n".join(summary) + "\n",
                                           encoding="utf-8")
    stage.finish()
    print("\n".join(summary))
    print(f"[train] wrote {out / 'model.nsy1'}")
    return 0


def cmd_evaluate(args, config: RunConfig) -> int:
    from . import ltn
    from .evaluation import (accuracy, binary_f1, build_compliance_test,
                             classify, compliance_score)
    from .neural import PredicateModel

    out = _resolve_out(config)
    stage = _Stage("evaluate", config, out,
                   [config["dataset"], config["rules"], args.checkpoint],
                   ["metrics.json", "compliance.txt"], args.force)
    if stage.up_to_date():
        stage.announce_skip()
        return 0
    model, meta = PredicateModel.load(args.checkpoint)
    schema = model.schema
    log = _load_log(config)
    labeling = _labeling(config)
    bounds = config["prefix"]
    test_raw = extract_prefixes(log, labeling, bounds["min_len"],
                                bounds["max_len"]).prefixes
    if not test_raw:
        raise ValueError("evaluation dataset produced no prefixes")
    kb = compile_kb(_read_rules(config), schema)
    mix = config["evaluate"]["mix"]
    achieved = None
    test = test_raw
    if mix is not None:
        test, achieved = build_compliance_test(test_raw, kb, mix=mix,
                                               seed=config["seed"])
    slope = float(meta.get("slope", ltn.DEFAULT_SLOPE))
    enabled = "A" in meta.get("modes", [])
    slots, _ = ltn.inject_mode_a(kb, test, schema, enabled=enabled,
                                 slope=slope)
    predictions = classify(model, test, expansion=slots)
    labels = np.asarray([p.label for p in test], dtype=np.int64)
    report = compliance_score(predictions, test, kb)
    metrics = {
        "n_prefixes": len(test),
        "accuracy": accuracy(labels, predictions),
        "f1": binary_f1(labels, predictions),
        "compliance": report.overall,
        "compliance_macro": report.macro,
        "achieved_mix": achieved,
        "checkpoint_hash": meta.get("run_hash"),
    }
    (out / "metrics.json").write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    (out / "compliance.txt").write_text(report.render() + "\n",
                                        encoding="utf-8")
    stage.finish()
    print(json.dumps(metrics, indent=2, sort_keys=True))
    print(report.render())
    return 0


def cmd_ablate(args, config: RunConfig) -> int:
    from .evaluation import build_compliance_test, run_ablation

    out = _resolve_out(config)
    stage = _Stage("ablate", config, out,
                   [config["dataset"], config["rules"]],
                   ["results.jsonl", "summary.txt", "compliance_boxplot.tsv"],
                   args.force)
    if stage.up_to_date():
        stage.announce_skip()
        return 0
    _, sp, schema, kb = _prepared(config)
    ablation = config["ablation"]
    test, achieved = build_compliance_test(sp.test_raw.prefixes, kb,
                                           mix=ablation["mix"],
                                           seed=config["seed"])
    results = run_ablation(
        kb, (sp.train.prefixes, sp.validation.prefixes, test), schema,
        _backbone_config(config), _train_config(config),
        seeds=ablation["seeds"], variants=ablation["variants"],
        out_dir=out, jobs=args.jobs)
    stage.finish()
    print((out / "summary.txt").read_text(encoding="utf-8"))
    print(f"achieved compliant fraction of the test set: {achieved:.3f}")
    failed = sum(len(r.errors) for r in results)
    if failed:
        print(f"warning: {failed} grid cell(s) failed; see results.jsonl")
    return 0


def cmd_synth(args, config: RunConfig) -> int:
    from .synthlog import SynthConfig, generate

    out = _resolve_out(config)
    stage = _Stage("synth", config, out, [],
                   ["log.tsv", "planted.rules", "labeling.yaml",
                    "synth-stats.txt"], args.force)
    if stage.up_to_date():
        stage.announce_skip()
        return 0
    section = config["synth"]
    cfg = SynthConfig(scenario=section["scenario"],
                      n_traces=section["n_traces"],
                      seed=config["seed"],
                      compliant_frac=section["compliant_frac"],
                      outcome_rate=section["outcome_rate"],
                      label_noise=section["label_noise"])
    result = generate(cfg)
    (out / "log.tsv").write_text(serialize_log(result.log), encoding="utf-8")
    (out / "planted.rules").write_text(result.rules_text, encoding="utf-8")
    labeling = {k: v for k, v in dataclasses.asdict(result.labeling).items()
                if v is not None}
    (out / "labeling.yaml").write_text(
        yaml.safe_dump({"labeling": labeling}, sort_keys=True),
        encoding="utf-8")
    stats = [
        f"scenario: {cfg.scenario}",
        f"traces: {cfg.n_traces}",
        f"seed: {cfg.seed}",
        f"target compliant fraction: {cfg.compliant_frac:.4f}",
        f"measured compliant fraction: {result.compliant_fraction:.4f}",
    ]
    (out / "synth-stats.txt").write_text("\n".join(stats) + "\n",
                                         encoding="utf-8")
    stage.finish()
    print("\n".join(stats))
    print(f"[synth] wrote {out / 'log.tsv'}")
    return 0


# --------------------------------------------------------------------------
# argument wiring


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML run configuration file")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--force", action="store_true",
                        help="rerun even when outputs are up to date")
    common.add_argument("--json-errors", action="store_true",
                        help="emit machine-readable errors on stderr")
    common.add_argument("--seed", type=int, help="split and sampling seed")

    parser = _Parser(prog="nesymon",
                     description="neuro-symbolic process outcome pipeline")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[common],
                       help="convert an XES/CSV log to the internal format")
    p.add_argument("--input", help="source log (.xes, .csv, or internal .tsv)")
    p.add_argument("--timestamp-format", dest="timestamp_format")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("mine", parents=[common],
                       help="mine candidate rules from a log")
    p.add_argument("--input")
    p.add_argument("--min-support", dest="min_support", type=float)
    p.add_argument("--min-confidence", dest="min_confidence", type=float)
    p.add_argument("--manual", help="hand-written rules merged into the output")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("compile-kb", parents=[common],
                       help="validate a rule file against a log's schema")
    p.add_argument("--input")
    p.add_argument("--rules")
    p.set_defaults(func=cmd_compile_kb)

    p = sub.add_parser("train", parents=[common],
                       help="train a model with the configured injection modes")
    p.add_argument("--input")
    p.add_argument("--rules")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--modes", help="injection modes, e.g. ABC, B, or none")
    p.add_argument("--objective", choices=("satagg", "bce"))
    p.add_argument("--slope", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score a checkpoint on a labeled log")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input")
    p.add_argument("--rules")
    p.add_argument("--mix", type=float,
                   help="compose a compliance test set at this fraction")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common],
                       help="run the injection-mode ablation grid")
    p.add_argument("--input")
    p.add_argument("--rules")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel worker threads for grid cells")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--variants", help="comma-separated variant list")
    p.add_argument("--mix", type=float)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic log with planted rules")
    p.add_argument("--scenario", choices=("declare-mining",
                                          "timed-antibiotic"))
    p.add_argument("--n-traces", dest="n_traces", type=int)
    p.add_argument("--compliant-frac", dest="compliant_frac", type=float)
    p.add_argument("--outcome-rate", dest="outcome_rate", type=float)
    p.add_argument("--label-noise", dest="label_noise", type=float)
    p.set_defaults(func=cmd_synth)

    return parser


def _report_error(args, code: int, exc: Exception) -> int:
    kind = {1: "usage", 2: "data", 3: "numeric"}[code]
    if getattr(args, "json_errors", False):
        record = {"error": kind, "type": type(exc).__name__,
                  "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
    else:
        print(f"{kind} error: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit:
        return 1
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        config = RunConfig.load(args.config, _overrides_from(args))
        return args.func(args, config)
    except NonFiniteError as exc:
        return _report_error(args, 3, exc)
    except _DATA_ERRORS as exc:
        return _report_error(args, 2, exc)


if __name__ == "__main__":
    sys.exit(main())
