"""Batch command line: profile | synth | train | embed | predict | interpret
| evaluate.

One JSON config file drives every stage; flags override the seed and paths.
Commands never mutate their inputs, write deterministic artifacts (no
timestamps, sorted keys) and fail with a machine-readable error JSON on
stderr plus a stage-specific exit code.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, TabrepError
from .eval import (BaselineConfig, MetricSet, SynthConfig, synth_generate)
from .interpret import InterpretConfig, Target, genome_report
from .model import CustomerEncoder, ModelConfig, TrainConfig
from .prep import FeatureSchema, RecognizerConfig, build_schema
from .table import BigTable, TableFormat, compute_stats, load_table, order_records, save_table

EXIT_CODES = {"profile": 10, "synth": 11, "train": 12, "embed": 13,
              "predict": 14, "interpret": 15, "evaluate": 16}


@dataclass
class RunConfig:
    """Materialized view of the JSON config file with all defaults filled."""

    seed: int = 0
    format: TableFormat = None
    recognizer: RecognizerConfig = None
    model: ModelConfig = None
    train: TrainConfig = None
    synth: SynthConfig = None
    baseline: BaselineConfig = None
    interpret: InterpretConfig = None
    tasks: list = None


_SECTIONS = {
    "format": TableFormat,
    "recognizer": RecognizerConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "synth": SynthConfig,
    "baseline": BaselineConfig,
    "interpret": InterpretConfig,
}


def load_config(path: str | None, seed_override: int | None = None) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - set(_SECTIONS) - {"seed", "tasks"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    seed = int(raw.get("seed", 0))
    if seed_override is not None:
        seed = seed_override
    cfg = RunConfig(seed=seed, tasks=list(raw.get("tasks", [])))

    for name, cls in _SECTIONS.items():
        section = dict(raw.get(name, {}))
        if name == "format" and "label_columns" in section:
            section["label_columns"] = tuple(section["label_columns"])
        if name == "interpret" and section.get("targets") is not None:
            section["targets"] = tuple(Target(**t) for t in section["targets"])
        # stage seeds follow the run seed unless pinned explicitly
        if name in ("train", "synth", "baseline", "interpret") and "seed" not in section:
            section["seed"] = seed
        try:
            setattr(cfg, name, cls(**section))
        except TypeError as e:
            raise ConfigError(f"bad [{name}] section: {e}") from e
    return cfg


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load_ordered(args, cfg: RunConfig) -> BigTable:
    table = load_table(args.table, cfg.format)
    return order_records(table)


def _infer_tasks(table: BigTable, names: list) -> dict[str, int]:
    tasks = {}
    for name in names:
        got = table.labels.get(name, {})
        if not got:
            raise ConfigError(f"no labels found for task {name!r}; "
                              f"is it listed in format.label_columns?")
        tasks[name] = max(2, max(int(v) for v in got.values()) + 1)
    return tasks


def _schema_for(args, cfg: RunConfig, table: BigTable) -> FeatureSchema:
    if getattr(args, "schema", None):
        return FeatureSchema.load(args.schema)
    return build_schema(table, cfg.recognizer)


def cmd_profile(args, cfg: RunConfig) -> int:
    table = _load_ordered(args, cfg)
    schema = build_schema(table, cfg.recognizer)
    stats = compute_stats(table, schema)
    out = Path(args.out)
    schema.save(out / "schema.json")
    _write(out / "stats.json", stats.to_json())
    print(f"profiled {table.n_customers} customers, {table.n_features} features "
          f"-> {out / 'schema.json'}, {out / 'stats.json'}")
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    table = synth_generate(cfg.synth)
    out = Path(args.out) / (args.name or "synth.csv")
    fmt = TableFormat(id_column=cfg.format.id_column,
                      date_column=cfg.format.date_column or "date",
                      delimiter=cfg.format.delimiter,
                      label_columns=(cfg.synth.task,))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_table(table, out, fmt)
    print(f"wrote {table.n_customers} customers to {out}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    table = _load_ordered(args, cfg)
    schema = _schema_for(args, cfg, table)
    task_names = cfg.tasks or list(table.labels)
    tasks = _infer_tasks(table, task_names) if task_names else {}
    model = CustomerEncoder(schema, cfg.model, tasks, seed=cfg.seed)
    log = model.fit(table, cfg.train)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "checkpoint.json")
    log_lines = "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in log)
    _write(out / "train_log.jsonl", log_lines)
    last = log[-1] if log else {}
    print(f"trained {len(log)} epochs on {table.n_customers} customers "
          f"-> {out / 'checkpoint.json'} (final train loss "
          f"{last.get('train_loss', float('nan')):.4f})")
    return 0


def cmd_embed(args, cfg: RunConfig) -> int:
    table = _load_ordered(args, cfg)
    model = CustomerEncoder.load(args.checkpoint)
    names, reps = model.represent(table)
    out = Path(args.out) / "embeddings.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([cfg.format.id_column] + [f"r{i:03d}" for i in range(reps.shape[1])])
        for cid, row in zip(names, reps):
            writer.writerow([cid] + [repr(float(v)) for v in row])
    print(f"wrote {len(names)} representation rows to {out}")
    return 0


def cmd_predict(args, cfg: RunConfig) -> int:
    table = _load_ordered(args, cfg)
    model = CustomerEncoder.load(args.checkpoint)
    task = args.task or next(iter(model.tasks), None)
    if task is None:
        raise ConfigError("model has no task heads; nothing to predict")
    names, proba = model.predict_proba(table, task)
    out = Path(args.out) / "predictions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([cfg.format.id_column]
                        + [f"p_{task}_{c}" for c in range(proba.shape[1])])
        for cid, row in zip(names, proba):
            writer.writerow([cid] + [repr(float(v)) for v in row])
    print(f"wrote {len(names)} prediction rows to {out}")
    return 0


def cmd_interpret(args, cfg: RunConfig) -> int:
    table = _load_ordered(args, cfg)
    model = CustomerEncoder.load(args.checkpoint)
    report = genome_report(model, table, cfg.interpret)
    out = Path(args.out)
    _write(out / "genome.json", report.to_json())
    written = [str(out / "genome.json")]
    if args.text:
        _write(out / "genome.txt", report.render_text())
        written.append(str(out / "genome.txt"))
    print(f"wrote genome report for {len(report.targets)} targets -> {', '.join(written)}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    table = _load_ordered(args, cfg)
    model = CustomerEncoder.load(args.checkpoint)
    task = args.task or next(iter(model.tasks), None)
    if task is None:
        raise ConfigError("model has no task heads; nothing to evaluate")
    got = table.labels.get(task, {})
    if not got:
        raise ConfigError(f"table has no labels for task {task!r}")
    names, proba = model.predict_proba(table, task, [c for c in table.customers if c in got])
    labels = np.array([int(got[c]) for c in names])
    metrics = MetricSet.from_scores(proba[:, 1], labels)
    out = Path(args.out) / "metrics.json"
    _write(out, metrics.to_json())
    print(f"evaluated task {task!r} on {len(names)} labeled customers -> {out}: "
          f"auc {metrics.auc:.4f}, f {metrics.f_score:.4f}, "
          f"wacc {metrics.weighted_accuracy:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabrep",
        description="Customer representation pipeline over heterogeneous tables.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, table=True, checkpoint=False):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory")
        if table:
            p.add_argument("--table", required=True, help="input CSV table")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="trained model JSON")

    common(sub.add_parser("profile", help="recognize feature kinds and table stats"))
    p = sub.add_parser("synth", help="generate a synthetic labeled table")
    common(p, table=False)
    p.add_argument("--name", help="output file name (default synth.csv)")
    p = sub.add_parser("train", help="fit the representation model")
    common(p)
    p.add_argument("--schema", help="precomputed schema JSON (default: recognize)")
    common(sub.add_parser("embed", help="write one representation row per customer"),
           checkpoint=True)
    p = sub.add_parser("predict", help="write per-customer class probabilities")
    common(p, checkpoint=True)
    p.add_argument("--task", help="task head to use (default: first)")
    p = sub.add_parser("interpret", help="write a genome report")
    common(p, checkpoint=True)
    p.add_argument("--text", action="store_true", help="also write text bars")
    p = sub.add_parser("evaluate", help="score predictions against table labels")
    common(p, checkpoint=True)
    p.add_argument("--task", help="task head to evaluate (default: first)")
    return parser


_COMMANDS = {"profile": cmd_profile, "synth": cmd_synth, "train": cmd_train,
             "embed": cmd_embed, "predict": cmd_predict,
             "interpret": cmd_interpret, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        return _COMMANDS[args.command](args, cfg)
    except TabrepError as e:
        payload = {"error": {"code": e.code, "type": type(e).__name__, "message": str(e)}}
        print(json.dumps(payload), file=sys.stderr)
        return EXIT_CODES[args.command]
    except OSError as e:
        payload = {"error": {"code": "io-error", "type": type(e).__name__, "message": str(e)}}
        print(json.dumps(payload), file=sys.stderr)
        return EXIT_CODES[args.command]


if __name__ == "__main__":
    sys.exit(main())
