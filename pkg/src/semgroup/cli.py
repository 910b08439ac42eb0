"""Command-line interface: generate scenario streams, run policy
comparisons, and score partition files.

Subcommands
-----------
generate   write a stream JSON-lines file plus its hidden-truth sidecar
run        run every (policy, seed) pair from a config, write one report
           JSON per run, per-run and aggregate CSVs, and report figures
eval       print ARI/NMI between two label files as JSON

All randomness flows from the seeds in the config file.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .core import GroupingConfig, Partition
from .experiment import ExperimentConfig, ExperimentReport, run_experiment
from .figures import render_figures
from .metrics import adjusted_rand_index, normalized_mutual_information
from .models import POLICIES, TuningConfig
from .scenarios import (ScenarioConfig, ScenarioStream, gen_overlap,
                        gen_recurrence, gen_uniform_abrupt, gen_uniform_mild,
                        load_stream, save_stream)
from .warmup import WarmupConfig

_SCENARIO_PROPS = {
    "kind": {"enum": ["mild", "abrupt", "recurrence", "overlap"]},
    "num_tasks": {"type": "integer", "minimum": 2},
    "num_semantics": {"type": "integer", "minimum": 1},
    "recurrences": {"type": "integer", "minimum": 1},
    "overlap_percent": {"type": "number", "minimum": 0, "maximum": 100},
    "classes_per_task": {"type": "integer", "minimum": 2},
    "instances_per_class": {"type": "integer", "minimum": 1},
    "input_dim": {"type": "integer", "minimum": 2},
    "center_separation": {"type": "number", "exclusiveMinimum": 0},
    "within_spread": {"type": "number", "minimum": 0},
    "radius": {"type": "number", "exclusiveMinimum": 0},
    "semantic_scale": {"type": "number", "exclusiveMinimum": 0},
    "class_scale": {"type": "number", "minimum": 0},
    "noise_scale": {"type": "number", "minimum": 0},
    "heldout_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    "min_center_gap": {"type": "number", "exclusiveMinimum": 0},
    "outlier_rate": {"type": "number", "minimum": 0, "maximum": 1},
    "outlier_gap": {"type": "number", "minimum": 0},
    "interleave": {"enum": ["random", "adversarial"]},
    "similar_fraction": {"type": "number", "minimum": 0, "maximum": 1},
    "seed": {"type": "integer"},
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "properties": _SCENARIO_PROPS,
            "required": ["kind"],
        },
        "stream_file": {"type": "string"},
        "grouping": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "gamma": {"type": "number", "exclusiveMinimum": 1},
                "kappa": {"type": "integer", "minimum": 1},
                "r_iters": {"type": "integer", "minimum": 1},
                "eta": {"type": "integer", "minimum": 1},
            },
        },
        "warmup": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "iterations": {"type": "integer", "minimum": 0},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "lambda_key": {"type": "number", "minimum": 0},
                "seed": {"type": "integer"},
                "distance": {"enum": ["sqeuclidean", "cosine"]},
            },
        },
        "tuning": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "lambda_key": {"type": "number", "minimum": 0},
                "seed": {"type": "integer"},
                "distance": {"enum": ["sqeuclidean", "cosine"]},
            },
        },
        "feature_dim": {"type": "integer", "minimum": 2},
        "policies": {
            "type": "array",
            "items": {"enum": list(POLICIES)},
            "minItems": 1,
        },
        "seeds": {
            "type": "array",
            "items": {"type": "integer"},
            "minItems": 1,
        },
    },
}


def load_config(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise SystemExit(f"config not found: {path}")
    except json.JSONDecodeError as exc:
        raise SystemExit(f"config is not valid JSON: {exc}")
    validator = Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        for err in errors:
            loc = "/".join(str(p) for p in err.path) or "<root>"
            print(f"config error at {loc}: {err.message}", file=sys.stderr)
        raise SystemExit(2)
    return raw


def scenario_config(section: dict) -> ScenarioConfig:
    fields = {k: v for k, v in section.items() if k not in ("kind", "num_tasks")}
    return ScenarioConfig(**fields)


def build_stream(section: dict, seed: int | None = None) -> ScenarioStream:
    cfg = scenario_config(section)
    kind = section["kind"]
    if kind == "mild":
        return gen_uniform_mild(cfg, seed, num_tasks=section.get("num_tasks"))
    if kind == "abrupt":
        return gen_uniform_abrupt(section.get("num_tasks", cfg.num_semantics),
                                  cfg, seed)
    if kind == "recurrence":
        return gen_recurrence(cfg.num_semantics, cfg.recurrences, cfg, seed)
    return gen_overlap(cfg.overlap_percent, cfg, seed)


def experiment_config(raw: dict) -> ExperimentConfig:
    return ExperimentConfig(
        grouping=GroupingConfig(**raw.get("grouping", {})),
        warmup=WarmupConfig(**raw.get("warmup", {})),
        tuning=TuningConfig(**raw.get("tuning", {})),
        feature_dim=raw.get("feature_dim"),
    )


def cmd_generate(args) -> int:
    raw = load_config(args.config)
    if "scenario" not in raw:
        print("config has no scenario section", file=sys.stderr)
        return 2
    try:
        stream = build_stream(raw["scenario"], args.seed_override)
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    sidecar = save_stream(stream, out)
    cert = stream.certificate
    print(json.dumps({
        "tasks": len(stream),
        "stream": str(out),
        "sidecar": str(sidecar),
        "certificate": cert,
    }, sort_keys=True))
    return 0


def _run_one(raw: dict, policy: str, seed: int) -> ExperimentReport:
    if "scenario" in raw:
        stream = build_stream(raw["scenario"], seed)
    else:
        stream = load_stream(raw["stream_file"])
    return run_experiment(stream, policy, experiment_config(raw), seed)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csvs(reports: list[ExperimentReport], outdir: Path) -> tuple[Path, Path]:
    """Per-run rows plus a mean/standard-error aggregate per policy."""
    runs_path = outdir / "runs.csv"
    with runs_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ExperimentReport.CSV_COLUMNS)
        for r in sorted(reports, key=lambda r: (r.policy, r.seed)):
            writer.writerow([_format(v) for v in r.csv_row()])

    agg_path = outdir / "aggregate.csv"
    metrics = ("groups", "ari", "nmi", "a_last", "f_last")
    with agg_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["policy", "runs"]
        for m in metrics:
            header += [f"{m}_mean", f"{m}_se"]
        writer.writerow(header)
        for policy in sorted({r.policy for r in reports}):
            runs = [r for r in reports if r.policy == policy]
            row = [policy, len(runs)]
            for m in metrics:
                vals = [
                    {"groups": r.final_group_count, "ari": r.ari, "nmi": r.nmi,
                     "a_last": r.a_last, "f_last": r.f_last}[m]
                    for r in runs]
                vals = [v for v in vals if v is not None]
                if not vals:
                    row += ["", ""]
                    continue
                mean = float(np.mean(vals))
                se = float(np.std(vals) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
                row += [repr(mean), repr(se)]
            writer.writerow(row)
    return runs_path, agg_path


def cmd_run(args) -> int:
    raw = load_config(args.config)
    if "scenario" not in raw and "stream_file" not in raw:
        print("config needs a scenario section or a stream_file", file=sys.stderr)
        return 2
    policies = [args.policy] if args.policy else raw.get("policies", ["adaptive"])
    seeds = [args.seed_override] if args.seed_override is not None \
        else raw.get("seeds", [0])
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    jobs = [(policy, seed) for policy in policies for seed in seeds]
    reports: dict[tuple[str, int], ExperimentReport] = {}
    failures: list[tuple[str, int, str]] = []
    if args.parallel > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.parallel) as pool:
            futs = {pool.submit(_run_one, raw, p, s): (p, s) for p, s in jobs}
            for fut in concurrent.futures.as_completed(futs):
                p, s = futs[fut]
                try:
                    reports[(p, s)] = fut.result()
                except Exception as exc:
                    failures.append((p, s, str(exc)))
    else:
        for p, s in jobs:
            try:
                reports[(p, s)] = _run_one(raw, p, s)
            except Exception as exc:
                failures.append((p, s, str(exc)))

    ordered = [reports[k] for k in sorted(reports)]
    for r in ordered:
        tmp = outdir / f".report_{r.policy}_{r.seed}.json.tmp"
        tmp.write_text(r.to_json() + "\n")
        tmp.replace(outdir / f"report_{r.policy}_{r.seed}.json")
    if ordered:
        runs_path, agg_path = write_csvs(ordered, outdir)
        figures = [] if args.no_figures else render_figures(ordered, outdir)
        print(f"wrote {len(ordered)} reports, {runs_path.name}, {agg_path.name}"
              + (f", {len(figures)} figures" if figures else ""))
    if failures:
        for p, s, msg in sorted(failures):
            print(f"FAILED policy={p} seed={s}: {msg}", file=sys.stderr)
        return 1
    return 0


def _read_labels(path: str) -> list:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise SystemExit(f"label file not found: {path}")
    text = text.strip()
    if not text:
        raise SystemExit(f"label file is empty: {path}")
    if text.startswith("["):
        return json.loads(text)
    return [line.strip() for line in text.splitlines() if line.strip()]


def cmd_eval(args) -> int:
    a = _read_labels(args.file_a)
    b = _read_labels(args.file_b)
    if len(a) != len(b):
        print(f"length mismatch: {len(a)} vs {len(b)}", file=sys.stderr)
        return 2
    pa, pb = Partition.canonical(a), Partition.canonical(b)
    print(json.dumps({
        "ari": adjusted_rand_index(pa, pb),
        "nmi": normalized_mutual_information(pa, pb),
    }, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semgroup",
        description="Adaptive semantic grouping experiments on synthetic task streams")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate a scenario stream file")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed-override", type=int, default=None)
    p_gen.set_defaults(func=cmd_generate)

    p_run = sub.add_parser("run", help="run policy comparisons")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed-override", type=int, default=None)
    p_run.add_argument("--policy", choices=list(POLICIES), default=None)
    p_run.add_argument("--parallel", type=int, default=1, metavar="N")
    p_run.add_argument("--no-figures", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="ARI/NMI between two label files")
    p_eval.add_argument("file_a")
    p_eval.add_argument("file_b")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
