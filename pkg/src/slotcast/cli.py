#!/usr/bin/env python3
# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================
"""
slotcast <command> [flags]

    analyze   --query-file Q                      complexity report for one query
    synth     --config W --output J               synthetic workload as JSONL
    train     --input J --output-bundle B         fit a bundle (+ B.summary.yml)
    predict   --bundle B --input J --output T     per-record predictions, TSV
    advise    --bundle B --query-file Q [--warn-threshold X]
                                                  exit 2 when the prediction >= X
                                                  (X from warn_threshold if not given)
    evaluate  --bundle B --input J --report-dir D tiered report, three formats

exit codes: 0 ok, 2 advise warning, 64 usage or config, 65 unusable bundle,
74 file errors, 1 anything else.
"""

# ---- dependencies {{{
import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from loguru import logger

from slotcast import evaluator, predictor, synth
from slotcast.errors import (
    BundleVersionMismatch,
    CorruptBundle,
    InvalidConfig,
    IoError,
    SlotcastError,
)
from slotcast.ingest import QueryRecord, ingest, write_jsonl
from slotcast.sql_analyzer import OperatorWeights, analyze
from slotcast.util import load_config, setuplogging

# }}}

EX_WARN = 2
EX_USAGE = 64
EX_DATAERR = 65
EX_IOERR = 74


# --- argument parsing --- {{{
class UsageParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def common(sub):
    sub.add_argument("--config", default=None, help="flat yaml config file")
    sub.add_argument("--logfile", default=None)
    sub.add_argument("--verbose", action="store_true")
    return sub


def getargs(argv=None):
    parser = UsageParser(prog="slotcast", description="pre-execution slot-time prediction")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = common(commands.add_parser("analyze", help="complexity report for one query"))
    sub.add_argument("--query-file", required=True)

    sub = commands.add_parser("synth", help="write a synthetic workload")
    sub.add_argument("--config", required=True, help="workload yaml")
    sub.add_argument("--output", required=True)
    sub.add_argument("--n-queries", type=int, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--logfile", default=None)
    sub.add_argument("--verbose", action="store_true")

    sub = common(commands.add_parser("train", help="fit a model bundle"))
    sub.add_argument("--input", required=True)
    sub.add_argument("--output-bundle", required=True)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--unified", action="store_true", help="single forest, no routing")

    sub = common(commands.add_parser("predict", help="predict every record of a file"))
    sub.add_argument("--bundle", required=True)
    sub.add_argument("--input", required=True)
    sub.add_argument("--output", required=True)

    sub = common(commands.add_parser("advise", help="warn before running a costly query"))
    sub.add_argument("--bundle", required=True)
    sub.add_argument("--query-file", required=True)
    sub.add_argument("--warn-threshold", type=float, default=None, help="defaults to warn_threshold in the config")
    sub.add_argument("--bytes-processed", type=int, default=None)
    sub.add_argument("--bytes-billed", type=int, default=None)
    sub.add_argument("--cache-hit", action="store_true")
    sub.add_argument("--account-count", type=int, default=None)
    sub.add_argument("--resource-count", type=int, default=None)
    sub.add_argument("--project-id", default=None)
    sub.add_argument("--dataset-id", default=None)
    sub.add_argument("--region", default=None)
    sub.add_argument("--asset-type", default=None)

    sub = common(commands.add_parser("evaluate", help="tiered evaluation against baselines"))
    sub.add_argument("--bundle", required=True)
    sub.add_argument("--input", required=True)
    sub.add_argument("--report-dir", required=True)
    sub.add_argument("--baseline-source", choices=("train", "test"), default=None)

    return parser.parse_args(argv)


# }}}


# --- support methods --- {{{
def read_text(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as err:
        raise IoError(f"cannot read {path}: {err}") from err


def write_bytes(path, payload):
    try:
        with open(path, "wb") as f:
            f.write(payload)
    except OSError as err:
        raise IoError(f"cannot write {path}: {err}") from err


def in_sample_metrics(bundle, records):
    """model MetricSet per route on the records it was trained on"""
    results = predictor.predict_many(bundle, records)
    actual = np.array([r.slot_min for r in records])
    predicted = np.array([p.slot_min for p in results])
    routes = np.array([p.route for p in results])
    out = {}
    for route in predictor.ROUTES:
        mask = routes == route
        if mask.any():
            out[route] = evaluator.metrics(actual[mask], predicted[mask]).to_dict()
    return out


def summary_path(bundle_path):
    return Path(f"{bundle_path}.summary.yml")


# }}}


# --- commands --- {{{
def cmd_analyze(args):
    config = load_config(args.config)
    report = analyze(read_text(args.query_file), OperatorWeights.from_config(config))
    for line in report.format_lines():
        print(line)
    return 0


def cmd_synth(args):
    workload = synth.load_workload_config(args.config)
    overrides = {k: v for k, v in (("n_queries", args.n_queries), ("seed", args.seed)) if v is not None}
    if overrides:
        workload = replace(workload, **overrides)
    records = synth.generate(workload)
    n = write_jsonl(records, args.output)
    logger.info(f"wrote {n} synthetic records to {args.output}")
    return 0


def cmd_train(args):
    config = load_config(args.config, seed=args.seed)
    records, stats = ingest(args.input, training=True)
    bundle = predictor.train(records, config, unified=args.unified)
    predictor.save_bundle(bundle, args.output_bundle)
    summary = {
        "ingest": stats.to_dict(),
        "architecture": bundle.metadata["architecture"],
        "route_counts": bundle.metadata["route_counts"],
        "fallback": bundle.metadata["fallback"],
        "forests": sorted(bundle.forests),
        "n_columns": bundle.featurizer.n_columns,
        "created_at": bundle.metadata["created_at"],
        "in_sample": in_sample_metrics(bundle, records),
        "config": bundle.metadata["config"],
    }
    out = summary_path(args.output_bundle)
    write_bytes(out, yaml.safe_dump(summary, sort_keys=True).encode("utf-8"))
    logger.info(f"training summary in {out}")
    return 0


def cmd_predict(args):
    # nothing here reads the config, but a bad file still fails the run
    load_config(args.config)
    bundle = predictor.load_bundle(args.bundle)
    records, _ = ingest(args.input, training=False)
    results = predictor.predict_many(bundle, records)
    frame = pd.DataFrame(
        {
            "id": [r.job_id for r in records],
            "slot_min": [p.slot_min for p in results],
            "route": [p.route for p in results],
            "score": [p.complexity_score for p in results],
        }
    )
    try:
        frame.to_csv(args.output, sep="\t", index=False, float_format="%.6f")
    except OSError as err:
        raise IoError(f"cannot write {args.output}: {err}") from err
    logger.info(f"wrote {len(frame)} predictions to {args.output}")
    return 0


def cmd_advise(args):
    config = load_config(args.config, warn_threshold=args.warn_threshold)
    threshold = config["warn_threshold"]
    bundle = predictor.load_bundle(args.bundle)
    record = QueryRecord(
        query_text=read_text(args.query_file),
        project_id=args.project_id,
        dataset_id=args.dataset_id,
        region=args.region,
        asset_type=args.asset_type,
        cache_hit=args.cache_hit,
        total_bytes_processed=args.bytes_processed,
        total_bytes_billed=args.bytes_billed,
        account_count=args.account_count,
        resource_count=args.resource_count,
    )
    result = predictor.predict(bundle, record)
    print(
        f"predicted {result.slot_min:.6f} slot-min "
        f"(route {result.route}, complexity {result.complexity_score})"
    )
    if advise_status(result.slot_min, threshold):
        print(
            f"WARNING: predicted {result.slot_min:.6f} slot-min is at or above "
            f"the {threshold:g} slot-min threshold"
        )
        return EX_WARN
    return 0


def advise_status(slot_min, threshold):
    return slot_min >= threshold


def cmd_evaluate(args):
    config = load_config(args.config, baseline_source=args.baseline_source)
    if config["baseline_source"] not in ("train", "test"):
        raise InvalidConfig(f"baseline_source must be train or test, got {config['baseline_source']!r}")
    bundle = predictor.load_bundle(args.bundle)
    records, _ = ingest(args.input, training=True)
    results = predictor.predict_many(bundle, records)
    actual = np.array([r.slot_min for r in records], dtype=np.float64)
    predicted = np.array([p.slot_min for p in results], dtype=np.float64)
    if config["baseline_source"] == "train":
        meta = bundle.metadata
        base = evaluator.Baselines(
            mean_value=float(meta["train_slot_min_mean"]),
            median_value=float(meta["train_slot_min_median"]),
            source="train",
        )
    else:
        base = evaluator.baselines(None, actual, mode=config["baseline_source"])
    report = evaluator.tiered_eval(
        actual,
        predicted,
        evaluator.default_tiers(config),
        base,
        ids=[r.job_id for r in records],
    )
    outdir = Path(args.report_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise IoError(f"cannot create {outdir}: {err}") from err
    write_bytes(outdir / "report.txt", evaluator.emit_report(report, "text"))
    write_bytes(outdir / "report.yml", evaluator.emit_report(report, "structured"))
    write_bytes(outdir / "plotdata.csv", evaluator.emit_report(report, "plotdata"))
    evaluator.write_plot_parquet(report, outdir / "plotdata.parquet")
    sys.stdout.write(evaluator.emit_report(report, "text").decode("utf-8"))
    logger.info(f"reports written to {outdir}")
    return 0


COMMANDS = {
    "analyze": cmd_analyze,
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "advise": cmd_advise,
    "evaluate": cmd_evaluate,
}


# }}}


# --- main --- {{{
def main(argv=None):
    args = getargs(argv)
    setuplogging(args.logfile, level="DEBUG" if args.verbose else "INFO")
    try:
        return COMMANDS[args.command](args)
    except (BundleVersionMismatch, CorruptBundle) as err:
        logger.error(f"unusable bundle: {err}")
        return EX_DATAERR
    except InvalidConfig as err:
        logger.error(f"bad configuration: {err}")
        return EX_USAGE
    except OSError as err:
        logger.error(f"file error: {err}")
        return EX_IOERR
    except SlotcastError as err:
        logger.error(f"{args.command} failed: {err}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
# }}}

# done.
