"""Command-line entry point.

Subcommands: ingest, render, tokenize, fuse, train, eval, geometry,
run (full pipeline), harness-resolution, report. Exit codes: 0 success,
2 configuration error, 3 data error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ExperimentConfig
from .errors import ConfigError, DataError, DivergenceError
from .metrics import EvalReport
from .pipeline import Pipeline, emit_report, run_experiment, run_resolution_harness

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

# subcommand -> last pipeline stage it materializes
STAGE_COMMANDS = {
    "ingest": "data",
    "render": "embed",
    "tokenize": "ids",
    "fuse": "sequences",
    "train": "models",
    "eval": "report",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sidrec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="experiment config JSON")
        sp.add_argument("--out", default=None, help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, default=None, help="override every seed-bearing field")
        return sp

    for name, stage in STAGE_COMMANDS.items():
        add(name, f"run the pipeline through its '{stage}' stage")
    add("run", "full pipeline: ingest through report")
    add("geometry", "embedding-geometry diagnostics for the two fused modalities")
    hr = add("harness-resolution", "repeat the experiment across rendering resolutions")
    hr.add_argument("--resolutions", type=int, nargs="+", default=[1024, 256])
    rp = sub.add_parser("report", help="re-emit a finished run's report in another format")
    rp.add_argument("--config", required=True)
    rp.add_argument("--out", default=None)
    rp.add_argument("--format", choices=("json", "csv", "table"), default="table")
    return p


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.out:
        cfg.raw["output_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        cfg.raw["rvq"]["seed"] = args.seed
        cfg.raw["projection"]["seed"] = args.seed
        cfg.raw["eval"]["seeds"] = [args.seed]
        if "synthetic" in cfg.raw["data"]:
            cfg.raw["data"]["synthetic"]["seed"] = args.seed
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            cfg = _load_config(args)
            report_path = Path(cfg.raw["output_dir"]) / "report" / "report.json"
            if not report_path.exists():
                raise DataError(f"no finished report at {report_path}; run `sidrec run` first")
            report = EvalReport.from_json(json.loads(report_path.read_text(encoding="utf-8")))
            out = report_path.with_suffix("." + ("txt" if args.format == "table" else args.format))
            emit_report(report, args.format, out)
            print(out)
            return EXIT_OK

        cfg = _load_config(args)
        if args.command == "run":
            report = run_experiment(cfg)
            print(f"report written under {Path(cfg.raw['output_dir']) / 'report'}")
            for metric in ("recall", "ndcg"):
                cells = ", ".join(
                    f"@{k}={report.mean[metric][k]:.4f}±{report.std[metric][k]:.4f}" for k in report.ks
                )
                print(f"  {metric}: {cells}")
            return EXIT_OK
        if args.command == "geometry":
            out = Pipeline(cfg).run_geometry()
            print(out)
            return EXIT_OK
        if args.command == "harness-resolution":
            table = run_resolution_harness(cfg, args.resolutions)
            out = Path(cfg.raw["output_dir"]) / "resolution_table.txt"
            print(out.read_text(encoding="utf-8"))
            print(f"rows: {len(table['rows'])}")
            return EXIT_OK
        stage = STAGE_COMMANDS[args.command]
        pipe = Pipeline(cfg)
        pipe.run_until(stage)
        print(f"stage '{stage}' materialized under {pipe.stage_dir(stage)}")
        return EXIT_OK
    except ConfigError as e:
        _report_error(e)
        return EXIT_CONFIG
    except DivergenceError as e:
        _report_error(e)
        return EXIT_DIVERGENCE
    except DataError as e:
        _report_error(e)
        return EXIT_DATA


def _report_error(e: Exception) -> None:
    stage = getattr(e, "stage", None)
    where = f" [stage {stage}]" if stage else ""
    print(f"error{where}: {e}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
