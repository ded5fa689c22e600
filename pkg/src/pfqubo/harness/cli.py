"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pfqubo.errors import BudgetExceeded, ConfigError, DataError
from pfqubo.harness import pipeline, report, synth
from pfqubo.harness.config import PipelineConfig, load_config
from pfqubo.harness.plotdata import FIGURES, PLOT_HEADER, emit_plot_data

log = logging.getLogger("pfqubo")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_BUDGET = 0, 2, 3, 4


def _config(args) -> PipelineConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    cfg.check_inputs()
    return cfg


def _emit(record: pipeline.RunRecord, out: Path, stem: str, header, rows, title: str) -> None:
    report.write_csv(out / f"{stem}.csv", header, rows)
    (out / f"{stem}.txt").write_text(report.text_table(header, rows, title))
    report.write_json(out / f"{stem}.json", record.to_dict())
    for w in record.warnings:
        log.warning(w)
    log.info("wrote %s", out / f"{stem}.csv")


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    rec = pipeline.run_pipeline(cfg)
    _emit(rec, cfg.out, "pipeline", pipeline.SCALING_HEADER, rec.rows, "pipeline")
    return EXIT_OK


def cmd_scaling(args) -> int:
    cfg = _config(args)
    rec = pipeline.scaling_table(cfg)
    _emit(rec, cfg.out, "scaling", pipeline.SCALING_HEADER, rec.rows, "scaling")
    return EXIT_OK


def cmd_ablation(args) -> int:
    cfg = _config(args)
    rec = pipeline.ablation_table(cfg)
    report.write_csv(cfg.out / "ablation_slates.csv", pipeline.ABLATION_HEADER, rec.details)
    _emit(rec, cfg.out, "ablation", pipeline.ABLATION_SUMMARY_HEADER, rec.rows, "ablation")
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = _config(args)
    rec = pipeline.backtest(cfg)
    _emit(rec, cfg.out, "backtest", pipeline.BACKTEST_HEADER, rec.rows, "backtest")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    records = []
    for p in args.records:
        try:
            records.append(json.loads(Path(p).read_text()))
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read run record {p}: {exc}") from exc
    rows = emit_plot_data(records, args.figure)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / f"{args.figure}.csv", PLOT_HEADER, rows)
    return EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.out or "fixtures")
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    synth.write_ff49_csv(synth.equity_panel(49, args.days, seed), out / "synthetic_49_industry_daily.csv")
    synth.write_football_csv(synth.betting_matches(args.weeks, seed=seed), out / "synthetic_football.csv")
    log.info("wrote fixtures to %s", out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfqubo", description="Portfolio QUBO experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="single seed (overrides the config)")
    common.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, text in (
        ("pipeline", cmd_pipeline, "run the sampling pipeline"),
        ("scaling", cmd_scaling, "scaling table CSV"),
        ("ablation", cmd_ablation, "projector ablation on betting slates"),
        ("backtest", cmd_backtest, "rolling out-of-sample backtest"),
    ):
        sub.add_parser(name, parents=[common], help=text).set_defaults(func=fn)
    p = sub.add_parser("plotdata", parents=[common], help="tidy figure data from run records")
    p.add_argument("--figure", required=True, help=f"one of {', '.join(FIGURES)}")
    p.add_argument("records", nargs="*", help="run record JSON files")
    p.set_defaults(func=cmd_plotdata)
    p = sub.add_parser("synth", parents=[common], help="write synthetic data fixtures")
    p.add_argument("--days", type=int, default=1000)
    p.add_argument("--weeks", type=int, default=30)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except BudgetExceeded as exc:
        log.error("budget exceeded: %s", exc)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
