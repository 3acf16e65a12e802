"""Command-line entry point.

    metafed run --config exp.json [--seed N] [--out DIR]
    metafed compare --config exp.json [--levels zero,high] [--seeds 5] [--out DIR]
    metafed report --from DIR --format csv|json|md [--out PATH]

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.
Set METAFED_MAX_WORKERS to cap per-round client parallelism.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, MetaConfig, STRATEGIES
from .errors import ConfigError, DivergenceError
from .fedcore import run_experiment
from .harness import (HETEROGENEITY_PRESETS, emit_report, render_report, report_from_dir,
                      run_comparison)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4


def load_config(path, seed=None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = ExperimentConfig.from_json(text)
    return cfg.replace(seed=seed) if seed is not None else cfg


def _cmd_run(args) -> int:
    cfg = load_config(args.config, args.seed)
    result = run_experiment(cfg)
    out = Path(args.out) / result.run_id
    result.save(out)
    print(json.dumps({"run_id": result.run_id, "out": str(out), **result.final}, indent=2))
    return EXIT_OK


def comparison_configs(cfg: ExperimentConfig, levels, seeds: int) -> list[ExperimentConfig]:
    meta = cfg.meta or MetaConfig()
    table = HETEROGENEITY_PRESETS["classification" if cfg.family.is_classification
                                  else "regression"]
    out = []
    for level in levels or [None]:
        family = cfg.family
        if level is not None:
            if level not in table:
                raise ConfigError(f"unknown heterogeneity level {level!r}")
            family = dataclasses.replace(family, heterogeneity=table[level])
        for seed in range(cfg.seed, cfg.seed + seeds):
            for strategy in STRATEGIES:
                out.append(cfg.replace(strategy=strategy, family=family, seed=seed,
                                       meta=meta if strategy == "meta-fl" else None))
    return out


def _cmd_compare(args) -> int:
    cfg = load_config(args.config, args.seed)
    levels = [s for s in args.levels.split(",") if s] if args.levels else None
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    report = run_comparison(comparison_configs(cfg, levels, args.seeds), out_dir=args.out)
    path = emit_report(report, args.format, args.out)
    print(render_report(report, "md"))
    print(f"report written to {path}")
    return EXIT_OK


def _cmd_report(args) -> int:
    report = report_from_dir(getattr(args, "from"))
    if args.out:
        print(f"report written to {emit_report(report, args.format, args.out)}")
    else:
        sys.stdout.write(render_report(report, args.format))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metafed",
                                description="Personalized federated learning simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single experiment")
    run.add_argument("--config", required=True, help="JSON experiment config")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", default="runs", help="output directory (default: runs)")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="run centralized / standard-fl / meta-fl side by side")
    cmp_.add_argument("--config", required=True)
    cmp_.add_argument("--seed", type=int)
    cmp_.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    cmp_.add_argument("--levels", help="comma-separated heterogeneity presets, "
                                       "e.g. zero,low,moderate,high")
    cmp_.add_argument("--format", choices=["csv", "json", "md"], default="md")
    cmp_.add_argument("--out", default="comparison")
    cmp_.set_defaults(func=_cmd_compare)

    rep = sub.add_parser("report", help="rebuild a report from persisted runs")
    rep.add_argument("--from", required=True, help="directory written by compare")
    rep.add_argument("--format", choices=["csv", "json", "md"], default="md")
    rep.add_argument("--out", help="file or directory to write (default: stdout)")
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
