"""Command-line entry point: run a preset or config file and write traces plus a summary."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .experiments import (PRESETS, ConfigError, ExperimentConfig, UnknownPresetError, load_config, preset,
                          report, run_config, write_outputs)

EXIT_OK = 0
EXIT_INVALID = 3
EXIT_UNKNOWN_PRESET = 4
EXIT_UNWRITABLE = 5


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="laco-sim", description="Latency-aware slice allocation experiments.")
    p.add_argument("--preset", help=f"one of: {', '.join(sorted(PRESETS))}")
    p.add_argument("--config", type=Path, help="INI file; overrides the preset")
    p.add_argument("--policy", help="comma-separated policies (laco, ucb, ts, rr, oracle)")
    p.add_argument("--reps", type=int, help="replications per policy and variant")
    p.add_argument("--seed", type=int, help="seed base; replication r uses seed + r")
    p.add_argument("--horizon", type=int, help="decision epochs per run")
    p.add_argument("--out", type=Path, default=Path("."), help="existing output directory")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--serve-late", action="store_true", help="serve packets up to twice their tolerance")
    p.add_argument("--quiet", action="store_true", help="do not print the report")
    return p


def resolve_config(args) -> ExperimentConfig:
    """Defaults, then preset, then config file, then explicit flags."""
    base = preset(args.preset) if args.preset else None
    if args.config is not None:
        try:
            cfg = load_config(args.config, base)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    elif base is not None:
        cfg = base
    else:
        raise ConfigError("give --preset and/or --config")
    system = cfg.system
    if args.horizon is not None:
        system = replace(system, horizon=args.horizon)
    if args.serve_late:
        system = replace(system, serve_late=True)
    return ExperimentConfig(
        cfg.name, system, cfg.slices,
        tuple(p.strip() for p in args.policy.split(",") if p.strip()) if args.policy else cfg.policies,
        args.reps if args.reps is not None else cfg.reps,
        args.seed if args.seed is not None else cfg.seed_base,
        cfg.learner, cfg.sweeps, cfg.oracle_epochs, cfg.chunk_fraction, cfg.learner_overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
    except UnknownPresetError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_UNKNOWN_PRESET
    except (ConfigError, ValueError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID

    out = args.out
    if not out.is_dir() or not os.access(out, os.W_OK):
        print(f"error: output directory {out} is missing or not writable", file=sys.stderr)
        return EXIT_UNWRITABLE

    summary, files = run_config(cfg, workers=args.workers)
    try:
        write_outputs(out, summary, files)
    except OSError as exc:
        print(f"error: could not write outputs: {exc}", file=sys.stderr)
        return EXIT_UNWRITABLE
    if not args.quiet:
        print(report(summary))
        print(f"wrote {len(files)} trace file(s), summary.json and report.txt to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
