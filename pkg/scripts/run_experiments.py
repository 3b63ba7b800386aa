#!/usr/bin/env python3
"""Run several presets, one output directory each.

    python3 scripts/run_experiments.py --out results --reps 10
    python3 scripts/run_experiments.py counterphase chunk_size --out results --workers 4
"""
import argparse
import sys
import time
from pathlib import Path

from laco.cli import main as cli_main
from laco.experiments import PRESETS


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("presets", nargs="*", default=sorted(PRESETS), help="presets to run (default: all)")
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)

    status = 0
    for name in args.presets:
        out = args.out / name
        out.mkdir(parents=True, exist_ok=True)
        flags = ["--preset", name, "--out", str(out), "--workers", str(args.workers)]
        for flag, value in (("--reps", args.reps), ("--seed", args.seed), ("--horizon", args.horizon)):
            if value is not None:
                flags += [flag, str(value)]
        t0 = time.perf_counter()
        code = cli_main(flags)
        print(f"[{name}] exit {code} in {time.perf_counter() - t0:.0f}s -> {out}", flush=True)
        status = status or code
    return status


if __name__ == "__main__":
    sys.exit(main())
