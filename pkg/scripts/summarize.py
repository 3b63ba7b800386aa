#!/usr/bin/env python3
"""Tabulate one or more summary.json files as CSV on stdout.

    python3 scripts/summarize.py results/*/summary.json > table.csv
"""
import csv
import json
import sys
from pathlib import Path

FIELDS = ["experiment", "variant", "policy", "runs", "dropped_bits", "mean_delay_ms", "mean_true_reward",
          "regret_at_n", "convergence_epoch", "bound_checks_passed"]


def rows(path: Path):
    summary = json.loads(path.read_text())
    name = summary["config"]["name"]
    for variant in summary["variants"]:
        for policy, agg in variant["aggregate"].items():
            yield {"experiment": name, "variant": variant["label"], "policy": policy,
                   **{k: agg.get(k, "") for k in FIELDS[3:]}}


def main(argv=None) -> int:
    paths = [Path(p) for p in (argv if argv is not None else sys.argv[1:])]
    if not paths:
        print(__doc__, file=sys.stderr)
        return 2
    w = csv.DictWriter(sys.stdout, FIELDS, lineterminator="\n")
    w.writeheader()
    for path in paths:
        w.writerows(rows(path))
    return 0


if __name__ == "__main__":
    sys.exit(main())
