#!/usr/bin/env python3
"""Regenerate the simulation tables for one or more scenarios.

Example:
    python scripts/run_tables.py S1 S2 --reps 300 --workers 4 --out results/
"""

import argparse
import sys
import time

from tvpa.experiments import SCENARIOS, run_replications, scenario_configs, write_results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("scenarios", nargs="*", default=list(SCENARIOS), help=f"any of {', '.join(SCENARIOS)}")
    ap.add_argument("--reps", type=int, help="replications per cell (default: the study's own count)")
    ap.add_argument("--T", type=int, help="override the horizon")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args(argv)

    summaries = []
    for sid in args.scenarios:
        for cfg in scenario_configs(sid, n_reps=args.reps, seed=args.seed, T=args.T):
            start = time.perf_counter()
            s = run_replications(cfg, workers=args.workers)
            print(f"{cfg.describe()}  [{time.perf_counter() - start:.1f}s, {s.n_failed} failed]", file=sys.stderr)
            for name, row in s.rows.items():
                print(f"  {name:40s} {row}")
            summaries.append(s)
    write_results(summaries, args.out, extra={"seed": args.seed, "argv": sys.argv[1:]})
    print(f"wrote {len(summaries)} tables to {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
