#!/usr/bin/env python3
"""Run one config over several seeds and print the final summary per seed.

    python scripts/run_seeds.py configs/pg-lq.json --seeds 0 1 2 --out runs
"""
import argparse
import json
from pathlib import Path

from lqrl.harness import load_config, run_experiment, write_results


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--budget", type=int)
    parser.add_argument("--out", help="write runs/<experiment>-seed<k>/ under this directory")
    args = parser.parse_args()

    base = load_config(args.config)
    for seed in args.seeds:
        cfg = base.__class__(**{**base.to_dict(), "seed": seed,
                                "budget": base.budget if args.budget is None else args.budget})
        record = run_experiment(cfg)
        if args.out:
            write_results(record, Path(args.out) / f"{cfg.experiment}-seed{seed}", cfg)
        keys = ("solved_episode", "initial_gain_gap", "final_gain_gap")
        final = {k: record.summary[k] for k in keys if k in record.summary}
        print(f"seed {seed}: {json.dumps(final)} ({record.duration:.1f}s)")


if __name__ == "__main__":
    main()
