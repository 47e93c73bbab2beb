"""Command line entry point.

    lqrl run CONFIG.json [--seed N] [--experiment NAME] [--out DIR] [--budget N]
    lqrl demo mdp [--samples N] [--seed N]
    lqrl arx DATA.csv --n 2 --m 1 [--rls]
"""

import argparse
import csv
import dataclasses
import json
import logging
import sys

import numpy as np

from .harness import EXPERIMENTS, ExperimentConfig, config_from_dict, load_config, run_experiment, write_results
from .sysid import arx_fit_batch, rls_fit

log = logging.getLogger("lqrl")


def _build_parser():
    parser = argparse.ArgumentParser(prog="lqrl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every metric row")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config", help="path to a JSON config")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--experiment", choices=sorted(EXPERIMENTS), help="override the experiment name")
    run.add_argument("--budget", type=int, help="override the episode/iteration budget")
    run.add_argument("--out", help="output directory (default: runs/<experiment>-seed<seed>)")

    demo = sub.add_parser("demo", help="built-in demonstrations")
    demo.add_argument("name", choices=["mdp"])
    demo.add_argument("--samples", type=int, default=10000, help="Monte-Carlo samples per (s, a)")
    demo.add_argument("--seed", type=int, default=0)

    arx = sub.add_parser("arx", help="fit an ARX model to a two-column (y, u) CSV")
    arx.add_argument("data", help="CSV with columns y, u (an optional header row is skipped)")
    arx.add_argument("--n", type=int, default=1, help="output lags")
    arx.add_argument("--m", type=int, default=1, help="input lags")
    arx.add_argument("--rls", action="store_true", help="recursive instead of batch least squares")
    return parser


def read_yu_csv(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns (y, u), got {len(row)}")
            try:
                rows.append([float(row[0]), float(row[1])])
            except ValueError:
                if rows or lineno > 1:
                    raise ValueError(f"{path}:{lineno}: non-numeric value in {row}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows)
    return data[:, 0], data[:, 1]


def _cmd_run(args):
    config = load_config(args.config)
    overrides = {k: v for k, v in (("seed", args.seed), ("experiment", args.experiment),
                                   ("budget", args.budget), ("out_dir", args.out)) if v is not None}
    if overrides:
        config = config_from_dict({**dataclasses.asdict(config), **overrides})
    out = config.out_dir or f"runs/{config.experiment}-seed{config.seed}"
    on_row = (lambda row: log.info("%s", row)) if args.verbose else None
    record = run_experiment(config, on_row=on_row)
    csv_path, json_path = write_results(record, out, config)
    print(f"{config.experiment} seed={config.seed}: {len(record.rows)} rows in {record.duration:.1f}s")
    for key, value in record.summary.items():
        print(f"  {key}: {json.dumps(value)}")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_demo(args):
    config = ExperimentConfig(experiment="mdp-demo", seed=args.seed, budget=args.samples)
    record = run_experiment(config)
    print(f"{'state':>5} {'action':>6} {'E[r]':>8} {'sampled':>9} {'row sum':>8}")
    for row in record.rows:
        print(f"{'s%d' % row['state']:>5} {'a%d' % row['action']:>6} {row['expected_reward']:8.4f} "
              f"{row['sample_mean']:9.4f} {row['row_sum']:8.4f}")
    return 0


def _cmd_arx(args):
    y, u = read_yu_csv(args.data)
    if args.rls:
        theta = rls_fit(y, u, args.n, args.m).theta
    else:
        theta = arx_fit_batch(y, u, args.n, args.m).theta
    names = [f"a{i}" for i in range(1, args.n + 1)] + [f"b{i}" for i in range(1, args.m + 1)]
    for name, value in zip(names, theta):
        print(f"{name} = {value:.17g}")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    handler = {"run": _cmd_run, "demo": _cmd_demo, "arx": _cmd_arx}[args.command]
    try:
        return handler(args)
    except (ValueError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        field = getattr(exc, "field", None)
        where = f" [{field}]" if field else ""
        print(f"lqrl: error{where}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
