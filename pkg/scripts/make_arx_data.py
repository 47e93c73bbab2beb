#!/usr/bin/env python3
"""Write a y,u CSV from a known ARX model, for trying out ``lqrl arx``.

The default model is y_t = 1.5 y_{t-1} - 0.7 y_{t-2} + u_{t-1} + 0.5 u_{t-2} + e_t,
i.e. theta = [-1.5, 0.7, 1.0, 0.5] in (a1, a2, b1, b2) order.
"""
import argparse

import numpy as np

from lqrl.sysid import ArxModel, simulate_arx


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out")
    parser.add_argument("--samples", type=int, default=500)
    parser.add_argument("--noise", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    u = rng.standard_normal(args.samples)
    y = simulate_arx(ArxModel(2, 2, [-1.5, 0.7, 1.0, 0.5]), u, noise=args.noise * rng.standard_normal(args.samples))
    np.savetxt(args.out, np.c_[y, u], delimiter=",", header="y,u", comments="", fmt="%.17g")


if __name__ == "__main__":
    main()
