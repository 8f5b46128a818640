"""Grid-refinement study for one problem: errors, rates and a rate summary.

Defaults reproduce the scaled-down ex1 table (reference dx = 0.000625, a few
minutes on one core). ``--full`` uses the reference dx = 0.0002 and the
finer grids, which takes hours.

    python scripts/convergence_study.py --out results/ex1_errors.csv
"""

import argparse
import time

import numpy as np

from aggregation1d import convergence_table, load_problem, preset

SCALED = ([0.02, 0.01, 0.005, 0.0025], 0.000625)
FULL = ([0.02, 0.01, 0.005, 0.004, 0.002, 0.001], 0.0002)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--example", default="ex1")
    ap.add_argument("--config", help="TOML problem file, overrides --example")
    ap.add_argument("--full", action="store_true", help="fine grids against dx = 0.0002")
    ap.add_argument("--dx-list", type=lambda s: [float(x) for x in s.split(",")])
    ap.add_argument("--ref-dx", type=float)
    ap.add_argument("--times", default="0.1,0.25")
    ap.add_argument("--mu", type=float, default=0.1)
    ap.add_argument("--out", help="CSV path")
    args = ap.parse_args()

    spec = load_problem(args.config) if args.config else preset(args.example)
    dx_list, ref = FULL if args.full else SCALED
    dx_list = args.dx_list or dx_list
    ref = args.ref_dx or ref
    times = tuple(float(t) for t in args.times.split(","))

    t0 = time.perf_counter()
    table = convergence_table(spec, dx_list, ref, times, mu=args.mu)
    print(table.to_csv(args.out), end="")
    rates = table.all_rates()
    if rates:
        print(f"# rates: min {min(rates):.3f} max {max(rates):.3f} mean {np.mean(rates):.3f}")
    print(f"# wall time {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
