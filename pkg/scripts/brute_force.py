"""Surrogate-free reference solutions (true models inside the quantiles).

    python scripts/brute_force.py choi --n 1000000
    python scripts/brute_force.py bracket --n 100000

Prints the optimum, its cost, the true quantiles and Monte Carlo failure
probabilities on an independent sample.
"""

import argparse
import time

import numpy as np

from qrbdo.benchmarks import PROBLEMS, brute_force, failure_probabilities, get_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("problem", choices=sorted(PROBLEMS))
    ap.add_argument("--n", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--start", type=float, nargs="*")
    args = ap.parse_args()

    p = get_problem(args.problem)
    t0 = time.perf_counter()
    d, cost, q = brute_force(p, args.n, args.seed, args.start)
    pf = failure_probabilities(p, d, args.n, np.random.default_rng(args.seed + 1))
    print(f"{p.name}: d* {d.round(4).tolist()}  cost {cost:.6g}  ({time.perf_counter() - t0:.1f} s)")
    for c, qk, pk in zip(p.constraints, q, pf):
        print(f"  {c.name:10s} quantile {qk:+.4g} (threshold {c.threshold:g})  Pf {pk:.3e} "
              f"(target {1 - c.alpha:.3e})")
    if p.brute_force is not None:
        print(f"  published brute force: {p.brute_force.d_star} cost {p.brute_force.cost}")


if __name__ == "__main__":
    main()
