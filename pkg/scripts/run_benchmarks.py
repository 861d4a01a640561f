"""Replicate a benchmark and print per-run results plus a summary.

    python scripts/run_benchmarks.py choi --reps 50 --out runs/choi
    python scripts/run_benchmarks.py bracket --reps 20 --set k_local=3

Each replication uses seed ``--seed + r``; with ``--out`` the standard run
artifacts are written to ``OUT/rep_XXX``.
"""

import argparse
import json
import statistics
import time
from pathlib import Path

from qrbdo import runlog
from qrbdo.benchmarks import PROBLEMS, default_config, get_problem
from qrbdo.optimizer import run_qrbdo


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("problem", choices=sorted(PROBLEMS))
    ap.add_argument("--reps", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                    help="override one run setting, e.g. n_mc=20000")
    args = ap.parse_args()

    overrides = {k: json.loads(v) for k, v in (s.split("=", 1) for s in args.set)}
    problem, cfg = get_problem(args.problem), default_config(args.problem, **overrides)
    costs, calls = [], []
    for r in range(args.reps):
        t0 = time.perf_counter()
        res = run_qrbdo(problem, cfg, args.seed + r)
        if args.out:
            runlog.write_run(res, problem, Path(args.out) / f"rep_{r:03d}")
        costs.append(res.cost)
        calls.append(res.true_model_calls)
        print(f"seed {args.seed + r:4d}  d* {res.d_star.round(4).tolist()}  cost {res.cost:.6g}  "
              f"calls {res.true_model_calls} {res.calls_by_stage}  feasible {res.feasible}  "
              f"stop {res.stop_reason}  {time.perf_counter() - t0:.1f} s", flush=True)
    print(f"cost  median {statistics.median(costs):.6g}  min {min(costs):.6g}  max {max(costs):.6g}")
    print(f"calls median {statistics.median(calls)}  min {min(calls)}  max {max(calls)}  "
          f"mean {statistics.fmean(calls):.1f}")


if __name__ == "__main__":
    main()
