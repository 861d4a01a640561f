"""Command-line front end.

``qrbdo run`` solves a benchmark or a user-defined problem and writes the
run artifacts; ``qrbdo report`` turns existing run artifacts into
plot-ready CSV files without recomputing anything.

Exit codes: 0 when every replication ends feasible, 2 when at least one
does not, 1 on any error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import importlib
import importlib.util
import json
import logging
import os
import statistics
import sys
from pathlib import Path

from . import benchmarks, runlog
from .distributions import DesignVariable, ProbabilisticModel, make_marginal
from .errors import ConfigurationError, QrbdoError
from .optimizer import RbdoConfig, run_qrbdo
from .problem import Constraint, Problem, SoftConstraint

log = logging.getLogger("qrbdo")

THREADS_ENV = "QRBDO_THREADS"
SUMMARY_JSON = "summary.json"
REPLICATIONS_CSV = "replications.csv"
RUN_CONFIG_JSON = "run_config.json"


# ------------------------------------------------------------------ config


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ConfigurationError(f"missing key '{where}{key}'")
    return d[key]


def resolve_callable(ref, base_dir=None):
    """Import ``"package.module:attr"`` or ``"path/to/file.py:attr"``."""
    if not isinstance(ref, str) or ":" not in ref:
        raise ConfigurationError(f"callable reference {ref!r} must look like 'module:function'")
    mod_name, attr = ref.rsplit(":", 1)
    if mod_name.endswith(".py"):
        path = Path(mod_name)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        spec = importlib.util.spec_from_file_location(path.stem, path)
        if spec is None or not path.exists():
            raise ConfigurationError(f"cannot load module file {str(path)!r}")
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
    else:
        try:
            module = importlib.import_module(mod_name)
        except ImportError as exc:
            raise ConfigurationError(f"cannot import {mod_name!r}: {exc}") from exc
    try:
        return getattr(module, attr)
    except AttributeError:
        raise ConfigurationError(f"{mod_name!r} has no attribute {attr!r}") from None


def _design_variable(spec, i):
    where = f"problem.design[{i}]."
    return DesignVariable(_require(spec, "name", where), float(_require(spec, "lower", where)),
                          float(_require(spec, "upper", where)), spec.get("kind", "deterministic"),
                          spec.get("cov"), spec.get("std"))


def _env_marginal(spec, i):
    where = f"problem.env[{i}]."
    kind = _require(spec, "kind", where)
    return make_marginal(kind, spec.get("mean"), spec.get("cov"), std=spec.get("std"),
                         lower=spec.get("lower"), upper=spec.get("upper"))


def problem_from_spec(spec, base_dir=None):
    """Build a :class:`Problem` from a benchmark name or a JSON mapping."""
    if isinstance(spec, str):
        return benchmarks.get_problem(spec)
    if not isinstance(spec, dict):
        raise ConfigurationError("'problem' must be a benchmark name or a mapping")
    if "factory" in spec:
        problem = resolve_callable(spec["factory"], base_dir)()
        if not isinstance(problem, Problem):
            raise ConfigurationError("problem factory must return a qrbdo Problem")
        return problem
    design = [_design_variable(v, i) for i, v in enumerate(_require(spec, "design", "problem."))]
    env_specs = spec.get("env", [])
    env = [_env_marginal(v, i) for i, v in enumerate(env_specs)]
    names = [_require(v, "name", f"problem.env[{i}].") for i, v in enumerate(env_specs)]
    pm = ProbabilisticModel(tuple(design), tuple(env), tuple(names))
    cons = []
    for i, c in enumerate(_require(spec, "constraints", "problem.")):
        where = f"problem.constraints[{i}]."
        cons.append(Constraint(c.get("name", f"c{i + 1}"),
                               resolve_callable(_require(c, "response", where), base_dir),
                               float(_require(c, "threshold", where)),
                               float(_require(c, "alpha", where))))
    soft = [SoftConstraint(s.get("name", f"s{i + 1}"),
                           resolve_callable(_require(s, "fn", f"problem.soft[{i}]."), base_dir))
            for i, s in enumerate(spec.get("soft", []))]
    return Problem(_require(spec, "name", "problem."), pm,
                   resolve_callable(_require(spec, "cost", "problem."), base_dir),
                   tuple(cons), tuple(soft), spec.get("d0"))


def build_settings(problem_spec, settings):
    base = dict(benchmarks.CONFIGS.get(problem_spec, {})) if isinstance(problem_spec, str) else {}
    base.update(settings or {})
    return RbdoConfig.from_dict(base)


def load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {str(path)!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {str(path)!r} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a JSON object")
    unknown = set(data) - {"problem", "seed", "replications", "out", "settings"}
    if unknown:
        raise ConfigurationError(f"unknown top-level key(s) {sorted(unknown)}")
    return data


# -------------------------------------------------------------------- run


def _run_one(problem_spec, base_dir, settings, seed, out_dir):
    problem = problem_from_spec(problem_spec, base_dir)
    cfg = build_settings(problem_spec, settings)
    result = run_qrbdo(problem, cfg, seed)
    runlog.write_run(result, problem, out_dir)
    # replay with: qrbdo run --config <out_dir>/run_config.json
    runlog.dump_json({"problem": problem_spec, "seed": seed, "settings": cfg.to_dict()},
                     Path(out_dir) / RUN_CONFIG_JSON)
    return {"seed": seed, "cost": result.cost, "calls": result.true_model_calls,
            "feasible": result.feasible, "d_star": result.d_star.tolist(), "dir": str(out_dir)}


def _stats(values):
    return {"min": min(values), "median": statistics.median(values), "max": max(values),
            "mean": statistics.fmean(values)}


def cmd_run(args):
    data = load_config(args.config) if args.config else {}
    base_dir = Path(args.config).parent if args.config else None
    problem_spec = args.problem or data.get("problem")
    if problem_spec is None:
        raise ConfigurationError("missing key 'problem' (use --problem or a config file)")
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))
    reps = args.replications if args.replications is not None else int(data.get("replications", 1))
    if reps < 1:
        raise ConfigurationError("replications must be >= 1")
    out = Path(args.out or data.get("out") or "qrbdo_runs")
    settings = data.get("settings", {})
    # validate everything before any model call
    problem_from_spec(problem_spec, base_dir)
    build_settings(problem_spec, settings)

    dirs = [out] if reps == 1 else [out / f"rep_{r:03d}" for r in range(reps)]
    jobs = [(problem_spec, base_dir, settings, seed + r, dirs[r]) for r in range(reps)]
    workers = max(1, int(os.environ.get(THREADS_ENV, "1") or 1))
    if workers > 1 and reps > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_run_one, *zip(*jobs)))
    else:
        rows = [_run_one(*job) for job in jobs]

    calls = [r["calls"] for r in rows]
    costs = [r["cost"] for r in rows]
    summary = {"problem": problem_spec if isinstance(problem_spec, str)
               else problem_spec.get("name", "custom"),
               "replications": reps, "seed": seed, "calls": _stats(calls), "cost": _stats(costs),
               "n_feasible": sum(r["feasible"] for r in rows)}
    out.mkdir(parents=True, exist_ok=True)
    if reps > 1:
        runlog.dump_json(summary, out / SUMMARY_JSON)
        runlog.write_csv(out / REPLICATIONS_CSV, ["replication", "seed", "cost", "calls", "feasible"],
                         [[i, r["seed"], r["cost"], r["calls"], r["feasible"]]
                          for i, r in enumerate(rows)])
    print(f"{summary['problem']}: {reps} replication(s), {summary['n_feasible']} feasible")
    print("calls  min {min} median {median} max {max}".format(**summary["calls"]))
    print("cost   min {:.6g} median {:.6g} max {:.6g}".format(
        summary["cost"]["min"], summary["cost"]["median"], summary["cost"]["max"]))
    return 0 if summary["n_feasible"] == reps else 2


# ----------------------------------------------------------------- report


def run_dirs(root):
    root = Path(root)
    if (root / runlog.RESULT_JSON).is_file():
        return [root]
    return sorted(p for p in root.iterdir() if (p / runlog.RESULT_JSON).is_file()) \
        if root.is_dir() else []


def cmd_report(args):
    dirs = run_dirs(args.run_dir)
    if not dirs:
        raise ConfigurationError(f"no run artifacts under {str(args.run_dir)!r}")
    out = Path(args.out) if args.out else Path(args.run_dir) / "report"
    out.mkdir(parents=True, exist_ok=True)
    eta_rows, q_rows, cma_rows, best_rows, rep_rows = [], [], [], [], []
    cma_header = None
    for i, d in enumerate(dirs):
        try:
            result = json.loads((d / runlog.RESULT_JSON).read_text())
            quant = runlog.read_csv(d / runlog.QUANTILES_CSV)
            run = runlog.read_csv(d / runlog.RUN_CSV)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"unreadable run artifacts in {str(d)!r}: {exc}") from None
        try:
            for r in quant:
                eta_rows.append([i, r["iter"], r["constraint"], r["eta_q"], r["eta_bar_q"]])
                q_rows.append([i, r["iter"], r["constraint"], r["q"], r["q_lo"], r["q_hi"]])
            keys = list(run[0].keys()) if run else []
            dkeys = keys[1:keys.index("cost")]
            if cma_header is None:
                cma_header = ["replication", "iter", *dkeys, "cost", "feasible", "accepted",
                              "enriched"]
            best = None
            for r in run:
                cma_rows.append([i, r["iter"], *[r[k] for k in dkeys], r["cost"], r["feasible"],
                                 r["accepted"], r["enriched"]])
                if r["accepted"] == "1" and r["feasible"] == "1":
                    best = r["cost"]
                best_rows.append([i, r["iter"], best if best is not None else "nan"])
            rep_rows.append([i, result["seed"], result["cost"], result["true_model_calls"],
                             result["feasible"], *result["d_star"]])
        except (KeyError, ValueError, IndexError) as exc:
            raise ConfigurationError(f"corrupt run log in {str(d)!r}: {exc}") from None
    runlog.write_csv(out / "eta_trace.csv",
                     ["replication", "iter", "constraint", "eta_q", "eta_bar_q"], eta_rows)
    runlog.write_csv(out / "quantile_trace.csv",
                     ["replication", "iter", "constraint", "q", "q_lo", "q_hi"], q_rows)
    runlog.write_csv(out / "cma_points.csv", cma_header or ["replication", "iter"], cma_rows)
    runlog.write_csv(out / "best_cost_trace.csv", ["replication", "iter", "best_cost"], best_rows)
    n_d = max((len(r) - 5 for r in rep_rows), default=0)
    runlog.write_csv(out / "replications.csv",
                     ["replication", "seed", "cost", "calls", "feasible",
                      *[f"d{j + 1}" for j in range(n_d)]], rep_rows)
    print(f"report for {len(dirs)} run(s) written to {out}")
    return 0


# ------------------------------------------------------------------- main


def build_parser():
    parser = argparse.ArgumentParser(prog="qrbdo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="solve a benchmark or a configured problem")
    run.add_argument("--problem", help=f"benchmark name ({', '.join(sorted(benchmarks.PROBLEMS))})")
    run.add_argument("--config", help="JSON configuration file (see docs/config.md)")
    run.add_argument("--seed", type=int)
    run.add_argument("--replications", type=int)
    run.add_argument("--out", help="output directory")
    run.set_defaults(func=cmd_run)
    rep = sub.add_parser("report", help="plot-ready CSV files from run artifacts")
    rep.add_argument("run_dir")
    rep.add_argument("--out", help="report directory (default RUN_DIR/report)")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QrbdoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
