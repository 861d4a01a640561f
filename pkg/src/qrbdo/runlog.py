"""Run artifacts: result JSON and CSV logs, written deterministically.

CSV files use a comma separator, a header row and floats at 17
significant digits so that a run can be replayed bit for bit.  Nothing
time-dependent is written.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

RESULT_JSON = "result.json"
RUN_CSV = "run.csv"
QUANTILES_CSV = "quantiles.csv"
DOE_CSV = "doe.csv"
ENRICHMENT_CSV = "enrichment.csv"


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(obj, path):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_run(result, problem, out_dir):
    """Write result.json, run.csv, quantiles.csv, doe.csv and enrichment.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(result.summary(), out / RESULT_JSON)

    dnames = [v.name for v in problem.model.design]
    cnames = [c.name for c in problem.constraints]
    header = ["iter", *dnames, "cost", "feasible", "accepted", "enriched", "calls",
              "step_size", "eta_bar_q"]
    for c in cnames:
        header += [f"q_{c}", f"q_lo_{c}", f"q_hi_{c}", f"eta_q_{c}"]
    rows, qrows = [], []
    for h in result.history:
        r = [h["iter"], *h["d"], h["cost"], h["feasible"], h["accepted"], h["enriched"],
             h["calls"], h["step_size"], h["eta_bar_q"]]
        for l, c in enumerate(cnames):
            r += [h["q"][l], h["q_lo"][l], h["q_hi"][l], h["eta_q"][l]]
            qrows.append([h["iter"], c, h["q"][l], h["q_lo"][l], h["q_hi"][l], h["eta_q"][l],
                          h["eta_bar_q"]])
        rows.append(r)
    write_csv(out / RUN_CSV, header, rows)
    write_csv(out / QUANTILES_CSV, ["iter", "constraint", "q", "q_lo", "q_hi", "eta_q", "eta_bar_q"],
              qrows)

    names = list(problem.model.names)
    doe = result.doe_final[0]  # inputs are shared by all models
    phys = result.space.from_unit(doe.x)
    drows = []
    for i in range(doe.n):
        drows.append([i, result.doe_stages[i], *phys[i], *[d.y[i] for d in result.doe_final]])
    write_csv(out / DOE_CSV, ["index", "stage", *names, *cnames], drows)

    erows = []
    for lg in list(result.global_stage.logs) + list(result.local_logs):
        for p, y in zip(lg.added_points, lg.responses):
            erows.append([lg.stage, lg.iteration, *p, *y, lg.u_min, lg.eta])
    write_csv(out / ENRICHMENT_CSV, ["stage", "iteration", *names, *cnames, "u_min", "eta"], erows)
    return out
