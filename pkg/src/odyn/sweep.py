"""Grid sweeps with a process pool and per-point result files (resumable)."""
import csv
import itertools
import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor

from .config import ExperimentConfig
from .experiments import metric_value
from .trajectory import fmt


def grid_points(spec):
    names = list(spec.axes)
    for combo in itertools.product(*(spec.axes[n] for n in names)):
        yield dict(zip(names, combo))


def point_key(point):
    return "_".join(f"{k}{v}" for k, v in point.items()) or "base"


def _run_point(args):
    base_dict, point, metric, reference, plateau_fraction = args
    cfg = ExperimentConfig.from_dict(base_dict).replace(**point)
    try:
        cfg.validate()
        val = metric_value(cfg, metric, reference, plateau_fraction)
        return {"point": point, "metric": metric, "value": float(val), "status": "ok"}
    except Exception as exc:  # recorded per point; the sweep continues
        return {"point": point, "metric": metric, "value": None, "status": "failed",
                "error": f"{type(exc).__name__}: {exc}", "trace": traceback.format_exc(limit=3)}


def run_sweep(spec, out_dir, workers=None):
    """Evaluate every grid point; returns the list of per-point results.

    Points whose result file already reports success are not recomputed.
    """
    pts_dir = os.path.join(out_dir, "points")
    os.makedirs(pts_dir, exist_ok=True)
    results, todo = {}, []
    for point in grid_points(spec):
        key = point_key(point)
        path = os.path.join(pts_dir, key + ".json")
        if os.path.exists(path):
            with open(path) as fh:
                old = json.load(fh)
            if old.get("status") == "ok" and old.get("metric") == spec.metric:
                results[key] = old
                continue
        todo.append((key, point))
    args = [(spec.base.to_dict(), p, spec.metric, spec.reference_regime, spec.plateau_fraction)
            for _, p in todo]
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(args) <= 1:
        outs = [_run_point(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_point, args))
    for (key, _), res in zip(todo, outs):
        with open(os.path.join(pts_dir, key + ".json"), "w") as fh:
            json.dump(res, fh, indent=1)
        results[key] = res
    ordered = [results[point_key(p)] for p in grid_points(spec)]
    write_table(ordered, list(spec.axes), spec.metric, os.path.join(out_dir, "sweep.csv"))
    return ordered


def write_table(results, axes, metric, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(axes) + [metric, "status"])
        for res in results:
            val = "" if res["value"] is None else fmt(res["value"])
            w.writerow([res["point"][a] for a in axes] + [val, res["status"]])
