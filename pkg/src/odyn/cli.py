"""``odyn`` command-line front end.

Exit codes: 0 success, 2 config error, 3 numerical abort, 4 partial sweep.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from .config import ODE_REGIMES, ExperimentConfig, SweepSpec
from .errors import ConfigError, NumericalAbort, OdynError
from .experiments import regime_label, run_integration, run_simulation
from .histogram import cosine_histograms, write_histograms
from .ode import compare
from .svgplot import line_chart
from .sweep import run_sweep
from .trajectory import Trajectory, output_stem, write_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4
DEFAULT_OUT = "odyn_out"

# flag -> (config key, type)
FIELD_FLAGS = {
    "d": ("d", int), "p": ("p", int), "k": ("k", int),
    "gamma": ("gamma", float), "delta": ("delta", float),
    "act": ("activation", str), "teacher-act": ("teacher_activation", str),
    "mode": ("mode", str), "T": ("T", float), "dt": ("dt", float), "method": ("method", str),
    "record-every": ("record_every", int), "seed": ("seed", int), "tag": ("tag", str),
    "bound-K": ("bound_K", float), "step-budget": ("step_budget", int),
    "sigma0": ("init.sigma0", float), "state-file": ("init.state_file", str),
    "teacher-mode": ("teacher.mode", str), "teacher-scale": ("teacher.scale", float),
    "strategy": ("strategy.mode", str), "order": ("strategy.order", int),
    "mc-n": ("strategy.n", int), "xi-strategy": ("xi.strategy", str), "xi-order": ("xi.order", int),
}


def _add_config_flags(sp, with_regime):
    sp.add_argument("--config", help="YAML experiment config; flags override its values")
    for flag, (key, typ) in FIELD_FLAGS.items():
        sp.add_argument(f"--{flag}", dest=key, type=typ, default=None)
    if with_regime:
        sp.add_argument("--regime", dest="regime", choices=ODE_REGIMES, default=None)
    sp.add_argument("--mf-noise", dest="mf_noise", action="store_true", default=None)
    sp.add_argument("--out", help="output directory (default: $ODYN_OUT_DIR or ./odyn_out)")
    sp.add_argument("--formats", help="comma-separated subset of csv,json")
    sp.add_argument("--no-snapshots", action="store_true", help="omit per-record overlap matrices")
    sp.add_argument("--svg", action="store_true", help="also write a risk-vs-time SVG chart")


def build_parser():
    ap = argparse.ArgumentParser(prog="odyn", description="Two-layer teacher/student SGD dynamics.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run online SGD (weight or overlap space)")
    _add_config_flags(sp, with_regime=False)

    sp = sub.add_parser("integrate", help="integrate an overlap ODE")
    _add_config_flags(sp, with_regime=True)

    sp = sub.add_parser("compare", help="gap report between two trajectory files")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--json", dest="json_out", help="write the report here as JSON")

    sp = sub.add_parser("sweep", help="grid sweep over config axes")
    sp.add_argument("spec", help="YAML sweep spec")
    sp.add_argument("--workers", type=int, default=None, help="worker processes (default: cores)")
    sp.add_argument("--out")

    sp = sub.add_parser("histogram", help="student/teacher cosine histograms")
    _add_config_flags(sp, with_regime=False)
    sp.add_argument("--times", required=True, help="comma-separated times")
    sp.add_argument("--bins", type=int, default=20)
    sp.add_argument("--from", dest="from_file", help="use snapshots of an existing JSON trajectory")
    return ap


def out_dir(args, config=None):
    path = (getattr(args, "out", None) or (config.output.dir if config else None)
            or os.environ.get("ODYN_OUT_DIR") or DEFAULT_OUT)
    os.makedirs(path, exist_ok=True)
    return path


def config_from_args(args, regime):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    for key, _ in FIELD_FLAGS.values():
        val = getattr(args, key, None)
        if val is not None:
            changes[key] = val
    if getattr(args, "regime", None) is not None:
        changes["regime"] = args.regime
    if getattr(args, "mf_noise", None):
        changes["mf_noise"] = True
    if args.formats:
        changes["output.formats"] = [f.strip() for f in args.formats.split(",") if f.strip()]
    if args.no_snapshots:
        changes["output.snapshots"] = False
    cfg = cfg.replace(**changes)
    if regime is not None:
        cfg = cfg.replace(regime=regime)
    elif cfg.regime == "simulate":
        raise ConfigError("integrate needs an ODE regime (--regime)")
    return cfg.validate()


def _emit(traj, cfg, dest, svg):
    label = regime_label(cfg)
    paths = write_trajectory(traj, dest, cfg.tag, cfg.seed, label, cfg.output.formats)
    if svg:
        svg_path = os.path.join(dest, output_stem(cfg.tag, cfg.seed, label) + ".svg")
        line_chart({label: (traj.times, traj.risks)}, svg_path, title=cfg.tag)
        paths.append(svg_path)
    for pth in paths:
        print(f"wrote {pth}")
    return paths


def cmd_simulate(args):
    cfg = config_from_args(args, "simulate")
    dest = out_dir(args, cfg)
    try:
        traj = run_simulation(cfg, snapshots=cfg.output.snapshots)
    except NumericalAbort as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            partial.meta["aborted"] = str(exc)
            _emit(partial, cfg, dest, False)
        raise
    _emit(traj, cfg, dest, args.svg)
    qmax = float(np.max(traj.extra["max_Q_diag"])) if "max_Q_diag" in traj.extra else float("nan")
    print(f"terminal risk {traj.terminal_risk:.6g} at t={traj.times[-1]:.6g}")
    print(f"boundedness: max_i Q_ii = {qmax:.6g} (bound K = {cfg.bound_K:g}); "
          f"steps = {traj.meta.get('steps')}")
    return EXIT_OK


def cmd_integrate(args):
    cfg = config_from_args(args, None)
    dest = out_dir(args, cfg)
    traj = run_integration(cfg, snapshots=cfg.output.snapshots)
    _emit(traj, cfg, dest, args.svg)
    print(f"terminal risk {traj.terminal_risk:.6g} at t={traj.times[-1]:.6g}")
    return EXIT_OK


def _load_traj(path):
    try:
        return Trajectory.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot parse trajectory {path}: {exc}") from exc


def cmd_compare(args):
    a, b = _load_traj(args.a), _load_traj(args.b)
    try:
        rep = compare(a, b)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"sup risk gap      {rep.sup_risk_gap:.6g} (at t={rep.t_sup:.6g})")
    print(f"terminal risk gap {rep.terminal_risk_gap:.6g}")
    if rep.sup_overlap_gap is not None:
        print(f"sup overlap gap   {rep.sup_overlap_gap:.6g} over {len(rep.overlap_columns)} columns")
        print(f"terminal overlap gap {rep.terminal_overlap_gap:.6g}")
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump(rep.to_dict(), fh, indent=1)
        print(f"wrote {args.json_out}")
    return EXIT_OK


def cmd_sweep(args):
    try:
        spec = SweepSpec.load(args.spec)
    except OSError as exc:
        raise ConfigError(f"cannot read sweep spec: {exc}") from exc
    dest = out_dir(args, spec.base)
    results = run_sweep(spec, dest, workers=args.workers)
    failed = [r for r in results if r["status"] != "ok"]
    for r in results:
        val = "failed: " + r.get("error", "") if r["value"] is None else f"{r['value']:.6g}"
        print(f"{r['point']} {spec.metric} = {val}")
    print(f"wrote {os.path.join(dest, 'sweep.csv')}")
    if failed:
        print(f"{len(failed)} of {len(results)} points failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_histogram(args):
    try:
        times = [float(v) for v in args.times.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--times must be comma-separated numbers: {exc}") from exc
    if not times or args.bins < 1:
        raise ConfigError("need at least one time and bins >= 1")
    if args.from_file:
        traj = _load_traj(args.from_file)
        cfg = ExperimentConfig().replace(**{"tag": args.tag or "hist", "seed": 0})
        dest = out_dir(args)
    else:
        cfg = config_from_args(args, "simulate")
        dest = out_dir(args, cfg)
        traj = run_simulation(cfg, snapshots=True, record_times=sorted(times))
    rows = cosine_histograms(traj, times, args.bins)
    path = os.path.join(dest, output_stem(cfg.tag, cfg.seed, "hist") + ".csv")
    write_histograms(rows, path)
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "integrate": cmd_integrate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "histogram": cmd_histogram,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        where = f" at t={exc.t:.6g}" if getattr(exc, "t", None) is not None else ""
        print(f"numerical abort{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OdynError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
