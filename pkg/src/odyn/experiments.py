"""Config-level entry points shared by the CLI and the sweep runner."""
import json

import numpy as np

from .config import ODE_REGIMES
from .errors import ConfigError
from .ode import IntegratorConfig, Regime, compare, integrate
from .overlaps import (
    OverlapState,
    ReducedMFState,
    XiModel,
    matrix_from_json,
    matrix_to_json,
    reduce_to_mf,
)
from .sgd import run_sgd, setup_run


def load_state(path):
    """Read an overlap-state JSON file: ``{Q, M, P}`` or ``{M, q, P}``."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read state file {path}: {exc}") from exc
    if "Q" in obj:
        return OverlapState.from_dict(obj)
    if "q" in obj and "P" in obj:
        return ReducedMFState.from_dict(obj), matrix_from_json(obj["P"])
    raise ConfigError(f"{path}: state file needs keys Q, M, P or M, q, P")


def save_state(state, path, P=None):
    obj = state.to_dict()
    if isinstance(state, ReducedMFState):
        obj["P"] = matrix_to_json(P)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)


def initial_state(config):
    """``Omega(0)``: overlaps of the seeded student/teacher draw, or the configured state file."""
    if config.init.state_file:
        return load_state(config.init.state_file)
    return setup_run(config, mode="overlap").state


def regime_of(config, tag=None):
    tag = tag or config.regime
    if tag not in ODE_REGIMES:
        raise ConfigError(f"{tag!r} is not an ODE regime")
    return Regime(tag, gamma=config.gamma, p=config.p, d=config.d, delta=config.delta,
                  mf_noise=config.mf_noise)


def integrator_of(config):
    return IntegratorConfig(config.method, config.dt, config.T, config.record_every)


def run_integration(config, state0=None, tag=None, snapshots=True):
    regime = regime_of(config, tag)
    start = initial_state(config) if state0 is None else state0
    act, act_t = config.act(), config.act_teacher()
    strat = config.eval_strategy()
    P = None
    if regime.reduced:
        if isinstance(start, tuple):
            start, P = start
        elif isinstance(start, OverlapState):
            P = np.array(start.P)
            start = reduce_to_mf(start)
        else:
            raise ConfigError("reduced regimes need a full state or a (M, q, P) state file")
    elif not isinstance(start, OverlapState):
        raise ConfigError(f"regime {regime.tag} needs a full overlap state (Q, M, P)")
    xi = None
    if regime.tag == "mf":
        xi = XiModel.for_dims(config.d, config.k, strategy=config.xi.strategy, order=config.xi.order,
                              n_samples=config.xi.n_samples, seed=config.xi.seed)
    traj = integrate(start, regime, integrator_of(config), act, act_t, config.delta, strat, xi, P,
                     snapshots=snapshots)
    traj.meta["config"] = config.to_dict()
    traj.meta["seed"] = config.seed
    return traj


def run_simulation(config, state0=None, snapshots=True, record_times=None):
    if state0 is None and config.init.state_file:
        state0 = load_state(config.init.state_file)
        if not isinstance(state0, OverlapState):
            raise ConfigError("simulations start from a full overlap state (Q, M, P)")
    return run_sgd(config, init_state=state0, snapshots=snapshots, record_times=record_times)


def run_config(config, snapshots=True):
    if config.regime == "simulate":
        return run_simulation(config, snapshots=snapshots)
    return run_integration(config, snapshots=snapshots)


def regime_label(config):
    return f"sim-{config.mode}" if config.regime == "simulate" else config.regime


def plateau_level(traj, fraction=0.2):
    """Mean risk over the final ``fraction`` of the time horizon."""
    t0 = traj.times[-1] - fraction * (traj.times[-1] - traj.times[0])
    return float(np.mean(traj.risks[traj.times >= t0]))


def sup_risk_gap(config, reference="ss"):
    """Sup risk gap between ``config``'s run and the reference ODE from the same ``Omega(0)``."""
    start = initial_state(config)
    if isinstance(start, tuple):
        raise ConfigError("sup_risk_gap needs a full initial state")
    if config.regime == "simulate":
        # without a state file the seeded draw reproduces ``start`` exactly
        run = run_simulation(config, start if config.init.state_file else None, snapshots=False)
    else:
        run = run_integration(config, start, snapshots=False)
    ref = run_integration(config, start, tag=reference, snapshots=False)
    return compare(run, ref).sup_risk_gap


def metric_value(config, metric, reference="ss", plateau_fraction=0.2):
    if metric == "terminal_risk":
        return run_config(config, snapshots=False).terminal_risk
    if metric == "plateau_level":
        return plateau_level(run_config(config, snapshots=False), plateau_fraction)
    if metric == "sup_risk_gap":
        return sup_risk_gap(config, reference)
    raise ConfigError(f"unknown metric {metric!r}")
