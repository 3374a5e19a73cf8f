"""One-pass SGD in weight space and the equivalent exact process on overlaps.

Random draws come from three independent child streams (samples, label
noise, leftover chi-square), so the realized path does not depend on how the
steps are chunked between recordings.
"""
import copy
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from ._purepy import overlap_update, weight_update
from .drifts import risk
from .errors import BoundednessViolation, ConfigError, DivergenceError, PSDViolation
from .overlaps import (
    OverlapState,
    TeacherSpec,
    WeightState,
    init_student,
    make_teacher,
    overlaps_of,
    weights_from_overlaps,
)
from .trajectory import Trajectory

MAX_RECORDS = 10_000
_CHUNK_ELEMS = 1 << 21

__all__ = [
    "SgdRun",
    "Streams",
    "overlap_step",
    "overlap_update",
    "run_sgd",
    "setup_run",
    "sgd_step",
    "step_count",
    "weight_update",
]


def seed_streams(seed):
    """Independent seed sequences for teacher, student init and the SGD sample path."""
    return np.random.SeedSequence(seed).spawn(3)


class Streams:
    def __init__(self, seed_seq):
        sx, sz, sc = seed_seq.spawn(3)
        self.x = np.random.default_rng(sx)
        self.z = np.random.default_rng(sz)
        self.chi = np.random.default_rng(sc)

    def samples(self, m, d):
        return self.x.standard_normal((m, d)) / np.sqrt(d), self.z.standard_normal(m)

    def overlap_draws(self, m, n, d):
        G = self.x.standard_normal((m, n))
        chi = self.chi.chisquare(d - n, m) if d > n else np.zeros(m)
        return G, chi, self.z.standard_normal(m)


@dataclass
class SgdRun:
    """State of one SGD chain.

    ``state`` is a :class:`WeightState` in weight mode and an
    :class:`OverlapState` in overlap mode; ``step_index`` counts consumed samples.
    """

    config: object
    Wt: np.ndarray
    P: np.ndarray
    state: object
    streams: Streams
    step_index: int = 0
    act: object = field(default=None, repr=False)
    act_t: object = field(default=None, repr=False)

    @property
    def mode(self):
        return "weight" if isinstance(self.state, WeightState) else "overlap"

    def overlaps(self):
        if isinstance(self.state, WeightState):
            return overlaps_of(self.state.W, self.Wt, self.P)
        return self.state

    @property
    def time(self):
        c = self.config
        return self.step_index * c.gamma / (c.p * c.d)


def setup_run(config, init_state=None, mode=None):
    """Teacher, initial student and sample streams for ``config``."""
    mode = mode or config.mode
    t_seq, s_seq, g_seq = seed_streams(config.seed)
    spec = TeacherSpec(config.k, config.d, config.teacher.mode, config.teacher.scale)
    Wt, P = make_teacher(spec, t_seq)
    s_rng = np.random.default_rng(s_seq)
    if init_state is not None:
        if init_state.p != config.p or init_state.k != config.k:
            raise ConfigError("initial state shape does not match (p, k)")
        if not np.allclose(init_state.P, P, atol=1e-8):
            raise ConfigError("initial state P differs from the teacher Gram")
        start = OverlapState(init_state.Q, init_state.M, P)
        W0 = weights_from_overlaps(start, Wt, s_rng) if mode == "weight" else None
    else:
        W0 = init_student(config.p, config.d, config.init.sigma0, s_rng).W
        start = overlaps_of(W0, Wt, P)
    state = WeightState(W0) if mode == "weight" else start
    return SgdRun(config, Wt, P, state, Streams(g_seq), 0, config.act(), config.act_teacher())


def sgd_step(run):
    """One weight-space step; returns a new run (inputs are not modified)."""
    if run.mode != "weight":
        raise ValueError("sgd_step needs a weight-space run")
    c = run.config
    streams = copy.deepcopy(run.streams)
    X, z = streams.samples(1, c.d)
    W = np.array(run.state.W)
    weight_update(W, run.Wt, X[0], z[0], c.gamma, c.delta, run.act, run.act_t)
    if not np.isfinite(W).all():
        raise DivergenceError("non-finite student weights", t=(run.step_index + 1) * c.gamma / (c.p * c.d))
    return replace(run, state=WeightState(W), streams=streams, step_index=run.step_index + 1)


def overlap_step(run):
    """One exact overlap-space step; returns a new run."""
    if run.mode != "overlap":
        raise ValueError("overlap_step needs an overlap-space run")
    c = run.config
    streams = copy.deepcopy(run.streams)
    Q, M = np.array(run.state.Q), np.array(run.state.M)
    G, chi, z = streams.overlap_draws(1, c.p + c.k, c.d)
    status, _ = kernels.overlap_steps(Q, M, run.P, G, chi, z, c.gamma, c.delta, c.d,
                                      run.act, run.act_t, backend="python")
    t = run.time
    if status == kernels.NOT_PSD:
        raise PSDViolation("overlap matrix left the PSD cone", t=t)
    if status == kernels.NON_FINITE:
        raise DivergenceError("non-finite overlaps", t=t)
    return replace(run, state=OverlapState(Q, M, run.P), streams=streams,
                   step_index=run.step_index + 1)


def step_count(T, gamma, p, d):
    """``ceil(T p d / gamma)`` guarded against rounding just above an integer."""
    x = T * p * d / gamma
    return int(math.ceil(x - 1e-9 * max(1.0, x)))


def _record_steps(nu_max, record_every, record_times, gamma, p, d):
    if record_times is not None:
        steps = {min(nu_max, max(0, int(round(t * p * d / gamma)))) for t in record_times}
        steps.add(0)
        return sorted(steps)
    if record_every is None:
        record_every = max(1, math.ceil(nu_max / MAX_RECORDS))
    steps = list(range(0, nu_max + 1, record_every))
    if steps[-1] != nu_max:
        steps.append(nu_max)
    return steps


def run_sgd(config, record_every=None, record_times=None, init_state=None, mode=None,
            backend="auto", snapshots=True, strat=None):
    """Simulate ``ceil(T p d / gamma)`` SGD steps and record the population risk.

    Recording points are every ``record_every`` steps (default: at most
    10^4 records) or the steps nearest to the scaled times ``record_times``.
    Exceeding ``config.step_budget`` truncates the run and sets
    ``meta["truncated"]``.
    """
    run = setup_run(config, init_state, mode)
    c = config
    act, act_t = run.act, run.act_t
    strat = strat if strat is not None else c.eval_strategy()
    nu_full = step_count(c.T, c.gamma, c.p, c.d)
    nu_max = min(nu_full, c.step_budget)
    truncated = nu_max < nu_full
    every = record_every if record_every is not None else c.record_every
    steps = _record_steps(nu_max, every, record_times, c.gamma, c.p, c.d)
    dt = c.gamma / (c.p * c.d)

    if run.mode == "weight":
        W = np.array(run.state.W, dtype=float, order="C")
    else:
        Q = np.array(run.state.Q, dtype=float, order="C")
        M = np.array(run.state.M, dtype=float, order="C")
    n_var = c.p + c.k
    row_len = c.d if run.mode == "weight" else n_var
    chunk = max(1, _CHUNK_ELEMS // row_len)

    times, risks, snaps, max_q = [], [], [], []
    meta = {
        "regime": f"sim-{run.mode}",
        "config": c.to_dict(),
        "nu_max": nu_max,
        "nu_requested": nu_full,
        "truncated": truncated,
    }

    def partial():
        return Trajectory(times, risks, snaps if snapshots else None, dict(meta),
                          {"max_Q_diag": list(max_q)})

    def record(nu):
        st = overlaps_of(W, run.Wt, run.P) if run.mode == "weight" else OverlapState(Q, M, run.P)
        times.append(nu * dt)
        risks.append(risk(st, act, act_t, c.delta, strat))
        qmax = float(np.max(np.diag(st.Q)))
        max_q.append(qmax)
        if snapshots:
            snaps.append(st)
        if qmax > c.bound_K:
            err = BoundednessViolation(
                f"max Q_ii = {qmax:.4g} exceeds bound K = {c.bound_K:g}", t=nu * dt)
            err.partial = partial()
            raise err

    nu = 0
    record(0)
    for target in steps[1:]:
        while nu < target:
            m = min(chunk, target - nu)
            if run.mode == "weight":
                X, z = run.streams.samples(m, c.d)
                status, done = kernels.weight_steps(W, run.Wt, X, z, c.gamma, c.delta, act, act_t,
                                                    backend=backend)
            else:
                G, chi, z = run.streams.overlap_draws(m, n_var, c.d)
                status, done = kernels.overlap_steps(Q, M, run.P, G, chi, z, c.gamma, c.delta, c.d,
                                                     act, act_t, backend=backend)
            if status != kernels.OK:
                t_fail = (nu + done) * dt
                if status == kernels.NOT_PSD:
                    err = PSDViolation("overlap matrix left the PSD cone", t=t_fail)
                else:
                    err = DivergenceError("non-finite iterate (divergence)", t=t_fail)
                err.partial = partial()
                raise err
            nu += m
        record(nu)
    meta["steps"] = nu
    return partial()

