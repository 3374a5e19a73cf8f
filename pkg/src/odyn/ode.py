"""Deterministic overlap ODEs: ss, gf, gf-noise on full states, mf and hdmf on reduced ones."""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .drifts import pair_tables, psi_gf, psi_m, psi_noise, psi_var, resolve_strategy, risk
from .errors import DivergenceError, PSDViolation
from .linalg import PSD_TOL, min_eig, symmetrize
from .meanfield import XiAveragedTables, hdmf_psi, mf_expected_psi, mf_expected_risk
from .overlaps import OverlapState, ReducedMFState, XiModel, bar_omega
from .trajectory import Trajectory

log = logging.getLogger(__name__)

TAGS = ("ss", "gf", "gf-noise", "mf", "hdmf")
FULL = ("ss", "gf", "gf-noise")
REDUCED = ("mf", "hdmf")
MAX_RECORDS = 10_000


@dataclass(frozen=True)
class Regime:
    tag: str
    gamma: Optional[float] = None
    p: Optional[int] = None
    d: Optional[int] = None
    delta: float = 0.0
    mf_noise: bool = False

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown regime {self.tag!r}; expected one of {TAGS}")
        if self.tag in ("ss", "gf-noise") or (self.tag == "mf" and self.mf_noise):
            if self.gamma is None or self.p is None:
                raise ValueError(f"regime {self.tag} needs gamma and p")
        if self.tag == "mf" and self.d is None:
            raise ValueError("regime mf needs d (law of the Xi entries)")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @property
    def reduced(self):
        return self.tag in REDUCED


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 0.01
    T: float = 10.0
    record_every: Optional[int] = None
    max_steps: int = 10_000_000
    psd_tol: float = PSD_TOL
    # rank-deficient Omega (p + k > d) picks up O(dt^4) negative eigenvalues
    # from truncation error that decay again; scale the abort bound with Omega
    psd_rtol: float = 1e-8

    def __post_init__(self):
        if self.method not in ("euler", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0 < self.dt <= 0.1:
            raise ValueError(f"dt must lie in (0, 0.1], got {self.dt}")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.n_steps > self.max_steps:
            raise ValueError(f"T/dt = {self.n_steps} steps exceeds the budget {self.max_steps}")

    @property
    def n_steps(self):
        return int(math.ceil(self.T / self.dt - 1e-9))


def _xi_model(state, regime, xi):
    if xi is not None:
        return xi
    return XiModel.for_dims(regime.d, state.k)


def drift(state, regime, act, act_teacher=None, delta=None, strat=None, xi=None, P=None):
    """Right-hand side at ``state``; returns an object of the state's type holding the increments.

    Reduced states need the teacher Gram ``P``.  ``delta`` defaults to the regime's.
    """
    act_t = act if act_teacher is None else act_teacher
    strat = resolve_strategy(act, act_t, strat)
    delta = regime.delta if delta is None else delta
    if regime.reduced:
        if not isinstance(state, ReducedMFState):
            raise TypeError(f"regime {regime.tag} integrates a ReducedMFState")
        if P is None:
            raise ValueError("reduced regimes need the teacher Gram P")
        if regime.tag == "mf":
            dm, dq = mf_expected_psi(state, P, act, act_t, _xi_model(state, regime, xi), strat)
        else:
            dm, dq = hdmf_psi(state, P, act, act_t, strat)
        if regime.mf_noise and delta:
            bar = bar_omega(state, P)
            dq = dq + (regime.gamma / regime.p) * np.diag(psi_noise(bar, act, delta, strat))
        return ReducedMFState(dm, dq)
    if not isinstance(state, OverlapState):
        raise TypeError(f"regime {regime.tag} integrates an OverlapState")
    tab = pair_tables(state, act, act_t, strat) if act.smooth else None
    dm = psi_m(state, act, act_t, strat, tab)
    dq = psi_gf(state, act, act_t, strat, tab)
    if regime.tag == "ss":
        dq = dq + (regime.gamma / regime.p) * psi_var(state, act, act_t, delta, strat, tab)
    elif regime.tag == "gf-noise":
        dq = dq + (regime.gamma / regime.p) * psi_noise(state, act, delta, strat, tab)
    return OverlapState(symmetrize(dq), dm, np.zeros_like(state.P))


def regime_risk(state, regime, act, act_teacher=None, delta=None, strat=None, xi=None, P=None):
    delta = regime.delta if delta is None else delta
    if regime.tag == "mf":
        return mf_expected_risk(state, P, act, act_teacher, delta, _xi_model(state, regime, xi), strat)
    if regime.tag == "hdmf":
        return risk(bar_omega(state, P), act, act_teacher, delta, strat)
    return risk(state, act, act_teacher, delta, strat)


class _System:
    """Flat-vector view of a state for the stepping loop."""

    def __init__(self, state0, regime, act, act_t, delta, strat, xi, P):
        self.regime, self.act, self.act_t = regime, act, act_t
        self.delta, self.strat, self.xi = delta, strat, xi
        self.reduced = regime.reduced
        self.P = np.asarray(P if self.reduced else state0.P, dtype=float)
        self.p, self.k = state0.p, state0.k

    def pack(self, st):
        if self.reduced:
            return np.concatenate([st.M.ravel(), st.q])
        return np.concatenate([st.Q.ravel(), st.M.ravel()])

    def unpack(self, y, stage=False):
        p, k = self.p, self.k
        if self.reduced:
            q = y[p * k:]
            if stage:
                q = np.clip(q, 0.0, None)
            return ReducedMFState(y[:p * k].reshape(p, k), q)
        return OverlapState(y[:p * p].reshape(p, p), y[p * p:].reshape(p, k), self.P)

    def rhs(self, y):
        inc = drift(self.unpack(y, stage=True), self.regime, self.act, self.act_t, self.delta,
                    self.strat, self.xi, self.P)
        return self.pack(inc)


def _step(sys, y, h, method):
    if method == "euler":
        return y + h * sys.rhs(y)
    k1 = sys.rhs(y)
    k2 = sys.rhs(y + 0.5 * h * k1)
    k3 = sys.rhs(y + 0.5 * h * k2)
    k4 = sys.rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class _Events:
    clipped: list = field(default_factory=list)


def integrate(state0, regime, integ, act, act_teacher=None, delta=None, strat=None, xi=None,
              P=None, snapshots=True):
    """Fixed-step integration from ``state0`` up to ``integ.T``.

    Q is re-symmetrized after every step; for reduced states, entries of q in
    ``[-psd_tol, 0)`` are clipped to 0 (logged in ``meta["q_clip_events"]``)
    and anything more negative aborts.  Full states abort when Omega loses
    positive semidefiniteness beyond ``psd_tol``.
    """
    act_t = act if act_teacher is None else act_teacher
    strat = resolve_strategy(act, act_t, strat)
    delta = regime.delta if delta is None else delta
    if regime.reduced:
        if P is None:
            raise ValueError("reduced regimes need the teacher Gram P")
        state0.validate(integ.psd_tol)
        if regime.tag == "mf":
            xi = _xi_model(state0, regime, xi)
    else:
        state0.validate(tol=integ.psd_tol)
    sys = _System(state0, regime, act, act_t, delta, strat, xi, P)
    n = integ.n_steps
    every = integ.record_every or max(1, math.ceil(n / MAX_RECORDS))
    events = _Events()

    times, risks, snaps = [], [], []

    def record(t, st):
        times.append(t)
        if regime.tag == "mf":
            tab = XiAveragedTables(st, sys.P, act, act_t, xi, strat)
            risks.append(mf_expected_risk(st, sys.P, act, act_t, delta, xi, strat, tab))
        else:
            risks.append(regime_risk(st, regime, act, act_t, delta, strat, xi, sys.P))
        if snapshots:
            snaps.append(st)

    y = sys.pack(state0)
    record(0.0, state0)
    t = 0.0
    for step in range(1, n + 1):
        h = min(integ.dt, integ.T - t) if step == n else integ.dt
        y = _step(sys, y, h, integ.method)
        t = integ.T if step == n else step * integ.dt
        if not np.all(np.isfinite(y)):
            raise DivergenceError("non-finite state during integration", t=t)
        st = _post_step(sys, y, t, integ.psd_tol, integ.psd_rtol, events)
        y = sys.pack(st)
        if step % every == 0 or step == n:
            record(t, st)
    meta = {
        "regime": regime.tag,
        "method": integ.method,
        "dt": integ.dt,
        "T": integ.T,
        "gamma": regime.gamma,
        "p": sys.p,
        "k": sys.k,
        "d": regime.d,
        "delta": delta,
        "activation": act.name,
        "teacher_activation": act_t.name,
        "P": sys.P.tolist(),
        "q_clip_events": events.clipped,
    }
    return Trajectory(times, risks, snaps if snapshots else None, meta)


def _post_step(sys, y, t, tol, rtol, events):
    if sys.reduced:
        p, k = sys.p, sys.k
        q = y[p * k:].copy()
        if np.min(q) < -tol:
            raise PSDViolation(f"q reached {np.min(q):.3e} below -{tol:g}", t=t)
        neg = np.flatnonzero(q < 0)
        if neg.size:
            events.clipped.append({"t": t, "units": neg.tolist()})
            log.debug("clipped q at t=%g for units %s", t, neg.tolist())
            q[neg] = 0.0
        return ReducedMFState(y[:p * k].reshape(p, k), q)
    st = sys.unpack(y)  # constructor re-symmetrizes Q
    omega = st.omega()
    lam = min_eig(omega)
    bound = tol + rtol * float(np.max(np.abs(np.diag(omega))))
    if lam < -bound:
        raise PSDViolation(f"overlap matrix min eigenvalue {lam:.3e} below -{bound:.3g}", t=t)
    return st


@dataclass
class CompareReport:
    times: np.ndarray
    risk_gaps: np.ndarray
    sup_risk_gap: float
    t_sup: float
    terminal_risk_gap: float
    sup_overlap_gap: Optional[float] = None
    terminal_overlap_gap: Optional[float] = None
    overlap_columns: Optional[list] = None

    def to_dict(self):
        return {
            "sup_risk_gap": self.sup_risk_gap,
            "t_sup": self.t_sup,
            "terminal_risk_gap": self.terminal_risk_gap,
            "sup_overlap_gap": self.sup_overlap_gap,
            "terminal_overlap_gap": self.terminal_overlap_gap,
            "overlap_columns": self.overlap_columns,
            "times": [float(v) for v in self.times],
            "risk_gaps": [float(v) for v in self.risk_gaps],
        }


def compare(a, b):
    """Risk (and shared-overlap) gaps between two trajectories on the coarser time grid."""
    lo = max(a.times[0], b.times[0])
    hi = min(a.times[-1], b.times[-1])
    if hi < lo:
        raise ValueError(f"trajectories have disjoint time ranges [{a.times[0]}, {a.times[-1]}] "
                         f"and [{b.times[0]}, {b.times[-1]}]")
    coarse = a if len(a) <= len(b) else b
    grid = coarse.times[(coarse.times >= lo) & (coarse.times <= hi)]
    if grid.size == 0:
        grid = np.array([lo])
    gaps = np.abs(np.interp(grid, a.times, a.risks) - np.interp(grid, b.times, b.risks))
    i = int(np.argmax(gaps))
    rep = CompareReport(grid, gaps, float(gaps[i]), float(grid[i]), float(gaps[-1]))
    na, va = a.flat()
    nb, vb = b.flat()
    if na and nb:
        common = [c for c in na if c in set(nb)]
        if common:
            ia = [na.index(c) for c in common]
            ib = [nb.index(c) for c in common]
            da = np.column_stack([np.interp(grid, a.times, va[:, j]) for j in ia])
            db = np.column_stack([np.interp(grid, b.times, vb[:, j]) for j in ib])
            diff = np.max(np.abs(da - db), axis=1)
            rep.sup_overlap_gap = float(diff.max())
            rep.terminal_overlap_gap = float(diff[-1])
            rep.overlap_columns = common
    return rep
