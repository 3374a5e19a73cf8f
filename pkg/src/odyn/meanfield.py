"""Mean-field drifts: Xi-averaged drifts of the reduced state ``(M, q)``.

Inside ``Omega~`` only the student-student off-diagonals are random, and each
pair correlation touches a single ``xi_il``.  Averaging therefore reduces to
1-D integrals of the pair tables over the law of ``xi``.
"""
import numpy as np

from .drifts import (
    PairTables,
    _disp_corr_stein,
    _grid,
    pair_tables,
    resolve_strategy,
    risk,
    risk_from_tables,
)
from .errors import UnsupportedStrategyError
from .gaussian import expect_pair
from .overlaps import bar_omega, projection_gram

_SQUARE = "square"


def _is_square(act, act_t):
    return act.kind == _SQUARE and act_t.kind == _SQUARE and act.clip is None and act_t.clip is None


def _check_state(mf, act=None):
    if act is not None and not act.smooth:
        raise UnsupportedStrategyError(
            f"mean-field drifts need a twice-differentiable activation, got {act!r}")
    if np.min(mf.q) < 0:
        raise ValueError("q must be nonnegative")


class XiAveragedTables:
    """Pair tables of ``Omega~`` averaged over ``Xi``.

    Besides the plain averages it carries ``Bxi[i, l] = E[xi_il B_ss(xi_il)]``
    needed by the orthogonal drift.
    """

    def __init__(self, mf, P, act, act_t, xi, strat):
        _check_state(mf, act)
        self.base = projection_gram(mf.M, P)
        bar = bar_omega(mf, P)
        qd, pd = np.diag(bar.Q), np.diag(bar.P)
        ss, st = _grid(qd, qd, bar.Q), _grid(qd, pd, bar.M)
        p = mf.p
        self.n_orth = xi.n_orth
        self.bar = bar
        sq = _is_square(act, act_t)

        A_st = expect_pair("d2s", *st, act, act_t, strat)
        B_st = expect_pair("dd", *st, act, act_t, strat)
        S_st = expect_pair("ss", *st, act, act_t, strat)
        S_tt = expect_pair("ss", *_grid(pd, pd, bar.P), act_t, act_t, strat)
        off = ~np.eye(p, dtype=bool)
        root = np.sqrt(np.outer(mf.q, mf.q))

        if sq:
            # closed Xi moments: E[xi] = 0, E[xi^2] = 1 / n_orth
            A_ss = expect_pair("d2s", *ss, act, act, strat)
            B_ss = expect_pair("dd", *ss, act, act, strat)
            S_ss = expect_pair("ss", *ss, act, act, strat) + 2.0 * off * root**2 / self.n_orth
            Bxi = 4.0 * off * root / self.n_orth
        else:
            x, w = xi.nodes()
            caa, ccc, _ = ss
            cac = self.base[:, :, None] + root[:, :, None] * x[None, None, :]
            caa, ccc = caa[:, :, None], ccc[:, :, None]
            Araw = expect_pair("d2s", caa, ccc, cac, act, act, strat)
            Braw = expect_pair("dd", caa, ccc, cac, act, act, strat)
            Sraw = expect_pair("ss", caa, ccc, cac, act, act, strat)
            A_ss, B_ss, S_ss = Araw @ w, Braw @ w, Sraw @ w
            Bxi = off * ((Braw * x) @ w)
            # the diagonal carries no xi
            d = np.diag_indices(p)
            A_ss[d] = expect_pair("d2s", qd, qd, qd, act, act, strat)
            B_ss[d] = expect_pair("dd", qd, qd, qd, act, act, strat)
            S_ss[d] = expect_pair("ss", qd, qd, qd, act, act, strat)
        self.tables = PairTables(A_ss, A_st, B_ss, B_st, S_ss, S_st, S_tt)
        self.Bxi = Bxi
        self.q = np.asarray(mf.q)
        self.root = root


def mf_expected_psi(mf, P, act, act_teacher=None, xi=None, strat=None, tables=None):
    """``(E_Xi[Psi_M(Omega~)], E_Xi[diag Psi_perp(Omega~)])``."""
    act_t = act if act_teacher is None else act_teacher
    strat = resolve_strategy(act, act_t, strat)
    if xi is None:
        raise ValueError("mean-field drifts need an XiModel (d - k orthogonal dimensions)")
    T = tables if tables is not None else XiAveragedTables(mf, P, act, act_t, xi, strat)
    tab = T.tables
    bar = T.bar
    pm = _disp_corr_stein(tab, bar.M, bar.P)
    p = mf.p
    a = tab.stein_weights()
    q = T.q
    cross = T.Bxi * T.root
    dq = 2.0 * (a * q - (np.diag(tab.B_ss) * q + cross.sum(axis=1)) / p)
    return pm, dq


def mf_expected_risk(mf, P, act, act_teacher=None, delta=0.0, xi=None, strat=None, tables=None):
    act_t = act if act_teacher is None else act_teacher
    strat = resolve_strategy(act, act_t, strat)
    if xi is None:
        raise ValueError("mean-field risk needs an XiModel (d - k orthogonal dimensions)")
    T = tables if tables is not None else XiAveragedTables(mf, P, act, act_t, xi, strat)
    tab = T.tables
    return risk_from_tables(tab.S_ss, tab.S_st, tab.S_tt, delta)


def hdmf_psi(mf, P, act, act_teacher=None, strat=None, tables=None):
    """``(Psi_M(Omega_bar), diag Psi_perp(Omega_bar))`` with ``Q_perp(Omega_bar) = diag(q)``."""
    act_t = act if act_teacher is None else act_teacher
    strat = resolve_strategy(act, act_t, strat)
    _check_state(mf, act)
    bar = bar_omega(mf, P)
    tab = tables if tables is not None else pair_tables(bar, act, act_t, strat)
    pm = _disp_corr_stein(tab, bar.M, bar.P)
    p = mf.p
    a = tab.stein_weights()
    q = np.asarray(mf.q)
    dq = 2.0 * q * (a - np.diag(tab.B_ss) / p)
    return pm, dq


def hdmf_risk(mf, P, act, act_teacher=None, delta=0.0, strat=None):
    return risk(bar_omega(mf, P), act, act_teacher, delta, strat)
