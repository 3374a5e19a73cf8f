"""Drift functions and population risk of the overlap dynamics.

Every drift is an expectation of the form ``E[sigma'(lambda_i) v_b E]`` (``v_b``
a linear pre-activation, ``E`` the displacement) or ``E[sigma'_i sigma'_j E^2]``.
Expanding the displacement reduces them to two-, three- and four-point
correlations over marginal covariances.  For twice-differentiable activations
Gaussian integration by parts collapses the three-point terms further:

    E[sigma'(a) b g(c)] = C_ba E[sigma''(a) g(c)] + C_bc E[sigma'(a) g'(c)],

so one pass over the pair tables gives all first-order drifts at once.
Non-smooth activations (clipped square, custom without ``d2sigma``) take the
direct three-point route.
"""
from dataclasses import dataclass

import numpy as np

from .gaussian import default_strategy, expect_pair, expect_quad, expect_triple
from .linalg import symmetrize
from .overlaps import OverlapState, _solve_p, q_perp


def resolve_strategy(act, act_teacher, strat):
    return default_strategy(act, act_teacher) if strat is None else strat


def _teacher(act, act_teacher):
    return act if act_teacher is None else act_teacher


@dataclass
class PairTables:
    """Pair correlations of one overlap state.

    ``A`` tables hold ``E[sigma''(lambda_i) g(.)]``, ``B`` tables
    ``E[sigma'(lambda_i) g'(.)]`` and ``S`` tables ``E[sigma(.) sigma(.)]``;
    suffixes name the (student, teacher) blocks.
    """

    A_ss: np.ndarray
    A_st: np.ndarray
    B_ss: np.ndarray
    B_st: np.ndarray
    S_ss: np.ndarray
    S_st: np.ndarray
    S_tt: np.ndarray

    def stein_weights(self):
        p, k = self.A_st.shape
        return self.A_st.sum(axis=1) / k - self.A_ss.sum(axis=1) / p


def _grid(diag_rows, diag_cols, cross):
    return diag_rows[:, None] + 0.0 * cross, diag_cols[None, :] + 0.0 * cross, cross


def risk_tables(state, act, act_t, strat):
    qd, pd = np.diag(state.Q), np.diag(state.P)
    S_ss = expect_pair("ss", *_grid(qd, qd, state.Q), act, act, strat)
    S_st = expect_pair("ss", *_grid(qd, pd, state.M), act, act_t, strat)
    S_tt = expect_pair("ss", *_grid(pd, pd, state.P), act_t, act_t, strat)
    return S_ss, S_st, S_tt


def pair_tables(state, act, act_teacher=None, strat=None):
    act_t = _teacher(act, act_teacher)
    strat = resolve_strategy(act, act_t, strat)
    qd, pd = np.diag(state.Q), np.diag(state.P)
    ss, st = _grid(qd, qd, state.Q), _grid(qd, pd, state.M)
    S_ss, S_st, S_tt = risk_tables(state, act, act_t, strat)
    return PairTables(
        A_ss=expect_pair("d2s", *ss, act, act, strat),
        A_st=expect_pair("d2s", *st, act, act_t, strat),
        B_ss=expect_pair("dd", *ss, act, act, strat),
        B_st=expect_pair("dd", *st, act, act_t, strat),
        S_ss=S_ss,
        S_st=S_st,
        S_tt=S_tt,
    )


def _disp_corr_stein(tab, cov_s, cov_t):
    """``D[i, b] = E[sigma'(lambda_i) v_b E]`` from pair tables.

    ``cov_s[l, b] = Cov(lambda_l, v_b)``, ``cov_t[r, b] = Cov(lambda*_r, v_b)``.
    """
    p, k = tab.A_st.shape
    a = tab.stein_weights()
    return a[:, None] * cov_s + tab.B_st @ cov_t / k - tab.B_ss @ cov_s / p


def _disp_corr_direct(state, cov_s, cov_t, cov_b, act, act_t, strat):
    """Same quantity as ``_disp_corr_stein`` from explicit three-point integrals."""
    p, k, nb = state.p, state.k, cov_s.shape[1]
    ext = np.block([
        [state.Q, state.M, cov_s],
        [state.M.T, state.P, cov_t],
        [cov_s.T, cov_t.T, cov_b],
    ])
    ii, bb = np.meshgrid(np.arange(p), p + k + np.arange(nb), indexing="ij")

    def triples(others, act_c):
        n = len(others)
        idx = np.stack(np.broadcast_arrays(
            ii[:, :, None], bb[:, :, None], np.asarray(others)[None, None, :]), axis=-1)
        C = ext[idx[..., :, None], idx[..., None, :]]
        return expect_triple(C.reshape(-1, 3, 3), act, act_c, strat).reshape(p, nb, n)

    teach = triples(p + np.arange(k), act_t).sum(axis=2) / k
    stud = triples(np.arange(p), act).sum(axis=2) / p
    return teach - stud


def _disp_corr(state, cov_s, cov_t, cov_b, act, act_t, strat, tables=None):
    if act.smooth:
        tab = tables if tables is not None else pair_tables(state, act, act_t, strat)
        return _disp_corr_stein(tab, cov_s, cov_t)
    return _disp_corr_direct(state, cov_s, cov_t, cov_b, act, act_t, strat)


def psi_m(state, act, act_teacher=None, strat=None, tables=None):
    """``E[sigma'(lambda_i) lambda*_r E]`` (p x k); the label noise drops out."""
    act_t = _teacher(act, act_teacher)
    strat = resolve_strategy(act, act_t, strat)
    return _disp_corr(state, state.M, state.P, state.P, act, act_t, strat, tables)


def psi_gf(state, act, act_teacher=None, strat=None, tables=None):
    """Symmetrized ``E[sigma'(lambda_i) lambda_j E]`` (p x p)."""
    act_t = _teacher(act, act_teacher)
    strat = resolve_strategy(act, act_t, strat)
    G = _disp_corr(state, state.Q, state.M.T, state.Q, act, act_t, strat, tables)
    return G + G.T


def psi_perp(state, act, act_teacher=None, strat=None, tables=None, method="direct"):
    """Drift of the orthogonal overlap ``Q_perp``.

    ``method="direct"`` integrates against the orthogonal pre-activations;
    ``method="chain"`` differentiates ``Q - M P^-1 M^T`` along the flow.
    """
    act_t = _teacher(act, act_teacher)
    strat = resolve_strategy(act, act_t, strat)
    if method == "chain":
        if act.smooth and tables is None:
            tables = pair_tables(state, act, act_t, strat)
        gf = psi_gf(state, act, act_t, strat, tables)
        pm = psi_m(state, act, act_t, strat, tables)
        cross = pm @ _solve_p(state.P, state.M.T)
        return symmetrize(gf - cross - cross.T)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    qp = q_perp(state)
    H = _disp_corr(state, qp, np.zeros((state.k, state.p)), qp, act, act_t, strat, tables)
    return H + H.T


def psi_noise(state, act, delta, strat=None, tables=None):
    """``delta * E[sigma'(lambda_i) sigma'(lambda_j)]``."""
    if delta < 0:
        raise ValueError("noise variance must be nonnegative")
    strat = resolve_strategy(act, act, strat)
    if tables is not None:
        B = tables.B_ss
    else:
        qd = np.diag(state.Q)
        B = expect_pair("dd", *_grid(qd, qd, state.Q), act, act, strat)
    return delta * symmetrize(B)


def psi_var(state, act, act_teacher=None, delta=0.0, strat=None, tables=None):
    """``E[sigma'(lambda_i) sigma'(lambda_j) E^2]`` including the label-noise part."""
    act_t = _teacher(act, act_teacher)
    strat = resolve_strategy(act, act_t, strat)
    p, k = state.p, state.k
    omega = state.omega()
    n = p + k
    coef = np.concatenate([np.full(p, -1.0 / p), np.full(k, 1.0 / k)])
    ce_c, ce_e = np.triu_indices(n)
    pair_w = coef[ce_c] * coef[ce_e] * np.where(ce_c == ce_e, 1.0, 2.0)
    out = np.zeros((p, p))
    iu_i, iu_j = np.triu_indices(p)
    # group the (c, e) pairs by activation assignment so each batch uses one family
    groups = {}
    for idx, (c, e) in enumerate(zip(ce_c, ce_e)):
        groups.setdefault((c >= p, e >= p), []).append(idx)
    for (ct, et), sel in groups.items():
        sel = np.asarray(sel)
        fc, fe = (act_t if ct else act), (act_t if et else act)
        for i in range(p):
            js = iu_j[iu_i == i]
            ai = np.full((len(js), len(sel)), i)
            idx = np.stack(np.broadcast_arrays(
                ai, js[:, None], ce_c[sel][None, :], ce_e[sel][None, :]), axis=-1)
            C = omega[idx[..., :, None], idx[..., None, :]]
            vals = expect_quad(C.reshape(-1, 4, 4), (act, act, fc, fe), strat)
            out[i, js] += vals.reshape(len(js), len(sel)) @ pair_w[sel]
    out = out + np.triu(out, 1).T
    if delta:
        out = out + psi_noise(state, act, delta, strat, tables)
    return out


def risk(state, act, act_teacher=None, delta=0.0, strat=None, tables=None):
    """Population risk ``E[E^2] / 2`` with the label-noise contribution ``delta / 2``."""
    act_t = _teacher(act, act_teacher)
    strat = resolve_strategy(act, act_t, strat)
    if tables is not None:
        S_ss, S_st, S_tt = tables.S_ss, tables.S_st, tables.S_tt
    else:
        S_ss, S_st, S_tt = risk_tables(state, act, act_t, strat)
    p, k = state.p, state.k
    val = 0.5 * (S_tt.sum() / k**2 - 2.0 * S_st.sum() / (p * k) + S_ss.sum() / p**2)
    return float(val + 0.5 * delta)


def risk_from_tables(S_ss, S_st, S_tt, delta=0.0):
    p, k = S_st.shape
    return float(0.5 * (S_tt.sum() / k**2 - 2.0 * S_st.sum() / (p * k) + S_ss.sum() / p**2)
                 + 0.5 * delta)


def all_drifts(state, act, act_teacher=None, delta=0.0, strat=None):
    """Every drift and the risk at one state, sharing the pair tables."""
    act_t = _teacher(act, act_teacher)
    strat = resolve_strategy(act, act_t, strat)
    tab = pair_tables(state, act, act_t, strat) if act.smooth else None
    return {
        "psi_m": psi_m(state, act, act_t, strat, tab),
        "psi_gf": psi_gf(state, act, act_t, strat, tab),
        "psi_var": psi_var(state, act, act_t, delta, strat, tab),
        "psi_noise": psi_noise(state, act, delta, strat, tab),
        "psi_perp": psi_perp(state, act, act_t, strat, tab),
        "risk": risk(state, act, act_t, delta, strat, tab),
    }


def perfect_learning_state(P):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return OverlapState(P, P, P)


__all__ = [
    "PairTables",
    "all_drifts",
    "pair_tables",
    "perfect_learning_state",
    "psi_gf",
    "psi_m",
    "psi_noise",
    "psi_perp",
    "psi_var",
    "risk",
    "risk_from_tables",
]
