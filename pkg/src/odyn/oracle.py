"""Brute-force Monte-Carlo reference for every drift and the risk.

Samples the full joint law of ``(lambda, lambda*)`` and the label noise and
averages the defining integrands directly, with no marginalization, Stein
reduction or closed form.  Used only to check the expectation engine.
"""
import numpy as np

from .linalg import pivoted_cholesky
from .overlaps import _solve_p

_CHUNK = 100_000


class _Moments:
    def __init__(self):
        self.n = 0
        self.s1 = None
        self.s2 = None

    def add(self, x):
        # x has the sample axis first
        a, b = x.sum(axis=0), np.square(x).sum(axis=0)
        if self.s1 is None:
            self.s1, self.s2 = a, b
        else:
            self.s1, self.s2 = self.s1 + a, self.s2 + b
        self.n += x.shape[0]

    def result(self):
        mean = self.s1 / self.n
        var = np.clip(self.s2 / self.n - mean**2, 0.0, None) * self.n / (self.n - 1)
        return mean, np.sqrt(var / self.n)


def mc_drifts(state, act, act_teacher=None, delta=0.0, n=1_000_000, seed=0):
    """Monte-Carlo estimates ``{name: (mean, standard_error)}`` of all drifts and the risk."""
    act_t = act if act_teacher is None else act_teacher
    p, k = state.p, state.k
    L = pivoted_cholesky(state.omega())
    proj = _solve_p(state.P, state.M.T).T  # M P^-1, maps lambda* to its in-span student part
    rng = np.random.default_rng(seed)
    acc = {name: _Moments() for name in ("psi_m", "psi_gf", "psi_var", "psi_noise", "psi_perp", "risk")}
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        g = rng.standard_normal((m, L.shape[1]))
        z = rng.standard_normal(m)
        lam_all = g @ L.T
        lam, lamt = lam_all[:, :p], lam_all[:, p:]
        disp = act_t.sigma(lamt).mean(axis=1) - act.sigma(lam).mean(axis=1)
        noisy = disp + np.sqrt(delta) * z
        ds = act.dsigma(lam)
        lam_perp = lam - lamt @ proj.T
        de = ds * disp[:, None]
        acc["psi_m"].add(de[:, :, None] * lamt[:, None, :])
        gf = de[:, :, None] * lam[:, None, :]
        acc["psi_gf"].add(gf + gf.transpose(0, 2, 1))
        pp = de[:, :, None] * lam_perp[:, None, :]
        acc["psi_perp"].add(pp + pp.transpose(0, 2, 1))
        outer = ds[:, :, None] * ds[:, None, :]
        acc["psi_var"].add(outer * np.square(noisy)[:, None, None])
        acc["psi_noise"].add(delta * outer)
        acc["risk"].add(0.5 * np.square(disp) + 0.5 * delta)
        done += m
    out = {name: mom.result() for name, mom in acc.items()}
    out["risk"] = tuple(float(v) for v in out["risk"])
    return out


def mc_correlation(fn, cov, n=1_000_000, seed=0):
    """Mean and standard error of ``fn(X)`` for ``X ~ N(0, cov)``; ``X`` has shape (dim, n)."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    L = pivoted_cholesky(cov)
    rng = np.random.default_rng(seed)
    mom = _Moments()
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        X = L @ rng.standard_normal((L.shape[1], m))
        mom.add(np.asarray(fn(X), dtype=float))
        done += m
    mean, se = mom.result()
    return float(mean), float(se)

