"""NumPy implementation of the SGD step kernels.

Serves any activation (including custom ones) and is the reference the
compiled kernel is checked against.  Arrays passed in are updated in place.
"""
import numpy as np

from .linalg import factor_is_valid, pivoted_cholesky

OK = 0
NON_FINITE = 1
NOT_PSD = 2


def displacement(lam, lamt, z, delta, act, act_t):
    return act_t.sigma(lamt).mean() - act.sigma(lam).mean() + np.sqrt(delta) * z


def weight_update(W, Wt, x, z, gamma, delta, act, act_t):
    """One SGD step on the rows of ``W`` for sample ``x`` (length d) and noise ``z``."""
    p = W.shape[0]
    lam, lamt = W @ x, Wt @ x
    err = displacement(lam, lamt, z, delta, act, act_t)
    W += (gamma / p) * np.outer(act.dsigma(lam) * err, x)
    return lam, lamt, err


def overlap_update(Q, M, lam, lamt, s, z, gamma, delta, d, act, act_t):
    """Exact overlap increment given the pre-activations and ``s = d * |x|^2``."""
    p = Q.shape[0]
    err = displacement(lam, lamt, z, delta, act, act_t)
    ds = act.dsigma(lam)
    c = gamma / (p * d)
    dse = ds * err
    M += c * np.outer(dse, lamt)
    cross = np.outer(dse, lam)
    Q += c * (cross + cross.T) + (gamma**2 * s / (p * p * d * d)) * np.outer(dse, dse)
    return err


def weight_steps(W, Wt, X, z, gamma, delta, act, act_t):
    """Run ``len(z)`` consecutive steps with samples ``X[t]``; returns ``(status, steps_done)``."""
    for t in range(len(z)):
        weight_update(W, Wt, X[t], z[t], gamma, delta, act, act_t)
        if not np.isfinite(W).all():
            return NON_FINITE, t + 1
    return OK, len(z)


def norm_sample(g, chi, d):
    """``d * |x|^2`` from the factor normals ``g`` and the leftover chi-square draw."""
    m = min(len(g), d)
    return float(g[:m] @ g[:m]) + chi


def overlap_steps(Q, M, P, G, chi, z, gamma, delta, d, act, act_t):
    """Overlap-space steps: ``G[t]`` are ``p + k`` standard normals, ``chi[t]`` a
    chi-square variate with ``max(d - p - k, 0)`` degrees of freedom."""
    p = Q.shape[0]
    for t in range(len(z)):
        omega = np.block([[Q, M], [M.T, P]])
        L = pivoted_cholesky(omega)
        if not factor_is_valid(omega, L):
            return NOT_PSD, t
        lam_all = L @ G[t, :L.shape[1]]
        s = norm_sample(G[t], chi[t], d)
        overlap_update(Q, M, lam_all[:p], lam_all[p:], s, z[t], gamma, delta, d, act, act_t)
        if not (np.isfinite(Q).all() and np.isfinite(M).all()):
            return NON_FINITE, t + 1
    return OK, len(z)
