"""Closed-form Gaussian correlations for the square and erf(x/sqrt 2) activations.

Every function takes covariance entries (arrays broadcast together) of the
zero-mean Gaussian variables named in its docstring.  Slot ``a`` (and ``b`` in
the four-point function) carries ``sigma'``; the remaining slots carry
``sigma``.  Square results follow from Isserlis' theorem; erf results are the
classical arcsine integrals.
"""
import numpy as np

_2PI = 2.0 / np.pi


def _arcsin(x):
    return np.arcsin(np.clip(x, -1.0, 1.0))


# ---- square ---------------------------------------------------------------

def square_ss(caa, ccc, cac):
    """E[a^2 c^2]."""
    return caa * ccc + 2.0 * cac * cac


def square_dd(caa, ccc, cac):
    """E[sigma'(a) sigma'(c)] = 4 E[a c]."""
    return 4.0 * cac + 0.0 * (caa + ccc)


def square_d2s(caa, ccc, cac):
    """E[sigma''(a) sigma(c)] = 2 E[c^2]."""
    return 2.0 * ccc + 0.0 * (caa + cac)


def square_triple(C):
    """E[sigma'(a) b sigma(c)] for ``C`` of shape (..., 3, 3) over (a, b, c)."""
    return 2.0 * (C[..., 0, 1] * C[..., 2, 2] + 2.0 * C[..., 0, 2] * C[..., 1, 2])


def square_quad(C):
    """E[sigma'(a) sigma'(b) sigma(c) sigma(e)] = 4 E[a b c^2 e^2] over (a, b, c, e)."""
    ab, ac, ae = C[..., 0, 1], C[..., 0, 2], C[..., 0, 3]
    bc, be = C[..., 1, 2], C[..., 1, 3]
    cc, ce, ee = C[..., 2, 2], C[..., 2, 3], C[..., 3, 3]
    return 4.0 * (
        ab * (cc * ee + 2.0 * ce * ce)
        + 2.0 * ac * (bc * ee + 2.0 * be * ce)
        + 2.0 * ae * (be * cc + 2.0 * bc * ce)
    )


# ---- erf(x / sqrt 2) ------------------------------------------------------

def erf_ss(caa, ccc, cac):
    return _2PI * _arcsin(cac / np.sqrt((1.0 + caa) * (1.0 + ccc)))


def erf_dd(caa, ccc, cac):
    return _2PI / np.sqrt((1.0 + caa) * (1.0 + ccc) - cac * cac)


def erf_d2s(caa, ccc, cac):
    # Stein on a: E[sigma''(a) sigma(c)] = -E[a sigma'(a) sigma(c)]
    lam = (1.0 + caa) * (1.0 + ccc) - cac * cac
    return -_2PI * cac / ((1.0 + caa) * np.sqrt(lam))


def erf_triple(C):
    aa, ab, ac = C[..., 0, 0], C[..., 0, 1], C[..., 0, 2]
    bc, cc = C[..., 1, 2], C[..., 2, 2]
    lam = (1.0 + aa) * (1.0 + cc) - ac * ac
    return _2PI / np.sqrt(lam) * (bc * (1.0 + aa) - ab * ac) / (1.0 + aa)


def erf_quad(C):
    c11, c22, c33, c44 = (C[..., i, i] for i in range(4))
    c12, c13, c14 = C[..., 0, 1], C[..., 0, 2], C[..., 0, 3]
    c23, c24, c34 = C[..., 1, 2], C[..., 1, 3], C[..., 2, 3]
    lam4 = (1.0 + c11) * (1.0 + c22) - c12 * c12
    lam0 = (lam4 * c34 - c23 * c24 * (1.0 + c11) - c13 * c14 * (1.0 + c22)
            + c12 * c13 * c24 + c12 * c14 * c23)
    lam1 = (lam4 * (1.0 + c33) - c23 * c23 * (1.0 + c11) - c13 * c13 * (1.0 + c22)
            + 2.0 * c12 * c13 * c23)
    lam2 = (lam4 * (1.0 + c44) - c24 * c24 * (1.0 + c11) - c14 * c14 * (1.0 + c22)
            + 2.0 * c12 * c14 * c24)
    return 4.0 / np.pi**2 / np.sqrt(lam4) * _arcsin(lam0 / np.sqrt(lam1 * lam2))


PAIR = {
    "square": {"ss": square_ss, "dd": square_dd, "d2s": square_d2s},
    "erf": {"ss": erf_ss, "dd": erf_dd, "d2s": erf_d2s},
}
TRIPLE = {"square": square_triple, "erf": erf_triple}
QUAD = {"square": square_quad, "erf": erf_quad}
