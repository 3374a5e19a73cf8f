"""Expectations of activation products under low-dimensional zero-mean Gaussians.

Three evaluation routes share one interface: closed forms (square, erf),
tensorized Gauss-Hermite quadrature after factorizing the covariance, and
seeded Monte Carlo using the same factorization.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from . import closed_forms as cf
from .errors import UnsupportedStrategyError
from .linalg import ordered_cholesky, pivoted_cholesky

DEFAULT_ORDER = 40
DEFAULT_ORDER_4PT = 16
# per-dimension order grows like sqrt(variance) up to these caps
MAX_ORDER = 128
MAX_ORDER_4PT = 40
_CHUNK_ELEMS = 1 << 22

MODES = ("closed-form", "quadrature", "monte-carlo")


@dataclass(frozen=True)
class EvalStrategy:
    mode: str = "closed-form"
    order: Optional[int] = None
    n: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown strategy mode {self.mode!r}; expected one of {MODES}")
        if self.order is not None and self.order < 8:
            raise ValueError("quadrature order must be >= 8")
        if self.mode == "monte-carlo" and self.n < 1000:
            raise ValueError("Monte-Carlo strategy needs n >= 1000")

    @classmethod
    def closed(cls):
        return cls("closed-form")

    @classmethod
    def quadrature(cls, order=None):
        return cls("quadrature", order=order)

    @classmethod
    def monte_carlo(cls, n, seed=0):
        return cls("monte-carlo", n=n, seed=seed)

    def orders_for(self, variances, npoints=None):
        """Per-dimension Gauss-Hermite orders for slots with the given variances.

        A fixed ``order`` is used as is.  Otherwise the default order (40, or
        16 for four-point integrals) is raised in proportion to the slot's
        standard deviation: erf-type integrands have unit-scale features, so
        a wide Gaussian needs proportionally finer node spacing.
        """
        variances = np.atleast_1d(np.asarray(variances, dtype=float))
        if self.order is not None:
            return (self.order,) * variances.size
        four = (npoints or variances.size) >= 4
        base = DEFAULT_ORDER_4PT if four else DEFAULT_ORDER
        cap = MAX_ORDER_4PT if four else MAX_ORDER
        std = np.sqrt(np.clip(variances, 1.0, None))
        return tuple(int(min(cap, max(base, np.ceil(base * s)))) for s in std)


def default_strategy(*acts):
    if all(a.closed_form for a in acts) and len({a.kind for a in acts}) == 1:
        return EvalStrategy.closed()
    return EvalStrategy.quadrature()


# ---- nodes --------------------------------------------------------------

@lru_cache(maxsize=None)
def gh_nodes(order):
    """Probabilists' Gauss-Hermite nodes with weights normalized to 1."""
    x, w = hermegauss(order)
    return x, w / w.sum()


@lru_cache(maxsize=64)
def tensor_nodes(orders):
    """Tensor-product rule with ``orders[j]`` nodes along dimension ``j``."""
    if not orders:
        return np.zeros((0, 1)), np.ones(1)
    rules = [gh_nodes(o) for o in orders]
    grids = np.meshgrid(*[x for x, _ in rules], indexing="ij")
    wgrid = np.meshgrid(*[w for _, w in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids])
    wts = np.prod(np.stack([g.ravel() for g in wgrid]), axis=0)
    return pts, wts


def _mc_normals(dim, n, seed):
    return np.random.default_rng(seed).standard_normal((dim, n))


# ---- closed-form dispatch -----------------------------------------------

def _closed_kind(acts):
    kinds = {a.kind for a in acts}
    if not all(a.closed_form for a in acts) or len(kinds) != 1:
        names = ", ".join(a.name or a.kind for a in acts)
        raise UnsupportedStrategyError(
            f"closed-form evaluation needs a single square or erf activation, got {names}"
        )
    return kinds.pop()


# ---- pair expectations ----------------------------------------------------

_PAIR_FUNCS = {
    "ss": (lambda act: act.sigma, lambda act: act.sigma),
    "dd": (lambda act: act.dsigma, lambda act: act.dsigma),
    "d2s": (lambda act: act.d2sigma, lambda act: act.sigma),
}


def _pair_factor(caa, ccc, cac):
    l11 = np.sqrt(np.clip(caa, 0.0, None))
    safe = np.where(l11 > 0, l11, 1.0)
    l21 = np.where(l11 > 0, cac / safe, 0.0)
    l22 = np.sqrt(np.clip(ccc - l21 * l21, 0.0, None))
    return l11, l21, l22


def expect_pair(kind, caa, ccc, cac, act_a, act_c, strat):
    """Batched ``E[f(a) g(c)]`` with ``(f, g)`` = (sigma, sigma), (sigma', sigma') or (sigma'', sigma).

    ``act_a`` supplies ``f``, ``act_c`` supplies ``g``.
    """
    caa, ccc, cac = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (caa, ccc, cac)))
    if strat.mode == "closed-form":
        fam = _closed_kind((act_a, act_c))
        return cf.PAIR[fam][kind](caa, ccc, cac)
    fa, fc = _PAIR_FUNCS[kind]
    f, g = fa(act_a), fc(act_c)
    if f is None:
        raise UnsupportedStrategyError(f"{act_a!r} has no second derivative")
    shape = caa.shape
    l11, l21, l22 = (v.ravel() for v in _pair_factor(caa, ccc, cac))
    if strat.mode == "quadrature":
        load = [np.max(l11 * l11 + l21 * l21, initial=0.0), np.max(l22 * l22, initial=0.0)]
        z, w = tensor_nodes(strat.orders_for(load))
    else:
        z = _mc_normals(2, strat.n, strat.seed)
        w = np.full(strat.n, 1.0 / strat.n)
    out = np.empty(l11.size)
    step = max(1, _CHUNK_ELEMS // len(w))
    for s in range(0, l11.size, step):
        sl = slice(s, s + step)
        a = l11[sl, None] * z[0]
        c = l21[sl, None] * z[0] + l22[sl, None] * z[1]
        out[sl] = (f(a) * g(c)) @ w
    return out.reshape(shape)


# ---- three- and four-point expectations -----------------------------------

def _batched_expect(C, integrand, npoints, strat):
    C = np.asarray(C, dtype=float)
    shape = C.shape[:-2]
    flat = C.reshape(-1, npoints, npoints)
    F = ordered_cholesky(flat)
    if strat.mode == "quadrature":
        # a coordinate shared by several slots sees their summed variance
        load = np.sum(F * F, axis=1)
        z, w = tensor_nodes(strat.orders_for(np.max(load, axis=0, initial=0.0)))
    else:
        z = _mc_normals(npoints, strat.n, strat.seed)
        w = np.full(strat.n, 1.0 / strat.n)
    out = np.empty(flat.shape[0])
    step = max(1, _CHUNK_ELEMS // (len(w) * npoints))
    for s in range(0, flat.shape[0], step):
        X = F[s:s + step] @ z  # (batch, npoints, nodes)
        out[s:s + step] = integrand(X) @ w
    return out.reshape(shape)


def expect_triple(C, act_a, act_c, strat):
    """Batched ``E[sigma_a'(a) b sigma_c(c)]`` for covariances ``C[..., 3, 3]`` over (a, b, c)."""
    if strat.mode == "closed-form":
        return cf.TRIPLE[_closed_kind((act_a, act_c))](np.asarray(C, dtype=float))

    def integrand(X):
        return act_a.dsigma(X[:, 0]) * X[:, 1] * act_c.sigma(X[:, 2])

    return _batched_expect(C, integrand, 3, strat)


def expect_quad(C, acts, strat):
    """Batched ``E[s_a'(a) s_b'(b) s_c(c) s_e(e)]`` over (a, b, c, e)."""
    if strat.mode == "closed-form":
        return cf.QUAD[_closed_kind(tuple(acts))](np.asarray(C, dtype=float))
    fa, fb, fc, fe = acts

    def integrand(X):
        return fa.dsigma(X[:, 0]) * fb.dsigma(X[:, 1]) * fc.sigma(X[:, 2]) * fe.sigma(X[:, 3])

    return _batched_expect(C, integrand, 4, strat)


# ---- single-query interface -------------------------------------------------

KINDS = {
    # kind: (arity, per-slot role) with roles s=sigma, d=sigma', l=linear, D=sigma''
    "ss": (2, "ss"),
    "dls": (3, "dls"),
    "dd": (2, "dd"),
    "ddss": (4, "ddss"),
    "Ds": (2, "Ds"),
}
_ALIASES = {
    "E[σ(a)σ(b)]": "ss",
    "E[σ'(a)·b·σ(c)]": "dls",
    "E[σ'(a)σ'(b)]": "dd",
    "E[σ'(a)σ'(b)σ(c)σ(e)]": "ddss",
    "E[σ''(a)σ(b)]": "Ds",
}


@dataclass(frozen=True, eq=False)
class CorrelationQuery:
    """One low-order correlation under ``N(0, cov)``.

    ``acts`` optionally overrides the activation per slot (e.g. a teacher
    activation on the last slot); linear slots ignore it.
    """

    kind: str
    cov: np.ndarray
    acts: Optional[Tuple] = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown correlation kind {self.kind!r}")
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        n = KINDS[kind][0]
        if cov.shape != (n, n):
            raise ValueError(f"kind {kind} needs a {n}x{n} covariance, got {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov)[0] < -1e-10:
            raise ValueError("covariance must be PSD")
        if self.acts is not None and len(self.acts) != n:
            raise ValueError("acts must give one entry per slot")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "cov", cov)


def _slot_funcs(query, act):
    roles = KINDS[query.kind][1]
    acts = query.acts or (None,) * len(roles)
    funcs = []
    for role, a in zip(roles, acts):
        a = a or act
        if role == "s":
            funcs.append(a.sigma)
        elif role == "d":
            funcs.append(a.dsigma)
        elif role == "D":
            if a.d2sigma is None:
                raise UnsupportedStrategyError(f"{a!r} has no second derivative")
            funcs.append(a.d2sigma)
        else:
            funcs.append(lambda x: x)
    return funcs


def correlation(query, act, strat=None, return_se=False):
    """Evaluate a correlation query.

    With ``return_se=True`` a Monte-Carlo strategy also returns the standard
    error of the estimate (0 for deterministic strategies).
    """
    if strat is None:
        strat = default_strategy(act)
    cov = query.cov
    slot_acts = tuple((query.acts or (None,) * cov.shape[0])[i] or act for i in range(cov.shape[0]))
    if strat.mode == "closed-form":
        roles = KINDS[query.kind][1]
        sig_acts = tuple(a for a, r in zip(slot_acts, roles) if r != "l")
        fam = _closed_kind(sig_acts)
        if query.kind in ("ss", "dd", "Ds"):
            key = {"ss": "ss", "dd": "dd", "Ds": "d2s"}[query.kind]
            val = cf.PAIR[fam][key](cov[0, 0], cov[1, 1], cov[0, 1])
        elif query.kind == "dls":
            val = cf.TRIPLE[fam](cov)
        else:
            val = cf.QUAD[fam](cov)
        val = float(val)
        return (val, 0.0) if return_se else val

    funcs = _slot_funcs(query, act)
    L = pivoted_cholesky(cov)
    r = L.shape[1]
    if strat.mode == "quadrature":
        var = np.sum(L * L, axis=0)  # variance carried by each factor column
        z, w = tensor_nodes(strat.orders_for(var, npoints=cov.shape[0]))
        X = L @ z
        vals = np.prod([f(X[i]) for i, f in enumerate(funcs)], axis=0)
        val = float(vals @ w)
        return (val, 0.0) if return_se else val
    z = _mc_normals(cov.shape[0], strat.n, strat.seed)[:r]
    X = L @ z
    vals = np.prod([f(X[i]) for i, f in enumerate(funcs)], axis=0)
    val = float(vals.mean())
    if return_se:
        return val, float(vals.std(ddof=1) / np.sqrt(strat.n))
    return val
