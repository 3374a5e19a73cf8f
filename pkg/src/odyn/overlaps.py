"""Overlap (sufficient-statistics) data model.

Conventions: inputs are ``x ~ N(0, I_d / d)``, overlaps carry a ``1/d``
normalization (``Q = W W^T / d``, ``M = W W*^T / d``, ``P = W* W*^T / d``), so
a student drawn with per-coordinate variance ``sigma0**2`` has ``Q_ii ~
sigma0**2`` and ``M_ir = O(1/sqrt(d))`` when the teacher rows have norm
``sqrt(d)``.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

from .errors import (
    NullOrthogonalSpaceError,
    PSDViolation,
    SingularTeacherError,
    TeacherRankError,
)
from .linalg import PSD_TOL, min_eig, pivoted_cholesky, symmetrize

TEACHER_RETRIES = 100


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TeacherSpec:
    k: int
    d: int
    mode: str = "orthonormal-rows"
    scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("orthonormal-rows", "gaussian-rows"):
            raise ValueError(f"unknown teacher mode {self.mode!r}")
        if not 1 <= self.k <= self.d:
            raise ValueError(f"teacher needs 1 <= k <= d, got k={self.k}, d={self.d}")
        if not self.scale > 0:
            raise ValueError("teacher scale must be positive")


@dataclass(frozen=True, eq=False)
class OverlapState:
    """Student-student ``Q`` (p x p), student-teacher ``M`` (p x k), teacher ``P`` (k x k)."""

    Q: np.ndarray
    M: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if Q.shape != (M.shape[0], M.shape[0]) or P.shape != (M.shape[1], M.shape[1]):
            raise ValueError(f"inconsistent shapes Q{Q.shape} M{M.shape} P{P.shape}")
        object.__setattr__(self, "Q", _frozen(symmetrize(Q)))
        object.__setattr__(self, "M", _frozen(M))
        object.__setattr__(self, "P", _frozen(symmetrize(P)))

    @property
    def p(self):
        return self.M.shape[0]

    @property
    def k(self):
        return self.M.shape[1]

    def omega(self):
        return np.block([[self.Q, self.M], [self.M.T, self.P]])

    def min_eig(self):
        return min_eig(self.omega())

    def validate(self, K=None, tol=PSD_TOL):
        lam = self.min_eig()
        if lam < -tol:
            raise PSDViolation(f"overlap matrix not PSD: min eigenvalue {lam:.3e}")
        if K is not None and np.max(np.diag(self.Q)) > K:
            raise ValueError(f"max Q_ii = {np.max(np.diag(self.Q)):.4g} exceeds K = {K}")
        return self

    def permuted(self, perm):
        perm = np.asarray(perm)
        return OverlapState(self.Q[np.ix_(perm, perm)], self.M[perm], self.P)

    def to_dict(self):
        return {"Q": matrix_to_json(self.Q), "M": matrix_to_json(self.M), "P": matrix_to_json(self.P)}

    @classmethod
    def from_dict(cls, obj):
        return cls(matrix_from_json(obj["Q"]), matrix_from_json(obj["M"]), matrix_from_json(obj["P"]))


@dataclass(frozen=True, eq=False)
class ReducedMFState:
    """Mean-field reduced parameters: ``M`` (p x k) and ``q = diag(Q_perp)``."""

    M: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if q.shape != (M.shape[0],):
            raise ValueError(f"q must have length p={M.shape[0]}, got {q.shape}")
        object.__setattr__(self, "M", _frozen(M))
        object.__setattr__(self, "q", _frozen(q))

    @property
    def p(self):
        return self.M.shape[0]

    @property
    def k(self):
        return self.M.shape[1]

    def validate(self, tol=PSD_TOL):
        if np.min(self.q) < -tol:
            raise PSDViolation(f"negative orthogonal norm q_min={np.min(self.q):.3e}")
        return self

    def permuted(self, perm):
        perm = np.asarray(perm)
        return ReducedMFState(self.M[perm], self.q[perm])

    def to_dict(self):
        return {"M": matrix_to_json(self.M), "q": matrix_to_json(self.q[:, None])}

    @classmethod
    def from_dict(cls, obj):
        return cls(matrix_from_json(obj["M"]), matrix_from_json(obj["q"])[:, 0])


@dataclass(frozen=True, eq=False)
class WeightState:
    W: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(np.atleast_2d(self.W)))

    @property
    def p(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.W.shape[1]


@dataclass(frozen=True)
class XiModel:
    """Law of an off-diagonal entry of the mean-field random matrix.

    ``xi = <g, g'>`` for independent uniform unit vectors on the sphere of the
    ``n_orth = d - k`` dimensional orthogonal space; its density on [-1, 1] is
    proportional to ``(1 - x^2)^((n_orth - 3) / 2)``.
    """

    n_orth: int
    strategy: str = "quadrature"
    order: int = 64
    n_samples: int = 4096
    seed: int = 0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.n_orth < 1:
            raise NullOrthogonalSpaceError(
                f"d - k = {self.n_orth}: the orthogonal space is null, Q_perp = 0 is the only "
                "consistent state and there is nothing to average over"
            )
        if self.strategy not in ("quadrature", "monte-carlo"):
            raise ValueError(f"unknown xi strategy {self.strategy!r}")

    @classmethod
    def for_dims(cls, d, k, **kw):
        return cls(n_orth=d - k, **kw)

    @property
    def variance(self):
        return 1.0 / self.n_orth

    def sample(self, size, rng):
        """Exact draws of ``z_1 / ||z||`` with ``z ~ N(0, I_{n_orth})``."""
        z1 = rng.standard_normal(size)
        if self.n_orth == 1:
            return np.sign(z1) + (z1 == 0)
        rest = rng.chisquare(self.n_orth - 1, size)
        return z1 / np.sqrt(z1 * z1 + rest)

    def nodes(self):
        """Nodes and weights (summing to 1) representing the law of xi.

        Quadrature uses Gauss-Jacobi with the exact sphere-coordinate weight; the
        Monte-Carlo strategy freezes one seeded node set so the resulting vector
        field stays deterministic.
        """
        if "nodes" not in self._cache:
            if self.strategy == "monte-carlo":
                x = self.sample(self.n_samples, np.random.default_rng(self.seed))
                w = np.full(self.n_samples, 1.0 / self.n_samples)
            elif self.n_orth == 1:
                x, w = np.array([-1.0, 1.0]), np.array([0.5, 0.5])
            else:
                alpha = 0.5 * (self.n_orth - 3)
                x, w = roots_jacobi(self.order, alpha, alpha)
                w = w / w.sum()
            self._cache["nodes"] = (x, w)
        return self._cache["nodes"]


def matrix_to_json(a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel(order="C")]}


def matrix_from_json(obj):
    return np.array(obj["data"], dtype=float).reshape(obj["shape"])


def make_teacher(spec, rng_seed):
    """Teacher weights ``W*`` (k x d) and Gram ``P = W* W*^T / d``."""
    rng = np.random.default_rng(rng_seed)
    k, d = spec.k, spec.d
    for _ in range(TEACHER_RETRIES):
        G = rng.standard_normal((k, d))
        if np.linalg.matrix_rank(G) < k:
            continue
        if spec.mode == "orthonormal-rows":
            qmat, _ = np.linalg.qr(G.T)
            Wt = spec.scale * np.sqrt(d) * qmat.T
        else:
            Wt = spec.scale * G
        P = Wt @ Wt.T / d
        if spec.mode == "orthonormal-rows":
            # exact by construction; strip rounding so that P = s^2 I bitwise
            P = spec.scale**2 * np.eye(k)
        return Wt, symmetrize(P)
    raise TeacherRankError(f"teacher rank < {k} after {TEACHER_RETRIES} draws")


def init_student(p, d, sigma0, rng_seed):
    """Rows i.i.d. ``N(0, sigma0^2 I_d)`` so that ``E[Q_ii] = sigma0^2``."""
    if p < 1 or d < 1:
        raise ValueError("need p >= 1 and d >= 1")
    rng = np.random.default_rng(rng_seed)
    return WeightState(sigma0 * rng.standard_normal((p, d)))


def overlaps_of(W, Wt, P=None):
    W = W.W if isinstance(W, WeightState) else np.atleast_2d(W)
    d = W.shape[1]
    if Wt.shape[1] != d:
        raise ValueError("student and teacher input dimensions differ")
    if P is None:
        P = Wt @ Wt.T / d
    return OverlapState(W @ W.T / d, W @ Wt.T / d, P)


def _solve_p(P, rhs):
    try:
        c = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise SingularTeacherError("teacher Gram P is not positive definite") from exc
    if np.min(np.diag(c)) ** 2 < 1e-14 * np.max(np.diag(P)):
        raise SingularTeacherError("teacher Gram P is numerically singular")
    y = np.linalg.solve(c, rhs)
    return np.linalg.solve(c.T, y)


def projection_gram(M, P):
    """``M P^{-1} M^T``: Gram of the student components inside the teacher span."""
    return symmetrize(M @ _solve_p(P, M.T))


def q_perp(state):
    return symmetrize(state.Q - projection_gram(state.M, state.P))


def reduce_to_mf(state, tol=PSD_TOL):
    q = np.diag(q_perp(state)).copy()
    if np.min(q) < -tol:
        raise PSDViolation(f"diag(Q_perp) has entry {np.min(q):.3e} < -{tol}")
    if np.any(q < 0):
        warnings.warn("clipping rounding-level negative q to 0", RuntimeWarning, stacklevel=2)
        q = np.clip(q, 0.0, None)
    return ReducedMFState(state.M, q)


def bar_omega(mf, P):
    if np.min(mf.q) < 0:
        raise ValueError("q must be nonnegative")
    return OverlapState(projection_gram(mf.M, P) + np.diag(mf.q), mf.M, P)


def sample_tilde_omega(mf, P, xi, rng):
    """One draw of the mean-field overlap matrix with random off-diagonal Xi.

    The result need not be PSD as a whole (entries of Xi are drawn
    independently); each 2 x 2 student block is.
    """
    if np.min(mf.q) < 0:
        raise ValueError("q must be nonnegative")
    p = mf.p
    base = projection_gram(mf.M, P)
    Xi = np.eye(p)
    iu = np.triu_indices(p, 1)
    vals = xi.sample(len(iu[0]), rng)
    Xi[iu] = vals
    Xi[(iu[1], iu[0])] = vals
    s = np.sqrt(mf.q)
    return OverlapState(base + s[:, None] * Xi * s[None, :], mf.M, P)


def weights_from_overlaps(state, Wt, rng):
    """Student weights ``W`` whose overlaps with ``Wt`` reproduce ``state``.

    The in-span part is ``M P^{-1} W*``; the orthogonal part uses a random
    orthonormal frame of the complement of the teacher span scaled by
    ``sqrt(d)`` and a factor of ``Q_perp``.  Requires ``d - k >= rank(Q_perp)``.
    """
    k, d = Wt.shape
    P = Wt @ Wt.T / d
    qp = q_perp(OverlapState(state.Q, state.M, P))
    F = pivoted_cholesky(qp)
    r = F.shape[1]
    if r > d - k:
        raise ValueError(f"rank(Q_perp)={r} does not fit in d-k={d - k} orthogonal dimensions")
    W_par = _solve_p(P, state.M.T).T @ Wt
    # orthonormal basis of the complement of the teacher row space
    basis, _ = np.linalg.qr(np.hstack([Wt.T, rng.standard_normal((d, r))]))
    U = basis[:, k:k + r].T
    return W_par + np.sqrt(d) * F @ U
