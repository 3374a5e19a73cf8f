# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SGD step kernels.

Mirror of ``odyn._purepy`` for the built-in activations (codes: 0 square,
1 erf(x / sqrt 2), 2 clipped square).  The pivoted factorization and its PSD
acceptance test follow ``odyn.linalg`` step for step.
"""
import numpy as np

from libc.math cimport erf, exp, fabs, sqrt, isfinite

cdef enum:
    OK = 0
    NON_FINITE = 1
    NOT_PSD = 2

cdef double SQRT_HALF = 0.7071067811865476
cdef double SQRT_2_OVER_PI = 0.7978845608028654


cdef inline double act_sigma(double x, int code, double clip) nogil:
    cdef double v
    if code == 1:
        return erf(x * SQRT_HALF)
    v = x * x
    if code == 2 and v > clip:
        return clip
    return v


cdef inline double act_dsigma(double x, int code, double clip) nogil:
    if code == 1:
        return SQRT_2_OVER_PI * exp(-0.5 * x * x)
    if code == 2 and fabs(x) >= sqrt(clip):
        return 0.0
    return 2.0 * x


cdef int pivoted_factor(double[:, ::1] omega, double[:, ::1] L, double[::1] diag,
                        Py_ssize_t[::1] perm, double rtol, double tol) nogil:
    """Fill ``L`` (zeroed by the caller) and return its rank, or -1 if not PSD."""
    cdef Py_ssize_t n = omega.shape[0]
    cdef Py_ssize_t j, t, u, m, a, b, pj, tmp
    cdef double scale = 0.0, thresh, best, ljj, v, resid, bound
    cdef int r = 0
    for a in range(n):
        diag[a] = omega[a, a]
        perm[a] = a
        if diag[a] > scale:
            scale = diag[a]
    thresh = rtol * scale
    for j in range(n):
        m = j
        best = diag[perm[j]]
        for t in range(j + 1, n):
            if diag[perm[t]] > best:
                best = diag[perm[t]]
                m = t
        if best <= thresh or best <= 0.0:
            break
        tmp = perm[j]
        perm[j] = perm[m]
        perm[m] = tmp
        pj = perm[j]
        ljj = sqrt(best)
        L[pj, j] = ljj
        for t in range(j + 1, n):
            a = perm[t]
            v = omega[a, pj]
            for u in range(j):
                v -= L[a, u] * L[pj, u]
            v /= ljj
            L[a, j] = v
            diag[a] -= v * v
        r += 1
    if r == n:
        return r  # every pivot was positive: positive definite
    bound = tol + rtol * scale + 1e-12 * scale
    for a in range(n):
        for b in range(n):
            resid = omega[a, b]
            for u in range(r):
                resid -= L[a, u] * L[b, u]
            if fabs(resid) > bound:
                return -1
    return r


def weight_steps(double[:, ::1] W, double[:, ::1] Wt, double[:, ::1] X, double[::1] z,
                 double gamma, double delta, int code, int code_t, double clip, double clip_t):
    """In-place SGD steps; returns ``(status, steps_done)``."""
    cdef Py_ssize_t p = W.shape[0], k = Wt.shape[0], d = W.shape[1], n = z.shape[0]
    cdef Py_ssize_t t, i, r, c
    cdef double[::1] coef = np.empty(p)
    cdef double lam, err, sq_delta = sqrt(delta), inv_p = 1.0 / p, inv_k = 1.0 / k
    cdef double step = gamma / p, mean_s, mean_t, v
    cdef int status = OK
    cdef Py_ssize_t done = n
    with nogil:
        for t in range(n):
            mean_t = 0.0
            for r in range(k):
                lam = 0.0
                for c in range(d):
                    lam += Wt[r, c] * X[t, c]
                mean_t += act_sigma(lam, code_t, clip_t)
            mean_s = 0.0
            for i in range(p):
                lam = 0.0
                for c in range(d):
                    lam += W[i, c] * X[t, c]
                mean_s += act_sigma(lam, code, clip)
                coef[i] = act_dsigma(lam, code, clip)
            err = mean_t * inv_k - mean_s * inv_p + sq_delta * z[t]
            for i in range(p):
                v = step * coef[i] * err
                for c in range(d):
                    W[i, c] += v * X[t, c]
                    if not isfinite(W[i, c]):
                        status = NON_FINITE
            if status != OK:
                done = t + 1
                break
    return status, done


def overlap_steps(double[:, ::1] Q, double[:, ::1] M, double[:, ::1] P,
                  double[:, ::1] G, double[::1] chi, double[::1] z,
                  double gamma, double delta, Py_ssize_t d,
                  int code, int code_t, double clip, double clip_t,
                  double rtol=1e-12, double tol=1e-10):
    """In-place overlap-space steps; returns ``(status, steps_done)``."""
    cdef Py_ssize_t p = Q.shape[0], k = P.shape[0], n = p + k, steps = z.shape[0]
    cdef Py_ssize_t t, i, j, a, b, u, m_norm
    cdef int rank
    cdef double[:, ::1] omega = np.empty((n, n))
    cdef double[:, ::1] L = np.empty((n, n))
    cdef double[::1] diag = np.empty(n)
    cdef double[::1] lam = np.empty(n)
    cdef double[::1] dse = np.empty(p)
    cdef Py_ssize_t[::1] perm = np.empty(n, dtype=np.intp)
    cdef double err, s, mean_s, mean_t, ds, c1, c2, sq_delta = sqrt(delta)
    cdef double inv_p = 1.0 / p, inv_k = 1.0 / k
    cdef int status = OK
    cdef Py_ssize_t done = steps
    m_norm = n if n < d else d
    c1 = gamma / (p * d)
    with nogil:
        for t in range(steps):
            for a in range(p):
                for b in range(p):
                    omega[a, b] = Q[a, b]
                for b in range(k):
                    omega[a, p + b] = M[a, b]
                    omega[p + b, a] = M[a, b]
            for a in range(k):
                for b in range(k):
                    omega[p + a, p + b] = P[a, b]
            for a in range(n):
                for b in range(n):
                    L[a, b] = 0.0
            rank = pivoted_factor(omega, L, diag, perm, rtol, tol)
            if rank < 0:
                status = NOT_PSD
                done = t
                break
            for a in range(n):
                lam[a] = 0.0
                for u in range(rank):
                    lam[a] += L[a, u] * G[t, u]
            s = chi[t]
            for u in range(m_norm):
                s += G[t, u] * G[t, u]
            mean_s = 0.0
            for i in range(p):
                mean_s += act_sigma(lam[i], code, clip)
            mean_t = 0.0
            for a in range(k):
                mean_t += act_sigma(lam[p + a], code_t, clip_t)
            err = mean_t * inv_k - mean_s * inv_p + sq_delta * z[t]
            for i in range(p):
                dse[i] = act_dsigma(lam[i], code, clip) * err
            c2 = gamma * gamma * s / (<double>p * p * d * d)
            for i in range(p):
                for a in range(k):
                    M[i, a] += c1 * (dse[i] * lam[p + a])
            for i in range(p):
                for j in range(i, p):
                    ds = c1 * (dse[i] * lam[j] + dse[j] * lam[i]) + c2 * (dse[i] * dse[j])
                    Q[i, j] += ds
                    if j != i:
                        Q[j, i] = Q[i, j]
            for i in range(p):
                if not isfinite(dse[i]):
                    status = NON_FINITE
            if status != OK:
                done = t + 1
                break
    return status, done
