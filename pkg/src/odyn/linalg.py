"""Small dense linear-algebra helpers for covariance matrices."""
import numpy as np

PSD_TOL = 1e-10


def symmetrize(a):
    return 0.5 * (a + a.T)


def min_eig(a):
    return float(np.linalg.eigvalsh(symmetrize(np.asarray(a, dtype=float)))[0])


def is_psd(a, tol=PSD_TOL):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return True
    return min_eig(a) >= -tol


def pivoted_cholesky(a, rtol=1e-12):
    """Diagonally pivoted Cholesky factor of a PSD matrix.

    Returns ``L`` of shape ``(n, r)`` with ``L @ L.T ~= a`` where ``r`` is the
    numerical rank: the factorization stops once the largest remaining Schur
    diagonal drops below ``rtol * max(diag(a))``.  Rows of ``L`` follow the
    original ordering, columns follow pivot order, so ``L @ g`` with ``g`` a
    standard normal vector of length ``r`` samples ``N(0, a)``.

    The same algorithm is mirrored in the compiled kernel; keep them in sync.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    L = np.zeros((n, n))
    if n == 0:
        return L
    diag = np.array(np.diag(a), dtype=float)
    scale = max(float(diag.max()), 0.0)
    thresh = rtol * scale
    piv = np.arange(n)
    r = 0
    for j in range(n):
        # first index of the max keeps ties deterministic (kernel does the same)
        m = j + int(np.argmax(diag[piv[j:]]))
        best = diag[piv[m]]
        if best <= thresh or best <= 0.0:
            break
        piv[j], piv[m] = piv[m], piv[j]
        pj = piv[j]
        ljj = np.sqrt(best)
        L[pj, j] = ljj
        rest = piv[j + 1:]
        col = (a[rest, pj] - L[rest, :j] @ L[pj, :j]) / ljj
        L[rest, j] = col
        diag[rest] -= col * col
        r += 1
    return L[:, :r]


def factor_is_valid(a, L, rtol=1e-12, tol=PSD_TOL):
    """Accept ``L`` from :func:`pivoted_cholesky` only if ``a`` was PSD to tolerance.

    For a PSD input every entry of the leftover Schur complement is bounded by
    the stopping threshold; anything larger (or a negative leftover diagonal)
    means ``a`` is indefinite.  The compiled kernel applies the same test.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0 or L.shape[1] == a.shape[0]:
        return True  # a full-rank factor had only positive pivots
    scale = max(float(np.max(np.diag(a))), 0.0)
    bound = tol + rtol * scale + 1e-12 * scale
    return factor_residual(a, L) <= bound


def factor_residual(a, L):
    """Max-abs entry of ``a - L L^T``; large values flag an indefinite input."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - L @ L.T)))


def ordered_cholesky(cov, rtol=1e-12):
    """Batched lower Cholesky factor without pivoting, tolerant of semidefinite inputs.

    Slot order is preserved, so slot ``j`` depends only on the first ``j + 1``
    standard coordinates.  A Schur pivot below ``rtol`` times the largest
    diagonal gives a zero column; slightly negative pivots are treated as 0.
    ``cov`` has shape ``(..., n, n)``.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[-1]
    flat = cov.reshape(-1, n, n)
    L = np.zeros_like(flat)
    scale = np.max(np.diagonal(flat, axis1=1, axis2=2), axis=1, initial=0.0)
    thresh = rtol * np.maximum(scale, 0.0)
    for j in range(n):
        piv = flat[:, j, j] - np.sum(L[:, j, :j] ** 2, axis=1)
        ok = piv > thresh
        ljj = np.sqrt(np.where(ok, piv, 1.0))
        L[:, j, j] = np.where(ok, ljj, 0.0)
        if j + 1 < n:
            col = flat[:, j + 1:, j] - np.einsum("bik,bk->bi", L[:, j + 1:, :j], L[:, j, :j])
            L[:, j + 1:, j] = np.where(ok[:, None], col / ljj[:, None], 0.0)
    return L.reshape(cov.shape)
