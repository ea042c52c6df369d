"""Dense linear-algebra primitives: truncated SVD and sign-fixed thin QR.

Both routines return deterministic factors. Singular vectors are flipped
so the first nonzero entry of every column is non-negative, and the QR
factor is flipped so that ``R`` has a non-negative diagonal.
"""

import numpy as np

from .errors import DimensionError, DomainError, RankError

RANK_TOL = 1e-12


def _as_finite_matrix(a, name="A"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    return a


def fix_column_signs(u):
    """Flip columns so the first nonzero entry of each is non-negative.

    Entries below ``1e-12`` times the column's max magnitude count as zero,
    which keeps the choice stable against rounding noise.
    """
    u = np.array(u, dtype=np.float64, copy=True)
    if u.size == 0:
        return u
    mag = np.abs(u)
    thresh = RANK_TOL * mag.max(axis=0)
    significant = mag > thresh
    first = np.argmax(significant, axis=0)
    lead = u[first, np.arange(u.shape[1])]
    u[:, lead < 0] *= -1.0
    return u


def top_p_left_singular_vectors(a, p, return_singular_values=False):
    """Top-``p`` left singular vectors of ``a``.

    Parameters
    ----------
    a : array_like, shape (d, m)
        Data matrix; for subspace fitting the points are its columns.
    p : int
        Number of singular vectors, ``p <= min(d, m)``.
    return_singular_values : bool
        Also return the leading ``p`` singular values.

    Returns
    -------
    U : ndarray, shape (d, p)
        Orthonormal columns ordered by non-increasing singular value.
    s : ndarray, shape (p,)
        Only if ``return_singular_values``.
    """
    a = _as_finite_matrix(a)
    d, m = a.shape
    p = int(p)
    if p < 0 or p > min(d, m):
        raise DimensionError(f"p={p} exceeds min(d, m)={min(d, m)}")
    if p == 0:
        u, s = np.zeros((d, 0)), np.zeros(0)
    else:
        u, s, _ = np.linalg.svd(a, full_matrices=False)
        u, s = fix_column_signs(u[:, :p]), s[:p]
    if return_singular_values:
        return u, s
    return u


def thin_qr_q(a):
    """Q factor of the thin QR decomposition with ``diag(R) >= 0``.

    Raises
    ------
    RankError
        If some ``|R_ii| < 1e-12`` (``a`` is numerically rank deficient).
    """
    a = _as_finite_matrix(a)
    d, p = a.shape
    if p > d:
        raise DimensionError(f"thin QR needs cols <= rows, got {a.shape}")
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.diag(r)
    if np.any(np.abs(diag) < RANK_TOL):
        raise RankError(f"matrix is rank deficient (min |R_ii| = {np.abs(diag).min():.3e})")
    return q * np.where(diag < 0, -1.0, 1.0)


def projector_distance(u, v):
    """Frobenius distance between the orthogonal projectors onto span(u), span(v)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return float(np.linalg.norm(u @ u.T - v @ v.T))


def principal_angles(u, v):
    """Principal angles (radians, ascending) between two orthonormal frames."""
    s = np.linalg.svd(np.asarray(u).T @ np.asarray(v), compute_uv=False)
    return np.sort(np.arccos(np.clip(s, -1.0, 1.0)))


def complete_basis(partial, d, p, candidates=None):
    """Extend orthonormal columns ``partial`` to a ``d x p`` orthonormal frame.

    Missing directions are taken greedily from ``candidates`` (columns),
    choosing at each step the candidate with the largest component outside
    the current span; the standard basis is appended as a last resort.
    """
    partial = np.asarray(partial, dtype=np.float64).reshape(d, -1)
    cols = [partial[:, j] for j in range(partial.shape[1])]
    pool = [np.eye(d)]
    if candidates is not None:
        pool.insert(0, np.asarray(candidates, dtype=np.float64).reshape(d, -1))
    pool = np.hstack(pool)
    while len(cols) < p:
        basis = np.column_stack(cols) if cols else np.zeros((d, 0))
        resid = pool - basis @ (basis.T @ pool)
        norms = np.linalg.norm(resid, axis=0)
        j = int(np.argmax(norms))
        if norms[j] < 1e-8:
            raise RankError("cannot complete basis")
        v = resid[:, j] / norms[j]
        # second pass keeps orthogonality at machine precision
        v -= basis @ (basis.T @ v)
        cols.append(v / np.linalg.norm(v))
    return np.column_stack(cols[:p]) if p else np.zeros((d, 0))
