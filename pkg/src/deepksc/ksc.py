"""k-subspace clustering: residuals, assignment, subspace refits and the
plain alternating loop.

Points are rows of an ``(n, d)`` array. A membership is an integer label
vector of length ``n`` with values in ``[0, k)``. A subspace set is any
sequence of :class:`~deepksc.grassmann.SubspaceBasis` sharing ``(d, p)``.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, EmptyClusterError
from .grassmann import SubspaceBasis
from .linalg import complete_basis, top_p_left_singular_vectors

SINGULAR_TOL = 1e-10


@dataclass
class KscConfig:
    k: int
    p: int
    outlier_fraction: float = 0.0
    max_iters: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if self.k < 1 or self.p < 1:
            raise ValueError("k and p must be positive")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError(f"outlier_fraction must lie in [0, 1), got {self.outlier_fraction}")


class KscResult(NamedTuple):
    subspaces: list
    labels: np.ndarray
    trace: list


def stack_bases(subs):
    """Stack a subspace set into a ``(k, d, p)`` array."""
    subs = list(subs)
    if not subs:
        raise DimensionError("empty subspace set")
    shapes = {s.basis.shape for s in subs}
    if len(shapes) != 1:
        raise DimensionError(f"subspaces disagree on (d, p): {sorted(shapes)}")
    return np.stack([s.basis for s in subs])


def _points(points, d=None):
    z = np.asarray(points, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2:
        raise DimensionError(f"points must be (n, d), got shape {z.shape}")
    if d is not None and z.shape[1] != d:
        raise DimensionError(f"points have dimension {z.shape[1]}, subspaces {d}")
    return z


def residual(z, s):
    """Squared distance ``||z - S S^T z||^2`` from ``z`` to span(S)."""
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.shape[0] != s.d:
        raise DimensionError(f"point has dimension {z.shape[0]}, subspace {s.d}")
    proj = s.basis.T @ z
    return max(float(z @ z - proj @ proj), 0.0)


def residuals(points, subs):
    """``(n, k)`` matrix of squared distances from every point to every subspace."""
    bases = stack_bases(subs)
    z = _points(points, bases.shape[1])
    sq = np.einsum("nd,nd->n", z, z)
    coords = np.einsum("kdp,nd->nkp", bases, z)
    return np.maximum(sq[:, None] - np.einsum("nkp,nkp->nk", coords, coords), 0.0)


def assign(points, subs):
    """Label each point with its nearest subspace (ties go to the lowest index)."""
    return np.argmin(residuals(points, subs), axis=1)


def _check_labels(labels, n, k=None):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels.shape}")
    if k is not None and n and (labels.min() < 0 or labels.max() >= k):
        raise DimensionError(f"labels must lie in [0, {k})")
    return labels.astype(np.intp, copy=False)


def objective(points, subs, labels):
    """Sum of residuals of each point to its assigned subspace."""
    r = residuals(points, subs)
    labels = _check_labels(labels, r.shape[0], r.shape[1])
    return float(r[np.arange(r.shape[0]), labels].sum())


def n_trimmed(n_i, fraction, p):
    """Number of points dropped from a cluster of size ``n_i``.

    ``ceil(fraction * n_i)``, but never leaving fewer than ``p`` survivors.
    """
    # guard against 0.1 * 110 = 11.000000000000002
    drop = math.ceil(fraction * n_i - 1e-9) if fraction > 0 else 0
    return max(0, min(drop, n_i - p))


def trimmed_objective(points, subs, labels, fraction):
    """Objective over survivors only, trimming each cluster as the SVD update does."""
    r = residuals(points, subs)
    labels = _check_labels(labels, r.shape[0], r.shape[1])
    own = r[np.arange(r.shape[0]), labels]
    p = subs[0].p
    total = 0.0
    for i in range(r.shape[1]):
        ri = np.sort(own[labels == i])
        total += float(ri[: ri.size - n_trimmed(ri.size, fraction, p)].sum())
    return total


def fit_basis(z, p, fallback=None):
    """Top-``p`` left singular basis of the columns ``z.T``.

    When ``z`` has rank below ``p`` the frame is completed from ``fallback``
    columns (then the standard basis), orthogonalised against the fitted part.
    """
    z = _points(z)
    d = z.shape[1]
    q = min(p, z.shape[0])
    u, s = top_p_left_singular_vectors(z.T, q, return_singular_values=True)
    keep = s > SINGULAR_TOL * max(s[0], 1.0) if q else np.zeros(0, dtype=bool)
    u = u[:, keep]
    if u.shape[1] < p:
        u = complete_basis(u, d, p, candidates=fallback)
    return SubspaceBasis(u)


def svd_update(points, labels, cluster, p, outlier_fraction=0.0, current=None):
    """Refit one subspace from its members after dropping the farthest ones.

    Members are ranked by residual to ``current`` (the basis before the
    update) and the ``n_trimmed`` farthest are discarded. Without a current
    basis the untrimmed fit is used for the ranking.

    Raises
    ------
    EmptyClusterError
        If no point carries label ``cluster``.
    """
    z = _points(points)
    labels = _check_labels(labels, z.shape[0])
    zi = z[labels == cluster]
    if zi.shape[0] == 0:
        raise EmptyClusterError(cluster)
    drop = n_trimmed(zi.shape[0], outlier_fraction, p)
    fallback = None if current is None else current.basis
    if drop:
        ref = current if current is not None else fit_basis(zi, p)
        proj = zi @ ref.basis
        r = np.einsum("nd,nd->n", zi, zi) - np.einsum("np,np->n", proj, proj)
        # stable sort keeps the choice deterministic under ties
        order = np.argsort(r, kind="stable")
        zi = zi[order[: zi.shape[0] - drop]]
    return fit_basis(zi, p, fallback=fallback)


def euclidean_subspace_grad(points, labels, cluster, s):
    """Euclidean gradient ``-2 Z Z^T S`` of the cluster's residual sum w.r.t. ``S``."""
    z = _points(points, s.d)
    labels = _check_labels(labels, z.shape[0])
    zi = z[labels == cluster]
    return -2.0 * zi.T @ (zi @ s.basis)


def reseed_empty(points, subs, labels):
    """Repair empty clusters.

    Each empty cluster takes (up to) the ``p`` points with the largest
    residuals to their own subspaces, drawn from clusters that can spare
    them, and gets a basis fitted to those points.

    Returns
    -------
    subs : list of SubspaceBasis
    labels : ndarray
        Copy of ``labels`` with the moved points relabelled.
    """
    z = _points(points)
    subs = list(subs)
    k, p = len(subs), subs[0].p
    labels = _check_labels(labels, z.shape[0], k).copy()
    counts = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return subs, labels
    r = residuals(z, subs)
    own = r[np.arange(z.shape[0]), labels]
    order = np.argsort(-own, kind="stable")
    for c in empty:
        taken = []
        for j in order:
            if len(taken) == p:
                break
            if counts[labels[j]] > 1:
                counts[labels[j]] -= 1
                labels[j] = c
                counts[c] += 1
                taken.append(j)
        if not taken:
            raise EmptyClusterError(int(c), f"cannot reseed cluster {c}: not enough points")
        order = order[~np.isin(order, taken)]
        subs[c] = fit_basis(z[taken], p, fallback=subs[c].basis)
    return subs, labels


def update_subspaces(points, labels, subs, outlier_fraction=0.0):
    """Refit every subspace by (trimmed) SVD, reseeding empty clusters first.

    Returns the new subspace list and the (possibly repaired) labels.
    """
    subs, labels = reseed_empty(points, subs, labels)
    p = subs[0].p
    new = [svd_update(points, labels, i, p, outlier_fraction, current=s) for i, s in enumerate(subs)]
    return new, labels


def run_plain_ksc(points, cfg, init):
    """Alternate assignment and SVD refits until the objective settles.

    Each iteration assigns points to the current subspaces, records the
    objective, stops if the relative decrease is below ``cfg.tol``, and
    otherwise refits every subspace. The returned labels are the nearest-
    subspace assignment to the returned subspaces.

    Returns
    -------
    KscResult
        ``(subspaces, labels, trace)``.
    """
    z = _points(points)
    subs = list(init)
    if len(subs) != cfg.k:
        raise DimensionError(f"init has {len(subs)} subspaces, config expects k={cfg.k}")
    if subs[0].p != cfg.p or subs[0].d != z.shape[1]:
        raise DimensionError("init subspaces do not match (d, p)")
    trace = []
    labels = None
    for it in range(cfg.max_iters):
        labels = assign(z, subs)
        obj = objective(z, subs, labels)
        trace.append(obj)
        if it > 0 and trace[-2] - obj < cfg.tol * trace[-2]:
            break
        subs, labels = update_subspaces(z, labels, subs, cfg.outlier_fraction)
    else:
        labels = assign(z, subs)
    return KscResult(subs, labels, trace)
