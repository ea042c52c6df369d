"""Grassmannian geometry for gradient-based subspace updates.

A point of G(d, p) is stored as a d x p orthonormal basis. Updates follow
the usual embedded-manifold recipe: project the Euclidean gradient onto
the tangent space with ``(I - S S^T)``, take a step, and map back to the
manifold with the QR retraction ``qf(S + u)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, RankError
from .linalg import thin_qr_q

ORTHO_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Orthonormal basis of a p-dimensional subspace of R^d.

    The wrapped array is copied and made read-only, so instances can be
    shared freely.
    """

    basis: np.ndarray

    def __post_init__(self):
        b = np.array(self.basis, dtype=np.float64, copy=True)
        if b.ndim != 2:
            raise DimensionError(f"basis must be 2-D, got shape {b.shape}")
        d, p = b.shape
        if not 1 <= p <= d:
            raise DimensionError(f"need 1 <= p <= d, got d={d}, p={p}")
        if not np.all(np.isfinite(b)):
            raise DomainError("basis contains non-finite entries")
        err = np.abs(b.T @ b - np.eye(p)).max()
        if err > ORTHO_TOL:
            raise DomainError(f"basis columns are not orthonormal (max deviation {err:.2e})")
        b.flags.writeable = False
        object.__setattr__(self, "basis", b)

    @property
    def d(self):
        return self.basis.shape[0]

    @property
    def p(self):
        return self.basis.shape[1]

    @property
    def projector(self):
        return self.basis @ self.basis.T

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.basis, dtype=dtype)

    def __repr__(self):
        return f"SubspaceBasis(d={self.d}, p={self.p})"


def _check_like(s, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != s.basis.shape:
        raise DimensionError(f"expected shape {s.basis.shape}, got {u.shape}")
    return u


def tangent_project(s, u):
    """Project an ambient ``d x p`` matrix onto the tangent space at ``s``."""
    u = _check_like(s, u)
    b = s.basis
    return u - b @ (b.T @ u)


def retract(s, u):
    """QR retraction ``qf(S + u)``.

    Raises
    ------
    RankError
        If ``S + u`` is numerically rank deficient.
    """
    u = _check_like(s, u)
    return SubspaceBasis(thin_qr_q(s.basis + u))


def riemannian_step(s, euclid_grad, eta):
    """One Riemannian gradient-descent step of size ``eta``."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return retract(s, -eta * tangent_project(s, euclid_grad))


def robust_step(s, euclid_grad, eta, max_halvings=10):
    """``riemannian_step`` that halves ``eta`` on rank failure.

    Returns
    -------
    new : SubspaceBasis
        The updated subspace, or ``s`` itself if every attempt failed.
    eta_used : float
        Step size actually taken; ``0.0`` when the update was skipped.
    """
    for _ in range(max_halvings + 1):
        try:
            return riemannian_step(s, euclid_grad, eta), eta
        except RankError:
            eta *= 0.5
    return s, 0.0


def random_basis(d, p, rng):
    """Uniformly distributed point of G(d, p) (QR of a Gaussian matrix)."""
    return SubspaceBasis(thin_qr_q(rng.standard_normal((d, p))))
