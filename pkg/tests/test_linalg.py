import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deepksc.errors import DimensionError, DomainError, RankError
from deepksc.linalg import (
    complete_basis,
    fix_column_signs,
    principal_angles,
    projector_distance,
    thin_qr_q,
    top_p_left_singular_vectors,
)
from oracles import jacobi_svd


def ortho_err(q):
    return np.abs(q.T @ q - np.eye(q.shape[1])).max()


# -- truncated SVD -------------------------------------------------------------

def test_identity_any_frame_of_the_leading_space():
    u = top_p_left_singular_vectors(np.eye(3), 2)
    assert ortho_err(u) <= 1e-12
    # residual of I_3 after projecting onto any 2-frame has squared norm 1
    assert np.linalg.norm(np.eye(3) - u @ u.T) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_axis_aligned_columns():
    a = np.diag([3.0, 2.0, 1.0])
    np.testing.assert_allclose(top_p_left_singular_vectors(a, 2), np.eye(3)[:, :2], atol=1e-15)


def test_random_5x8_matches_jacobi_and_beats_random_frames():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 8))
    u = top_p_left_singular_vectors(a, 3)
    err = np.linalg.norm(a - u @ u.T @ a)

    uj, sj = jacobi_svd(a)
    assert projector_distance(u, uj[:, :3]) <= 1e-10
    assert err == pytest.approx(np.sqrt(np.sum(sj[3:] ** 2)), rel=1e-12)

    best_random = np.inf
    for _ in range(10_000):
        q, _ = np.linalg.qr(rng.standard_normal((5, 3)))
        best_random = min(best_random, np.linalg.norm(a - q @ q.T @ a))
    assert err <= best_random + 1e-9


def test_singular_values_descend_and_signs_fixed():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((7, 12))
    u, s = top_p_left_singular_vectors(a, 5, return_singular_values=True)
    assert np.all(np.diff(s) <= 0)
    _, sj = jacobi_svd(a)
    np.testing.assert_allclose(s, sj[:5], rtol=1e-12)
    for j in range(5):
        first = u[np.flatnonzero(np.abs(u[:, j]) > 1e-12)[0], j]
        assert first >= 0


def test_svd_errors():
    with pytest.raises(DimensionError):
        top_p_left_singular_vectors(np.ones((3, 2)), 3)
    bad = np.ones((3, 3))
    bad[1, 1] = np.nan
    with pytest.raises(DomainError):
        top_p_left_singular_vectors(bad, 1)
    bad[1, 1] = np.inf
    with pytest.raises(DomainError):
        top_p_left_singular_vectors(bad, 1)


def test_svd_is_deterministic():
    a = np.random.default_rng(2).standard_normal((9, 30))
    u1 = top_p_left_singular_vectors(a, 4)
    u2 = top_p_left_singular_vectors(a.copy(), 4)
    assert u1.tobytes() == u2.tobytes()


def test_svd_optimality_against_1000_random_frames():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((8, 20))
    u = top_p_left_singular_vectors(a, 3)
    err = np.linalg.norm(a - u @ u.T @ a)
    for _ in range(1000):
        b, _ = np.linalg.qr(rng.standard_normal((8, 3)))
        assert err <= np.linalg.norm(a - b @ b.T @ a) + 1e-9


def test_jacobi_oracle_sanity():
    # the oracle itself reproduces a known factorisation
    rng = np.random.default_rng(4)
    q1, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    q2, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    s = np.array([5.0, 3.0, 2.0, 0.5])
    a = q1[:, :4] @ np.diag(s) @ q2.T
    u, sj = jacobi_svd(a)
    np.testing.assert_allclose(sj, s, rtol=1e-12)
    assert projector_distance(u[:, :2], q1[:, :2]) <= 1e-12


# -- thin QR ---------------------------------------------------------------------

def test_qr_of_orthonormal_is_identity_map():
    rng = np.random.default_rng(5)
    a, r = np.linalg.qr(rng.standard_normal((7, 3)))
    a = a * np.sign(np.diag(r))  # make diag(R) of a itself positive (it is I)
    assert np.abs(thin_qr_q(a) - a).max() <= 1e-12


def test_qr_normalises_a_vector():
    np.testing.assert_allclose(thin_qr_q(np.array([[1.0], [1.0]])), np.full((2, 1), 1 / np.sqrt(2)), atol=1e-15)


def test_qr_random_reconstruction():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((6, 3))
    q = thin_qr_q(a)
    r = q.T @ a
    assert ortho_err(q) <= 1e-12
    assert np.abs(np.tril(r, -1)).max() <= 1e-12
    assert np.all(np.diag(r) >= 0)
    assert np.abs(q @ np.triu(r) - a).max() <= 1e-10


def test_qr_rank_deficient_raises():
    a = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(RankError):
        thin_qr_q(a)
    with pytest.raises(DimensionError):
        thin_qr_q(np.ones((2, 3)))


# -- helpers -------------------------------------------------------------------

def test_fix_column_signs_ignores_rounding_noise():
    u = np.array([[1e-20, 0.0], [-1.0, 0.0], [0.0, -2.0]])
    out = fix_column_signs(u)
    assert out[1, 0] == 1.0 and out[2, 1] == 2.0


def test_principal_angles_known():
    e = np.eye(3)
    v = np.column_stack([e[:, 0], (e[:, 1] + e[:, 2]) / np.sqrt(2)])
    np.testing.assert_allclose(principal_angles(e[:, :2], v), [0.0, np.pi / 4], atol=1e-7)


def test_complete_basis_uses_candidates_first():
    partial = np.eye(4)[:, :1]
    cand = np.array([[0.0], [0.0], [1.0], [0.0]])
    out = complete_basis(partial, 4, 3, candidates=cand)
    assert ortho_err(out) <= 1e-14
    np.testing.assert_allclose(np.abs(out[:, 1]), cand[:, 0])


# -- properties ------------------------------------------------------------------

matrices = st.integers(1, 8).flatmap(
    lambda d: st.integers(1, 10).flatmap(
        lambda m: st.tuples(
            arrays(np.float64, (d, m), elements=st.floats(-10, 10, allow_nan=False, width=64)),
            st.integers(1, min(d, m)),
        )
    )
)


@settings(max_examples=150, deadline=None)
@given(matrices)
def test_prop_svd_orthonormal(case):
    a, p = case
    u = top_p_left_singular_vectors(a, p)
    assert u.shape == (a.shape[0], p)
    assert ortho_err(u) <= 1e-10


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(0, 6))
def test_prop_qr_orthonormal_and_reconstructs(seed, p, extra):
    a = np.random.default_rng(seed).standard_normal((p + extra, p))
    q = thin_qr_q(a)
    assert ortho_err(q) <= 1e-10
    r = q.T @ a
    assert np.all(np.diag(r) >= 0)
    assert np.abs(q @ r - a).max() <= 1e-10
