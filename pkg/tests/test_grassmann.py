import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import basis, orthonormal
from deepksc.errors import DimensionError, DomainError, RankError
from deepksc.grassmann import SubspaceBasis, random_basis, retract, riemannian_step, robust_step, tangent_project
from deepksc.linalg import principal_angles, projector_distance
from oracles import central_difference

E1 = SubspaceBasis(np.array([[1.0], [0.0]]))


def test_basis_validates_and_is_immutable():
    with pytest.raises(DomainError):
        SubspaceBasis(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(DimensionError):
        SubspaceBasis(np.zeros((2, 3)))
    raw = np.eye(3)[:, :2].copy()
    s = SubspaceBasis(raw)
    raw[0, 0] = 5.0
    assert s.basis[0, 0] == 1.0
    with pytest.raises(ValueError):
        s.basis[0, 0] = 2.0
    assert (s.d, s.p) == (3, 2)
    np.testing.assert_array_equal(np.asarray(s), s.basis)


def test_tangent_project_examples(rng):
    s = basis(rng, 6, 2)
    c = rng.standard_normal((2, 2))
    assert np.abs(tangent_project(s, s.basis @ c)).max() <= 1e-12
    u = rng.standard_normal((6, 2))
    perp = u - s.projector @ u
    assert np.abs(tangent_project(s, perp) - perp).max() <= 1e-12
    np.testing.assert_allclose(tangent_project(E1, np.array([[1.0], [1.0]])), [[0.0], [1.0]])
    with pytest.raises(DimensionError):
        tangent_project(s, np.zeros((6, 3)))


def test_retract_examples(rng):
    s = basis(rng, 5, 2)
    assert np.abs(retract(s, np.zeros((5, 2))).basis - s.basis).max() <= 1e-12
    np.testing.assert_allclose(retract(E1, np.array([[0.0], [1.0]])).basis, np.full((2, 1), 1 / np.sqrt(2)))
    with pytest.raises(RankError):
        retract(E1, np.array([[-1.0], [0.0]]))


def test_retract_small_tangent_stays_close_to_span(rng):
    s = basis(rng, 8, 3)
    u = tangent_project(s, rng.standard_normal((8, 3)))
    u *= 1e-6 / np.linalg.norm(u)
    q = retract(s, u)
    target, _ = np.linalg.qr(s.basis + u)
    assert principal_angles(q.basis, target).max() <= 2e-6


def test_riemannian_step_trivial_cases(rng):
    s = basis(rng, 7, 3)
    assert np.abs(riemannian_step(s, np.zeros((7, 3)), 0.1).basis - s.basis).max() <= 1e-12
    in_span = s.basis @ rng.standard_normal((3, 3))
    assert np.abs(riemannian_step(s, in_span, 0.1).basis - s.basis).max() <= 1e-12
    with pytest.raises(ValueError):
        riemannian_step(s, np.zeros((7, 3)), 0.0)


def ksc_loss(z, s):
    r = z - z @ s @ s.T
    return float(np.sum(r * r))


def test_derived_gradient_matches_finite_differences(rng):
    z = rng.standard_normal((5, 6))
    s = orthonormal(rng, 6, 2)
    fd = central_difference(lambda b: ksc_loss(z, b), s, 1e-6)
    g = -2.0 * z.T @ z @ s
    # the formula is the gradient on the Stiefel manifold; off-manifold it
    # picks up extra terms, but those vanish in the tangent projection
    proj = lambda m: m - s @ (s.T @ m)
    assert np.abs(proj(fd) - proj(g)).max() <= 1e-6 * np.abs(proj(g)).max()


def test_step_decreases_loss(rng):
    z = rng.standard_normal((30, 6))
    s = basis(rng, 6, 2)
    new = riemannian_step(s, -2.0 * z.T @ z @ s.basis, 1e-4)
    assert ksc_loss(z, new.basis) < ksc_loss(z, s.basis)


def test_robust_step_passes_through_success():
    new, eta = robust_step(E1, np.array([[0.0], [-1.0]]), 1.0)
    assert eta == 1.0
    np.testing.assert_allclose(new.basis, np.full((2, 1), 1 / np.sqrt(2)))


def test_robust_step_halves_then_skips(monkeypatch):
    # S + u is never rank deficient for a tangent u (S^T (S + u) = I), so the
    # failure path is forced by stubbing the inner step
    import deepksc.grassmann as gm

    tried = []

    def flaky(s, g, eta):
        tried.append(eta)
        if eta > 0.2:
            raise RankError("forced")
        return s

    monkeypatch.setattr(gm, "riemannian_step", flaky)
    new, eta = robust_step(E1, np.zeros((2, 1)), 1.0)
    assert tried == [1.0, 0.5, 0.25, 0.125] and eta == 0.125

    def always_fails(s, g, eta):
        tried.append(eta)
        raise RankError("forced")

    tried.clear()
    monkeypatch.setattr(gm, "riemannian_step", always_fails)
    new, eta = robust_step(E1, np.zeros((2, 1)), 1.0)
    assert new is E1 and eta == 0.0 and len(tried) == 11


def test_random_basis_deterministic():
    a = random_basis(10, 3, np.random.default_rng(7))
    b = random_basis(10, 3, np.random.default_rng(7))
    assert a.basis.tobytes() == b.basis.tobytes()


shapes = st.integers(1, 10).flatmap(lambda d: st.tuples(st.just(d), st.integers(1, d)))


@settings(max_examples=200, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_prop_tangent_projection(shape, seed, scale):
    d, p = shape
    rng = np.random.default_rng(seed)
    s = random_basis(d, p, rng)
    u = scale * rng.standard_normal((d, p))
    t = tangent_project(s, u)
    assert np.abs(s.basis.T @ t).max() <= 1e-10 * max(1.0, scale)
    assert np.abs(tangent_project(s, t) - t).max() <= 1e-12 * max(1.0, scale)


@settings(max_examples=200, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1), st.floats(1e-6, 10.0))
def test_prop_retraction_orthonormal(shape, seed, scale):
    d, p = shape
    rng = np.random.default_rng(seed)
    s = random_basis(d, p, rng)
    u = tangent_project(s, scale * rng.standard_normal((d, p)))
    q = retract(s, u).basis
    assert np.abs(q.T @ q - np.eye(p)).max() <= 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-3, 1e-4, 1e-5]))
def test_prop_small_step_moves_projector_little(seed, eta):
    rng = np.random.default_rng(seed)
    s = random_basis(8, 3, rng)
    g = rng.standard_normal((8, 3))
    new = riemannian_step(s, g, eta)
    bound = 2 * eta * np.linalg.norm(g)
    assert projector_distance(new.basis, s.basis) <= bound + 10 * (eta * np.linalg.norm(g)) ** 2
