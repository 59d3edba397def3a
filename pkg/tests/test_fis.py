import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cefis import fis
from cefis.errors import AllWeightsZero, DimensionMismatch


def test_estimate_h_single_term():
    v = np.array([[1.0, -2.0, 0.5]])
    np.testing.assert_allclose(fis.estimate_H(v, [3.0]), v.T @ v)


def test_estimate_h_extended_precision():
    rng = np.random.default_rng(1)
    G = rng.standard_normal((4, 2))
    w = rng.random(4)
    mp.mp.dps = 50
    W = mp.fsum(mp.mpf(x) for x in w)
    ref = np.array([[float(mp.fsum(mp.mpf(w[i]) * mp.mpf(G[i, a]) * mp.mpf(G[i, b])
                                   for i in range(4)) / W) for b in range(2)] for a in range(2)])
    np.testing.assert_allclose(fis.estimate_H(G, w), ref, rtol=1e-13)


def test_estimate_h_linear_rank_one():
    d = 20
    rng = np.random.default_rng(2)
    G = -rng.random(50)[:, None] * np.ones((50, d)) / np.sqrt(d)
    lam = np.linalg.eigvalsh(fis.estimate_H(G, rng.random(50)))[::-1]
    assert lam[1] <= 1e-12 * lam[0]


def test_estimate_h_scale_invariance():
    rng = np.random.default_rng(3)
    G, w = rng.standard_normal((30, 4)), rng.random(30)
    np.testing.assert_allclose(fis.estimate_H(G, 1e9 * w), fis.estimate_H(G, w), rtol=1e-14)


def test_estimate_h_errors():
    with pytest.raises(AllWeightsZero):
        fis.estimate_H(np.ones((2, 2)), [0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        fis.estimate_H(np.ones((2, 2)), [1.0])


def test_select_rank_examples():
    assert fis.select_rank([2.0, 0.0, 0.0], 0.01) == 1
    assert fis.select_rank([1.0, 0.5, 0.1], 0.05) == 2
    assert fis.select_rank([1.0, 0.5, 0.1], 0.04) == 3
    assert fis.select_rank(np.ones(10), 0.0) == 10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=12), st.floats(0, 5), st.floats(0, 5))
def test_select_rank_monotone(vals, e1, e2):
    lam = np.sort(vals)[::-1]
    lo, hi = min(e1, e2), max(e1, e2)
    assert fis.select_rank(lam, lo) >= fis.select_rank(lam, hi)


def test_diagonal_basis():
    b = fis.compute_fis_basis(np.diag([3.0, 1.0, 0.0]), 0.01)
    assert b.rank == 2
    np.testing.assert_allclose(np.abs(b.phi_r), np.eye(3)[:, :2], atol=1e-14)
    np.testing.assert_allclose(b.eigvals, [3, 1, 0])


def test_rank_one_basis():
    v = np.array([1.0, 2.0, -2.0]) / 3
    b = fis.compute_fis_basis(np.outer(v, v), 0.3)
    assert b.rank == 1
    assert abs(abs(b.phi_r[:, 0] @ v) - 1) < 1e-12


def test_sign_convention():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 5))
    b = fis.compute_fis_basis(A @ A.T, 0.01)
    V = b.eigvecs
    idx = np.argmax(np.abs(V), axis=0)
    assert np.all(V[idx, np.arange(5)] > 0)


def test_reconstruction_and_orthonormality():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((5, 5))
    H = A @ A.T
    b = fis.compute_fis_basis(H, 0.5)
    V = b.eigvecs
    np.testing.assert_allclose(V @ np.diag(b.eigvals) @ V.T, H, atol=1e-10)
    assert np.max(np.abs(V.T @ V - np.eye(5))) <= 1e-10
    assert np.max(np.abs(b.phi_r.T @ b.phi_perp)) <= 1e-10
    assert b.rank == fis.select_rank(b.eigvals, 0.5)
    assert np.all(np.diff(b.eigvals) <= 0)


def test_max_rank_cap():
    b = fis.compute_fis_basis(np.eye(6), 0.0, max_rank=3)
    assert b.rank == 3


@pytest.mark.parametrize("n,d", [(8, 30), (40, 30), (1, 5)])
def test_gradient_path_matches_dense(n, d):
    rng = np.random.default_rng(n * d)
    G = rng.standard_normal((n, d)) * np.geomspace(1, 1e-3, d)
    w = rng.random(n)
    a = fis.fis_basis_from_gradients(G, w, 0.01)
    b = fis.compute_fis_basis(fis.estimate_H(G, w), 0.01)
    assert a.rank == b.rank
    np.testing.assert_allclose(a.eigvals, b.eigvals, rtol=1e-8, atol=1e-12 * b.eigvals[0])
    Pa, Pb = fis.projector(a), fis.projector(b)
    np.testing.assert_allclose(Pa, Pb, atol=1e-8)
    assert np.max(np.abs(a.eigvecs.T @ a.eigvecs - np.eye(d))) <= 1e-10


def test_linear_direction_recovered():
    d = 100
    rng = np.random.default_rng(5)
    G = -rng.random((60, 1)) * np.ones((60, d)) / np.sqrt(d)
    b = fis.fis_basis_from_gradients(G, rng.random(60), 0.01)
    assert b.rank == 1
    assert b.phi_r[:, 0] @ (np.ones(d) / np.sqrt(d)) >= 1 - 1e-8


def test_project_identity_slicing_and_roundtrip():
    rng = np.random.default_rng(6)
    theta = rng.standard_normal((5, 7))
    ident = fis.FisBasis.identity(5, 2)
    tr, tp = fis.project(theta, ident)
    np.testing.assert_array_equal(tr, theta[:2])
    np.testing.assert_array_equal(tp, theta[2:])
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    b = fis.FisBasis(np.zeros(5), 3, Q[:, :3], Q[:, 3:])
    tr, tp = fis.project(theta, b)
    np.testing.assert_allclose(fis.reconstruct(tr, tp, b), theta, atol=1e-12)
    np.testing.assert_allclose((tr**2).sum(0) + (tp**2).sum(0), (theta**2).sum(0), rtol=1e-12)
    with pytest.raises(DimensionMismatch):
        fis.project(theta[:4], b)
    with pytest.raises(DimensionMismatch):
        fis.reconstruct(tr[:2], tp, b)


def test_projector_properties():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((6, 6))
    b = fis.compute_fis_basis(A @ A.T, 1.0)
    P = fis.projector(b)
    assert np.max(np.abs(P @ P - P)) <= 1e-10
    Pperp = b.phi_perp @ b.phi_perp.T
    assert np.max(np.abs(P + Pperp - np.eye(6))) <= 1e-10
