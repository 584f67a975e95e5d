import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose, assert_array_equal

from rom.reduction import (
    cholesky_factor,
    galerkin_coords,
    pod,
    randomized_range,
    randomized_svd,
    strb,
    truncation_rank,
)
from snapshots.tensor import SnapshotTensor, mode_reshape
from utils.errors import ArgumentError, CholeskyError, DegenerateInputError, ShapeError


def _spd(n, seed=0):
    A = np.random.default_rng(seed).normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


def _decaying(n, k, seed=0, decay=0.5):
    rng = np.random.default_rng(seed)
    Q1, _ = np.linalg.qr(rng.normal(size=(n, min(n, k))))
    Q2, _ = np.linalg.qr(rng.normal(size=(k, min(n, k))))
    s = decay ** np.arange(min(n, k))
    return (Q1 * s) @ Q2.T


def _xnorm(X, M):
    return np.sqrt(np.trace(M.T @ X @ M))


def test_truncation_rank():
    assert truncation_rank(np.array([1.0, 0.1, 0.01]), 0.05) == 2
    assert truncation_rank(np.array([1.0, 0.1, 0.01]), 0.5) == 1
    assert truncation_rank(np.array([1.0, 1.0, 1.0]), 1e-8) == 3


@pytest.mark.parametrize('tol', [1e-2, 1e-4])
def test_pod_is_x_orthonormal_and_meets_tolerance(tol):
    X = _spd(30)
    M = _decaying(30, 20)
    proj = pod(M, tol, X)
    assert_allclose(proj.basis.T @ X @ proj.basis, np.eye(proj.n), atol=1e-10)
    residual = M - proj.basis @ proj.project(M)
    assert _xnorm(X, residual) <= tol * _xnorm(X, M) * (1 + 1e-8)


def test_pod_sparse_norm_matrix_matches_dense():
    X = _spd(12, seed=3)
    M = _decaying(12, 6, seed=4)
    dense = pod(M, 1e-3, X)
    sparse = pod(M, 1e-3, sp.csc_matrix(X))
    assert_allclose(dense.basis, sparse.basis, atol=1e-10)


def test_pod_recovers_exact_rank():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(25, 3)) @ rng.normal(size=(3, 10))
    assert pod(M, 1e-8).n == 3
    assert pod(M, 1e-8, method='randomized', rank=6).n == 3


def test_pod_degenerate_and_invalid_inputs():
    with pytest.raises(DegenerateInputError):
        pod(np.zeros((5, 3)), 1e-4)
    with pytest.raises(ArgumentError):
        pod(np.ones((5, 3)), 1.5)
    with pytest.raises(ArgumentError):
        pod(np.ones((5, 3)), 1e-4, method='qr')
    with pytest.raises(ArgumentError):
        pod(np.ones((5, 3)), 1e-4, method='randomized')
    with pytest.raises(ShapeError):
        pod(np.ones(5), 1e-4)


def test_cholesky_factor_validation():
    X = _spd(6)
    H = cholesky_factor(X)
    assert_allclose(H.T @ H, X, rtol=1e-12)
    with pytest.raises(CholeskyError):
        cholesky_factor(np.diag([1.0, -1.0]))
    with pytest.raises(CholeskyError):
        cholesky_factor(np.array([[2.0, 1.0], [0.0, 2.0]]))
    with pytest.raises(CholeskyError):
        pod(np.ones((2, 2)), 1e-2, np.diag([1.0, -1.0]))


def test_randomized_svd_on_low_rank_matrix():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(50, 5)) @ rng.normal(size=(5, 40))
    U, s, Vt = randomized_svd(M, 5, seed=7)
    exact = np.linalg.svd(M, compute_uv=False)[:5]
    assert_allclose(s, exact, rtol=1e-10)
    assert_allclose((U * s) @ Vt, M, atol=1e-9 * np.abs(M).max())


def test_randomized_range_is_reproducible():
    M = _decaying(30, 20, seed=5)
    a = randomized_range(M, 4, oversample=3, seed=11)
    b = randomized_range(M, 4, oversample=3, seed=11)
    assert_array_equal(a, b)
    assert a.shape == (30, 7)
    assert_allclose(a.T @ a, np.eye(7), atol=1e-12)
    with pytest.raises(ArgumentError):
        randomized_range(M, 15, oversample=10)


def _transient_snapshots(n=20, nt=8, npar=5, seed=0):
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, n)
    t = np.linspace(0.1, 1.0, nt)
    data = np.empty((n, nt, npar))
    for j, (a, b) in enumerate(rng.uniform(1.0, 2.0, size=(npar, 2))):
        data[:, :, j] = np.outer(np.sin(np.pi * a * x), np.exp(-b * t)) + 0.1 * np.outer(x ** 2, t * a)
    return SnapshotTensor(data, ('space', 'time', 'param'))


@pytest.mark.parametrize('tol', [1e-2, 1e-4])
def test_strb_invariants(tol):
    U = _transient_snapshots()
    X = _spd(20, seed=8)
    proj = strb(U, X, tol)
    Phi1, Phi2 = proj.basis, proj.temporal_basis
    assert_allclose(Phi1.T @ X @ Phi1, np.eye(proj.n1), atol=1e-10)
    assert_allclose(Phi2.T @ Phi2, np.eye(proj.n2), atol=1e-10)
    assert proj.n == proj.n1 * proj.n2

    # 空间-时间投影误差
    X_st = np.kron(np.eye(U.nsteps), X)
    V = proj.kron_basis()
    err2, ref2 = 0.0, 0.0
    for j in range(U.nparams):
        w = U.param(j).ravel(order='F')
        r = w - V @ (V.T @ X_st @ w)
        err2 += r @ X_st @ r
        ref2 += w @ X_st @ w
    assert np.sqrt(err2) <= 2 * tol * np.sqrt(ref2)


def test_weighted_contraction_matches_cholesky_form():
    U = _transient_snapshots(seed=3)
    X = _spd(20, seed=9)
    proj = strb(U, X, 1e-3)
    H = cholesky_factor(X)
    U1 = mode_reshape(U, 1)
    assert_allclose(proj.basis.T @ X @ U1, (H @ proj.basis).T @ (H @ U1), atol=1e-9)


def test_transient_projection_factors_match_kron_basis():
    U = _transient_snapshots(seed=4)
    X = _spd(20, seed=10)
    proj = strb(U, X, 1e-3)
    V = proj.kron_basis()
    w = U.param(2)
    coords = galerkin_coords(proj, w)
    assert_allclose(coords, V.T @ np.kron(np.eye(U.nsteps), X) @ w.ravel(order='F'), atol=1e-10)
    back = proj.reconstruct(coords)
    assert back.shape == (20, U.nsteps)
    assert_allclose(back.ravel(order='F'), V @ coords, atol=1e-12)
    with pytest.raises(ShapeError):
        proj.reconstruct(np.ones(proj.n + 1))
    with pytest.raises(ShapeError):
        proj.project(np.ones(7))


def test_strb_rejects_steady_tensor():
    with pytest.raises(ShapeError):
        strb(SnapshotTensor(np.ones((4, 3)), ('space', 'param')), None, 1e-3)
