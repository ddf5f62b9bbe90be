import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from scrtf import linalg
from scrtf.errors import ConvergenceFailure, NotPositiveDefinite


def random_hpd(rng, n, batch=()):
    a = rng.standard_normal(batch + (n, n)) + 1j * rng.standard_normal(batch + (n, n))
    m = a @ np.conj(np.swapaxes(a, -1, -2)) / n
    return m + 0.1 * np.eye(n)


def random_herm(rng, n, batch=()):
    a = rng.standard_normal(batch + (n, n)) + 1j * rng.standard_normal(batch + (n, n))
    return (a + np.conj(np.swapaxes(a, -1, -2))) / 2


seeds = st.integers(0, 2**32 - 1)
sizes = st.integers(1, 8)


# -- Cholesky ---------------------------------------------------------------

def test_cholesky_identity():
    np.testing.assert_array_equal(linalg.hermitian_cholesky(np.eye(3)), np.eye(3))


def test_cholesky_diagonal():
    np.testing.assert_allclose(linalg.hermitian_cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_cholesky_matches_scipy():
    rng = np.random.default_rng(1)
    m = random_hpd(rng, 4)
    low = linalg.hermitian_cholesky(m)
    np.testing.assert_allclose(low, scipy.linalg.cholesky(m, lower=True), atol=1e-13)
    assert np.allclose(np.triu(low, 1), 0)


@settings(max_examples=60, deadline=None)
@given(seeds, sizes)
def test_cholesky_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    m = random_hpd(rng, n, (3,))
    low = linalg.hermitian_cholesky(m)
    recon = low @ np.conj(np.swapaxes(low, -1, -2))
    err = np.linalg.norm(recon - m, axis=(-2, -1)) / np.linalg.norm(m, axis=(-2, -1))
    assert np.all(err < 1e-10)


def test_cholesky_not_pd_raises():
    with pytest.raises(NotPositiveDefinite):
        linalg.hermitian_cholesky(np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefinite):
        linalg.hermitian_cholesky(np.zeros((2, 2)))


def test_cholesky_mask_flags_bad_items():
    m = np.stack([np.eye(2), np.diag([1.0, -2.0]), 2 * np.eye(2)])
    low, ok = linalg.hermitian_cholesky(m, return_mask=True)
    np.testing.assert_array_equal(ok, [True, False, True])
    np.testing.assert_allclose(low[2], np.sqrt(2) * np.eye(2))


# -- solves -----------------------------------------------------------------

def test_solve_identity_and_diagonal():
    b = np.array([1 + 2j, -3.0, 0.5j])
    np.testing.assert_allclose(linalg.solve_hermitian(np.eye(3), b), b)
    np.testing.assert_allclose(linalg.solve_hermitian(np.diag([2.0, 4.0]), [2.0, 4.0]), [1.0, 1.0])


@settings(max_examples=60, deadline=None)
@given(seeds, sizes)
def test_solve_residual(seed, n):
    rng = np.random.default_rng(seed)
    m = random_hpd(rng, n, (4,))
    b = rng.standard_normal((4, n)) + 1j * rng.standard_normal((4, n))
    x = linalg.solve_hermitian(m, b)
    res = np.linalg.norm((m @ x[..., None])[..., 0] - b, axis=-1) / np.linalg.norm(b, axis=-1)
    assert np.all(res < 1e-10)


def test_solve_matrix_rhs_matches_numpy():
    rng = np.random.default_rng(3)
    m = random_hpd(rng, 5, (2,))
    b = rng.standard_normal((2, 5, 3)) + 1j * rng.standard_normal((2, 5, 3))
    np.testing.assert_allclose(linalg.solve_hermitian(m, b), np.linalg.solve(m, b), atol=1e-12)


def test_triangular_solves_match_scipy():
    rng = np.random.default_rng(4)
    low = np.tril(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))) + 3 * np.eye(4)
    b = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    np.testing.assert_allclose(linalg.solve_lower(low, b),
                               scipy.linalg.solve_triangular(low, b, lower=True), atol=1e-13)
    np.testing.assert_allclose(linalg.solve_lower_h(low, b),
                               scipy.linalg.solve_triangular(np.conj(low.T), b, lower=False),
                               atol=1e-13)


def test_solve_not_pd_propagates():
    with pytest.raises(NotPositiveDefinite):
        linalg.solve_hermitian(np.diag([1.0, 0.0]), [1.0, 1.0])


# -- eigendecomposition -----------------------------------------------------

def test_eig_diagonal():
    w, v = linalg.hermitian_eig(np.diag([1.0, 2.0]))
    np.testing.assert_allclose(w, [1.0, 2.0])
    np.testing.assert_allclose(np.abs(v), np.eye(2), atol=1e-15)


def test_eig_swap_matrix():
    w, _ = linalg.hermitian_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(w, [-1.0, 1.0], atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 16))
def test_eig_properties(seed, n):
    rng = np.random.default_rng(seed)
    m = random_herm(rng, n, (2,))
    w, v = linalg.hermitian_eig(m)
    scale = np.linalg.norm(m, axis=(-2, -1))[..., None, None]
    assert np.all(np.abs(m @ v - v * w[..., None, :]) <= 1e-9 * np.maximum(scale, 1))
    assert np.all(np.diff(w, axis=-1) >= 0)
    np.testing.assert_allclose(np.conj(np.swapaxes(v, -1, -2)) @ v, np.broadcast_to(np.eye(n), m.shape),
                               atol=1e-9)
    np.testing.assert_allclose(w.sum(-1), np.real(np.trace(m, axis1=-2, axis2=-1)), atol=1e-9 * n)
    # independent oracle
    np.testing.assert_allclose(w, np.linalg.eigvalsh(m), atol=1e-10 * max(1.0, np.abs(w).max()))


def test_eig_phase_convention():
    rng = np.random.default_rng(7)
    _, v = linalg.hermitian_eig(random_herm(rng, 5))
    idx = np.argmax(np.abs(v), axis=0)
    pivots = v[idx, np.arange(5)]
    np.testing.assert_allclose(pivots.imag, 0, atol=1e-15)
    assert np.all(pivots.real > 0)


def test_eig_sweep_cap():
    rng = np.random.default_rng(8)
    with pytest.raises(ConvergenceFailure):
        linalg.hermitian_eig(random_herm(rng, 10), max_sweeps=1)


# -- generalized principal eigenvector ---------------------------------------

def test_gevd_identity_b():
    v = linalg.gevd_principal(np.diag([2.0, 1.0]), np.eye(2))
    np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-15)


def test_gevd_diagonal_b():
    v = linalg.gevd_principal(np.eye(2), np.diag([1.0, 4.0]))
    np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-15)


def test_gevd_matches_scipy_and_dense_oracle():
    rng = np.random.default_rng(9)
    for n in (2, 3, 5):
        a, b = random_herm(rng, n), random_hpd(rng, n)
        v = linalg.gevd_principal(a, b)
        lam = linalg.rayleigh_quotient(a, b, v)
        # scipy generalized solver
        w_sp, v_sp = scipy.linalg.eigh(a, b)
        assert abs(lam - w_sp[-1]) < 1e-8 * max(1.0, abs(w_sp[-1]))
        # brute force: non-symmetric product B^-1 A
        w_ns = np.linalg.eigvals(np.linalg.solve(b, a))
        assert abs(lam - w_ns.real.max()) < 1e-8 * max(1.0, abs(w_ns).max())
        # same direction as scipy's vector
        u = v_sp[:, -1] / np.linalg.norm(v_sp[:, -1])
        assert abs(abs(np.vdot(u, v)) - 1) < 1e-8
        np.testing.assert_allclose(np.linalg.norm(v), 1.0)


def test_gevd_identity_b_matches_eig():
    rng = np.random.default_rng(10)
    a = random_herm(rng, 4)
    v = linalg.gevd_principal(a, np.eye(4))
    _, u = linalg.hermitian_eig(a)
    assert abs(abs(np.vdot(u[:, -1], v)) - 1) < 1e-10


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(2, 6))
def test_gevd_beats_random_vectors(seed, n):
    rng = np.random.default_rng(seed)
    a, b = random_herm(rng, n), random_hpd(rng, n)
    v = linalg.gevd_principal(a, b)
    best = linalg.rayleigh_quotient(a, b, v)
    x = rng.standard_normal((1000, n)) + 1j * rng.standard_normal((1000, n))
    others = linalg.rayleigh_quotient(a, b, x)
    assert np.all(others <= best + 1e-10 * abs(best))
    basis = linalg.rayleigh_quotient(a, b, np.eye(n))
    assert np.all(basis <= best + 1e-10 * abs(best))


def test_gevd_degenerate_prefers_large_sum():
    a = np.diag([3.0, 3.0, 1.0])
    v, deg = linalg.gevd_principal(a, np.eye(3), return_degenerate=True)
    assert deg
    # best unit vector of span{e1, e2} for |1^T v| is (e1 + e2)/sqrt(2)
    np.testing.assert_allclose(v, [2**-0.5, 2**-0.5, 0.0], atol=1e-12)
    _, deg = linalg.gevd_principal(np.diag([3.0, 2.0]), np.eye(2), return_degenerate=True)
    assert not deg


def test_gevd_not_pd_b():
    with pytest.raises(NotPositiveDefinite):
        linalg.gevd_principal(np.eye(2), np.diag([1.0, -1.0]))


def test_is_hermitian():
    assert linalg.is_hermitian(np.array([[1.0, 1j], [-1j, 2.0]]))
    assert not linalg.is_hermitian(np.array([[1.0, 1j], [1j, 2.0]]))
