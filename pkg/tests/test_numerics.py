import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamsgd.numerics import (
    ConvergenceError,
    NonSymmetricError,
    Rng,
    SingularCovarianceError,
    inv_sqrt_psd,
    sample_gaussian_vector,
    sample_rademacher,
    sym_eigendecompose,
)


class TestRng:
    def test_same_seed_same_draws(self):
        a = Rng(7).spawn("x", 3).gen.random(100)
        b = Rng(7).spawn("x", 3).gen.random(100)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_addressed_not_sequenced(self):
        r = Rng(7)
        r.spawn("noise").gen.random(1000)
        np.testing.assert_array_equal(r.spawn("covariates").gen.random(5),
                                      Rng(7).spawn("covariates").gen.random(5))

    def test_distinct_labels_differ(self):
        assert not np.array_equal(Rng(1).spawn("a").gen.random(5), Rng(1).spawn("b").gen.random(5))
        assert not np.array_equal(Rng(1).replication(0).gen.random(5),
                                  Rng(1).replication(1).gen.random(5))

    def test_bad_seed(self):
        with pytest.raises(ValueError):
            Rng(-1)
        with pytest.raises(ValueError):
            Rng(0).spawn(-3)


class TestSampling:
    def test_scalar_repeatable(self):
        assert sample_gaussian_vector(Rng(3), 1)[0] == sample_gaussian_vector(Rng(3), 1)[0]

    def test_gaussian_mean(self):
        rng = Rng(11)
        X = np.array([sample_gaussian_vector(rng, 3) for _ in range(100_000)])
        np.testing.assert_allclose(X.mean(axis=0), 0.0, atol=0.02)

    def test_gaussian_covariance(self):
        rng = Rng(12)
        X = np.array([sample_gaussian_vector(rng, 2) for _ in range(100_000)])
        np.testing.assert_allclose(np.cov(X.T), np.eye(2), atol=0.05)

    def test_rademacher(self):
        rng = Rng(13)
        v = np.array([sample_rademacher(rng) for _ in range(100_000)])
        assert set(np.unique(v)) <= {-1.0, 1.0}
        assert abs(v.mean()) <= 0.02
        a = [sample_rademacher(Rng(4)) for _ in range(3)]
        assert a == [sample_rademacher(Rng(4)) for _ in range(3)]

    def test_zero_dimension_rejected(self):
        with pytest.raises(ValueError):
            sample_gaussian_vector(Rng(0), 0)


def _check_decomposition(A, U, lam, tol=1e-10):
    n = A.shape[0]
    scale = max(np.linalg.norm(A), 1.0)
    assert np.linalg.norm((U * lam) @ U.T - A) <= tol * scale
    assert np.linalg.norm(U.T @ U - np.eye(n)) <= tol
    assert np.all(np.diff(lam) <= 0)


class TestEigendecomposition:
    def test_identity(self):
        U, lam = sym_eigendecompose(np.eye(2))
        np.testing.assert_allclose(lam, [1.0, 1.0])
        np.testing.assert_allclose(U.T @ U, np.eye(2), atol=1e-14)

    def test_diagonal(self):
        _, lam = sym_eigendecompose(np.diag([1.0, 2.0]))
        np.testing.assert_allclose(lam, [2.0, 1.0])

    def test_two_by_two(self):
        U, lam = sym_eigendecompose([[2.0, 1.0], [1.0, 2.0]])
        np.testing.assert_allclose(lam, [3.0, 1.0], atol=1e-14)
        np.testing.assert_allclose(np.abs(U[:, 0]), [2**-0.5, 2**-0.5], atol=1e-14)

    def test_matches_lapack_oracle(self):
        gen = np.random.default_rng(2)
        for _ in range(40):
            n = int(gen.integers(2, 31))
            A = gen.standard_normal((n, n))
            A = A + A.T
            U, lam = sym_eigendecompose(A)
            ref_lam, ref_U = np.linalg.eigh(A)
            np.testing.assert_allclose(lam, ref_lam[::-1], atol=1e-10)
            # eigenvectors agree up to sign when the spectrum is simple
            overlap = np.abs(np.sum(U * ref_U[:, ::-1], axis=0))
            np.testing.assert_allclose(overlap, 1.0, atol=1e-8)

    def test_random_reconstruction(self):
        gen = np.random.default_rng(3)
        for _ in range(100):
            n = int(gen.integers(2, 31))
            A = gen.standard_normal((n, n))
            A = (A + A.T) / 2
            U, lam = sym_eigendecompose(A)
            _check_decomposition(A, U, lam)

    def test_repeated_eigenvalues_and_tiny_couplings(self):
        Q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((6, 6)))
        A = (Q * np.array([3.0, 3.0, 3.0, 1.0, 1e-12, 0.0])) @ Q.T
        A = (A + A.T) / 2
        U, lam = sym_eigendecompose(A)
        _check_decomposition(A, U, lam)
        B = np.diag([1.0, 2.0, 3.0])
        B[0, 1] = B[1, 0] = 1e-300
        U, lam = sym_eigendecompose(B)
        _check_decomposition(B, U, lam)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8).flatmap(
        lambda n: st.lists(st.floats(-1e3, 1e3), min_size=n * n, max_size=n * n)))
    def test_reconstruction_property(self, vals):
        n = int(round(len(vals) ** 0.5))
        A = np.array(vals).reshape(n, n)
        A = (A + A.T) / 2
        U, lam = sym_eigendecompose(A)
        _check_decomposition(A, U, lam)

    def test_zero_matrix(self):
        U, lam = sym_eigendecompose(np.zeros((3, 3)))
        np.testing.assert_array_equal(lam, 0.0)
        np.testing.assert_array_equal(U, np.eye(3))

    def test_rejects_non_symmetric(self):
        with pytest.raises(NonSymmetricError):
            sym_eigendecompose([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(NonSymmetricError):
            sym_eigendecompose(np.ones((2, 3)))

    def test_sweep_budget(self):
        A = np.random.default_rng(5).standard_normal((12, 12))
        with pytest.raises(ConvergenceError):
            sym_eigendecompose(A + A.T, max_sweeps=1)


class TestInvSqrt:
    def test_identity(self):
        np.testing.assert_allclose(inv_sqrt_psd(np.eye(3)), np.eye(3), atol=1e-14)

    def test_diagonal(self):
        np.testing.assert_allclose(inv_sqrt_psd(np.diag([4.0, 1.0])), np.diag([0.5, 1.0]),
                                   atol=1e-14)

    def test_squares_to_inverse(self):
        M = np.random.default_rng(6).standard_normal((4, 4))
        A = M @ M.T + np.eye(4)
        R = inv_sqrt_psd(A)
        np.testing.assert_allclose(R @ A @ R, np.eye(4), atol=1e-10)

    def test_below_floor(self):
        with pytest.raises(SingularCovarianceError):
            inv_sqrt_psd(np.diag([1.0, 1e-12]))
