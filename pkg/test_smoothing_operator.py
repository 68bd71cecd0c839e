import numpy as np
import pytest
import scipy.linalg

from errors import DimensionError, OperatorSizeError
from smoothing_operator import (DENSE_LIMIT, apply_inverse, apply_inverse_sqrt, build, coupling_to_sigma,
                                dense_materialize, gamma2, gamma_table, imaginary_residue,
                                inverse_trace_mean, spectral_norm, step_size_multiplier)

DIMS = [1, 2, 3, 4, 7, 64, 122, 512]
SIGMAS = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0]

# gamma_2 for sigma = 1..5; identical for d = 1000, 10000, 100000
GAMMA_TABLE = [0.268, 0.185, 0.149, 0.128, 0.114]


class TestBuild:
    def test_spectrum_formula(self):
        op = build(8, 0.7)
        j = np.arange(8)
        expected = 1 + 1.4 - 1.4 * np.cos(2 * np.pi * j / 8)
        np.testing.assert_allclose(op.spectrum, expected, rtol=0, atol=1e-15)
        assert op.spectrum[0] == 1.0

    def test_small_spectra(self):
        np.testing.assert_allclose(build(4, 1.0).spectrum, [1.0, 3.0, 5.0, 3.0], atol=1e-15)
        np.testing.assert_allclose(build(2, 0.05).spectrum, [1.0, 1.2], atol=1e-15)
        np.testing.assert_allclose(dense_materialize(build(2, 0.05)), [[1.1, -0.1], [-0.1, 1.1]])

    def test_spectrum_matches_dense_eigenvalues(self):
        op = build(9, 1.3)
        eig = np.sort(np.linalg.eigvalsh(dense_materialize(op)))
        np.testing.assert_allclose(np.sort(op.spectrum), eig, atol=1e-12)

    @pytest.mark.parametrize("d", [0, -3, 2.5])
    def test_rejects_bad_dimension(self, d):
        with pytest.raises(DimensionError):
            build(d, 1.0)

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            build(4, -0.1)

    def test_arrays_are_read_only(self):
        op = build(4, 1.0)
        with pytest.raises(ValueError):
            op.spectrum[0] = 2.0

    def test_identity_flags(self):
        assert build(5, 0.0).is_identity
        assert build(1, 3.0).is_identity
        assert not build(2, 0.1).is_identity


class TestApply:
    @pytest.mark.parametrize("d", DIMS)
    @pytest.mark.parametrize("sigma", SIGMAS)
    def test_inverse_matches_dense_solve(self, d, sigma, rng):
        op = build(d, sigma)
        v = rng.standard_normal(d)
        expected = scipy.linalg.solve(dense_materialize(op), v)
        got = apply_inverse(op, v)
        assert np.linalg.norm(got - expected) <= 1e-10 * max(np.linalg.norm(expected), 1e-300)

    @pytest.mark.parametrize("d", DIMS)
    @pytest.mark.parametrize("sigma", SIGMAS)
    def test_sqrt_twice_is_inverse(self, d, sigma, rng):
        op = build(d, sigma)
        v = rng.standard_normal(d)
        twice = apply_inverse_sqrt(op, apply_inverse_sqrt(op, v))
        once = apply_inverse(op, v)
        assert np.linalg.norm(twice - once) <= 1e-10 * np.linalg.norm(once)

    def test_unit_vector_solve(self):
        got = apply_inverse(build(4, 1.0), np.array([1.0, 0.0, 0.0, 0.0]))
        np.testing.assert_allclose(got, [7 / 15, 1 / 5, 2 / 15, 1 / 5], atol=1e-14)

    def test_sqrt_matches_dense_matrix_root(self, rng):
        op = build(6, 2.0)
        root = scipy.linalg.sqrtm(np.linalg.inv(dense_materialize(op))).real
        v = rng.standard_normal(6)
        np.testing.assert_allclose(apply_inverse_sqrt(op, v), root @ v, atol=1e-12)

    def test_identity_returns_exact_copy(self, rng):
        v = rng.standard_normal(10)
        op = build(10, 0.0)
        out = apply_inverse(op, v)
        assert np.array_equal(out, v)
        assert out is not v
        assert np.array_equal(apply_inverse_sqrt(op, v), v)
        scalar = build(1, 4.0)
        assert np.array_equal(apply_inverse(scalar, np.array([2.5])), np.array([2.5]))

    def test_constant_vector_is_fixed(self):
        op = build(16, 3.0)
        np.testing.assert_allclose(apply_inverse(op, np.ones(16)), np.ones(16), atol=1e-13)

    def test_batched_rows_match_single_applies(self, rng):
        op = build(12, 1.0)
        stack = rng.standard_normal((5, 12))
        batched = apply_inverse(op, stack)
        for row, out in zip(stack, batched):
            np.testing.assert_allclose(out, apply_inverse(op, row), atol=1e-14)

    def test_dimension_mismatch(self):
        op = build(4, 1.0)
        with pytest.raises(DimensionError):
            apply_inverse(op, np.ones(5))
        with pytest.raises(DimensionError):
            apply_inverse_sqrt(op, np.float64(1.0))

    def test_imaginary_residue_is_negligible(self, rng):
        op = build(122, 1.0)
        v = rng.standard_normal(122)
        assert imaginary_residue(op, v) < 1e-12 * np.linalg.norm(v)
        assert imaginary_residue(op, v, power=0.5) < 1e-12 * np.linalg.norm(v)


class TestSpectralConstants:
    def test_gamma_table_values(self):
        rows = gamma_table([1.0, 2.0, 3.0, 4.0, 5.0], [1000, 10000, 100000])
        assert len(rows) == 15
        for row in rows:
            expected = GAMMA_TABLE[int(row['sigma']) - 1]
            assert row['gamma2'] == pytest.approx(expected, abs=1e-3)

    def test_gamma2_closed_form(self):
        # mean over the circle of (a - b cos t)^-2 is a / (a^2 - b^2)^(3/2)
        op = build(100000, 1.0)
        assert gamma2(op) == pytest.approx(3 / 5 ** 1.5, rel=1e-9)
        assert inverse_trace_mean(op) == pytest.approx(1 / np.sqrt(5), rel=1e-9)

    def test_gamma2_is_one_without_smoothing(self):
        assert gamma2(build(50, 0.0)) == 1.0
        assert inverse_trace_mean(build(50, 0.0)) == 1.0

    def test_gamma2_decreases_with_sigma(self):
        values = [gamma2(build(1000, s)) for s in (0.0, 0.5, 1.0, 2.0, 5.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_step_size_multiplier_even_dimension(self):
        for sigma in (0.05, 0.5, 1.0):
            op = build(2, sigma)
            assert spectral_norm(op) == pytest.approx(1 + 4 * sigma)
            assert step_size_multiplier(op) == pytest.approx((1 + 4 * sigma) ** 0.25)

    def test_coupling_multiplier(self):
        op = build(2, coupling_to_sigma(0.1))
        assert 0.19 * step_size_multiplier(op) == pytest.approx(0.19 * 1.2 ** 0.25)
        assert 0.19 * step_size_multiplier(op) == pytest.approx(0.1988, abs=5e-4)

    def test_coupling_matches_explicit_matrix(self):
        c = 0.3
        explicit = np.array([[1 + c, -c], [-c, 1 + c]])
        np.testing.assert_allclose(dense_materialize(build(2, coupling_to_sigma(c))), explicit)


class TestDenseMaterialize:
    def test_structure(self):
        A = dense_materialize(build(5, 2.0))
        assert A[0, 0] == 5.0
        assert A[0, 1] == -2.0 and A[0, 4] == -2.0
        assert A[0, 2] == 0.0
        np.testing.assert_allclose(A, A.T)

    def test_refuses_large_dimension(self):
        with pytest.raises(OperatorSizeError):
            dense_materialize(build(DENSE_LIMIT + 1, 1.0))


class TestGaussianNormIdentities:
    @pytest.mark.parametrize("sigma", [1.0, 2.0])
    def test_expected_squared_norms(self, sigma):
        d, draws = 100, 100000
        op = build(d, sigma)
        rng = np.random.default_rng(7)
        sqrt_norms = []
        inv_norms = []
        for _ in range(10):
            eps = rng.standard_normal((draws // 10, d))
            sqrt_norms.append(np.sum(apply_inverse_sqrt(op, eps) ** 2, axis=1))
            inv_norms.append(np.sum(apply_inverse(op, eps) ** 2, axis=1))
        assert np.mean(np.concatenate(sqrt_norms)) == pytest.approx(d * inverse_trace_mean(op), rel=0.02)
        assert np.mean(np.concatenate(inv_norms)) == pytest.approx(np.sum(op.inv_spectrum ** 2), rel=0.02)
        assert np.sum(op.inv_spectrum ** 2) == pytest.approx(d * gamma2(op))
