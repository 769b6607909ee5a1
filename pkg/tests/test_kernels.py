"""Kernel identities against explicit Khatri-Rao / dense-unfolding oracles."""

import numpy as np
import pytest

from ogcp import (DataError, KTensor, SparseTensor,
                  dense_gaussian_mttkrp_gradient, gram, history_penalty,
                  ktensor_inner, sampled_mttkrp, weight_gradient_mttkrp)

from oracles import dense_cp, dense_from_sparse, explicit_z, khatri_rao, \
    mttkrp_dense


def sparse_from_dense(arr):
    dims = arr.shape
    subs0 = np.indices(dims).reshape(len(dims), -1).T
    return SparseTensor.from_zero_based(dims, subs0, arr.ravel().copy(),
                                        allow_zero_values=True)


def random_sparse(rng, dims, nnz):
    coords = rng.choice(np.prod(dims), size=nnz, replace=False)
    subs0 = np.array(np.unravel_index(coords, dims)).T
    vals = rng.standard_normal(nnz)
    vals[vals == 0] = 1.0
    return SparseTensor.from_zero_based(dims, subs0, vals)


class TestSampledMttkrp:
    def test_empty_tensor_gives_zero(self):
        Y = SparseTensor.from_zero_based((3, 4), np.empty((0, 2)), [],
                                         allow_zero_values=True)
        A = [np.ones((3, 2)), np.ones((4, 2))]
        np.testing.assert_array_equal(sampled_mttkrp(Y, A, 0),
                                      np.zeros((3, 2)))

    def test_two_mode_identity_pattern_copies_rows(self):
        rng = np.random.default_rng(0)
        Y = SparseTensor((2, 2), [[1, 1], [2, 2]], [1.0, 1.0])
        A2 = rng.standard_normal((2, 3))
        out = sampled_mttkrp(Y, [np.zeros((2, 3)), A2], 0)
        np.testing.assert_allclose(out, A2)

    def test_matches_dense_unfolding_oracle(self):
        rng = np.random.default_rng(42)
        Y = random_sparse(rng, (4, 5, 6), 30)
        factors = [rng.standard_normal((d, 3)) for d in (4, 5, 6)]
        dense = dense_from_sparse(Y)
        for mode in range(3):
            want = mttkrp_dense(dense, factors, mode)
            got = sampled_mttkrp(Y, factors, mode)
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_linear_in_values(self):
        rng = np.random.default_rng(3)
        Y = random_sparse(rng, (3, 4), 5)
        Y2 = SparseTensor.from_zero_based(Y.dims, Y.subs0, 2.0 * Y.vals)
        A = [rng.standard_normal((3, 2)), rng.standard_normal((4, 2))]
        np.testing.assert_allclose(sampled_mttkrp(Y2, A, 1),
                                   2.0 * sampled_mttkrp(Y, A, 1), rtol=1e-14)

    def test_shape_mismatch_rejected(self):
        Y = SparseTensor((2, 2), [[1, 1]], [1.0])
        with pytest.raises(DataError):
            sampled_mttkrp(Y, [np.ones((3, 2)), np.ones((2, 2))], 0)


class TestWeightGradientMttkrp:
    def test_matches_full_khatri_rao(self):
        rng = np.random.default_rng(9)
        Y = random_sparse(rng, (3, 4, 2), 10)
        factors = [rng.standard_normal((d, 2)) for d in (3, 4, 2)]
        z = khatri_rao(factors)
        want = z.T @ dense_from_sparse(Y).ravel()
        np.testing.assert_allclose(weight_gradient_mttkrp(Y, factors), want,
                                   rtol=1e-12)


class TestGram:
    def test_all_ones_single_column(self):
        factors = [np.ones((d, 1)) for d in (2, 3, 4)]
        np.testing.assert_allclose(gram(factors, 0), [[12.0]])

    def test_two_mode_skip_gives_other_gram(self):
        rng = np.random.default_rng(1)
        factors = [rng.standard_normal((3, 2)), rng.standard_normal((4, 2))]
        np.testing.assert_allclose(gram(factors, 1), factors[0].T @ factors[0])

    @pytest.mark.parametrize("dims,rank", [((2, 3), 1), ((3, 4, 5), 2),
                                           ((2, 3, 4, 2), 3), ((5, 5, 5), 3)])
    def test_identity_with_explicit_khatri_rao(self, dims, rank):
        rng = np.random.default_rng(7)
        factors = [rng.standard_normal((d, rank)) for d in dims]
        others = [rng.standard_normal((d, rank)) for d in dims]
        for mode in range(len(dims)):
            z = explicit_z(factors, mode)
            np.testing.assert_allclose(gram(factors, mode), z.T @ z,
                                       rtol=1e-12, atol=1e-12)
            zb = explicit_z(others, mode)
            np.testing.assert_allclose(
                gram(factors, mode, other_factors=others), zb.T @ z,
                rtol=1e-12, atol=1e-12)


class TestKtensorInner:
    def test_rank1_all_ones(self):
        M = KTensor([3.0], [np.ones((2, 1))] * 3)
        assert ktensor_inner(M, M) == pytest.approx(72.0)

    def test_zero_weights(self):
        rng = np.random.default_rng(2)
        M1 = KTensor(np.zeros(2), [rng.standard_normal((3, 2))] * 2)
        M2 = KTensor(rng.standard_normal(2), [rng.standard_normal((3, 2))] * 2)
        assert ktensor_inner(M1, M2) == 0.0

    def test_matches_dense_entrywise_sum(self):
        rng = np.random.default_rng(5)
        dims = (3, 2, 4)
        M1 = KTensor(rng.standard_normal(2),
                     [rng.standard_normal((d, 2)) for d in dims])
        M2 = KTensor(rng.standard_normal(3),
                     [rng.standard_normal((d, 3)) for d in dims])
        want = float(np.sum(dense_cp(M1.weights, M1.factors)
                            * dense_cp(M2.weights, M2.factors)))
        assert ktensor_inner(M1, M2) == pytest.approx(want, rel=1e-10)

    def test_symmetric_and_bilinear_in_weights(self):
        rng = np.random.default_rng(6)
        dims = (3, 3)
        M1 = KTensor(rng.standard_normal(2),
                     [rng.standard_normal((d, 2)) for d in dims])
        M2 = KTensor(rng.standard_normal(2),
                     [rng.standard_normal((d, 2)) for d in dims])
        assert ktensor_inner(M1, M2) == pytest.approx(ktensor_inner(M2, M1))
        M1s = KTensor(2.5 * M1.weights, M1.factors)
        assert ktensor_inner(M1s, M2) == pytest.approx(
            2.5 * ktensor_inner(M1, M2))


class TestHistoryPenalty:
    def test_identical_models_zero(self):
        rng = np.random.default_rng(8)
        M = KTensor(rng.standard_normal(2),
                    [rng.standard_normal((3, 2)) for _ in range(3)])
        assert history_penalty(M, M) == 0.0

    def test_zero_new_weights_gives_old_norm(self):
        rng = np.random.default_rng(9)
        factors = [rng.standard_normal((3, 2)) for _ in range(2)]
        M_old = KTensor(rng.standard_normal(2), factors)
        M_new = KTensor(np.zeros(2), factors)
        assert history_penalty(M_old, M_new) == pytest.approx(
            ktensor_inner(M_old, M_old))

    def test_matches_densified_subtraction(self):
        rng = np.random.default_rng(10)
        dims = (3, 4, 2)
        M_old = KTensor(rng.standard_normal(2),
                        [rng.standard_normal((d, 2)) for d in dims])
        M_new = KTensor(rng.standard_normal(2),
                        [rng.standard_normal((d, 2)) for d in dims])
        diff = dense_cp(M_old.weights, M_old.factors) \
            - dense_cp(M_new.weights, M_new.factors)
        assert history_penalty(M_old, M_new) == pytest.approx(
            float(np.sum(diff ** 2)), rel=1e-8)

    def test_nonnegative(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            dims = (2, 3)
            M1 = KTensor(rng.standard_normal(2),
                         [rng.standard_normal((d, 2)) for d in dims])
            M2 = KTensor(M1.weights * (1 + 1e-12), M1.factors)
            assert history_penalty(M1, M2) >= 0.0


class TestDenseGaussianGradient:
    def test_stationary_at_exact_fit(self):
        rng = np.random.default_rng(12)
        dims = (3, 4, 2)
        weights = rng.uniform(0.5, 1.5, 2)
        factors = [rng.uniform(0.1, 1.0, (d, 2)) for d in dims]
        X = sparse_from_dense(dense_cp(weights, factors))
        for mode in range(3):
            g = dense_gaussian_mttkrp_gradient(X, factors, weights, mode)
            np.testing.assert_allclose(g, 0.0, atol=1e-10)

    def test_zero_weights_empty_tensor(self):
        X = SparseTensor.from_zero_based((3, 4), np.empty((0, 2)), [])
        factors = [np.ones((3, 2)), np.ones((4, 2))]
        g = dense_gaussian_mttkrp_gradient(X, factors, np.zeros(2), 0)
        np.testing.assert_array_equal(g, np.zeros((3, 2)))

    def test_matches_dense_gradient_oracle(self):
        rng = np.random.default_rng(13)
        dims = (3, 4, 2)
        weights = rng.standard_normal(2)
        factors = [rng.standard_normal((d, 2)) for d in dims]
        X = random_sparse(rng, dims, 10)
        dense_x = dense_from_sparse(X)
        dense_m = dense_cp(weights, factors)
        dense_y = 2.0 * (dense_m - dense_x)
        for mode in range(3):
            want = mttkrp_dense(dense_y, factors, mode) * weights[None, :]
            got = dense_gaussian_mttkrp_gradient(X, factors, weights, mode)
            np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-10)
