"""Sparse tensor and K-tensor core behavior against brute-force oracles."""

import numpy as np
import pytest

from ogcp import DataError, KTensor, SparseTensor, ktensor_inner

from oracles import box, dense_cp, dense_from_sparse


def random_sparse(rng, dims, nnz):
    coords = rng.choice(np.prod(dims), size=nnz, replace=False)
    subs0 = np.array(np.unravel_index(coords, dims)).T
    vals = rng.standard_normal(nnz)
    vals[vals == 0] = 1.0
    return SparseTensor.from_zero_based(dims, subs0, vals)


def random_ktensor(rng, dims, rank):
    return KTensor(rng.standard_normal(rank),
                   [rng.standard_normal((d, rank)) for d in dims])


class TestModelEntry:
    def test_rank1_all_ones_weight_two(self):
        M = KTensor([2.0], [np.ones((2, 1))] * 3)
        for idx in box((2, 2, 2)):
            assert M.model_entry(tuple(i + 1 for i in idx)) == 2.0

    def test_zero_weights_give_zero_everywhere(self):
        rng = np.random.default_rng(0)
        M = KTensor(np.zeros(3), [rng.standard_normal((4, 3)) for _ in range(2)])
        for idx in box((4, 4)):
            assert M.model_entry(tuple(i + 1 for i in idx)) == 0.0

    def test_matches_triple_loop_densification(self):
        rng = np.random.default_rng(42)
        M = random_ktensor(rng, (2, 2, 2), 2)
        dense = dense_cp(M.weights, M.factors)
        for idx in box((2, 2, 2)):
            got = M.model_entry(tuple(i + 1 for i in idx))
            assert got == pytest.approx(dense[idx], rel=1e-12)

    def test_out_of_bounds_raises(self):
        M = KTensor([1.0], [np.ones((2, 1))] * 2)
        with pytest.raises(IndexError):
            M.model_entry((3, 1))
        with pytest.raises(IndexError):
            M.model_entry((0, 1))


class TestNnzLookup:
    def test_single_entry_membership(self):
        X = SparseTensor((2, 2, 2), [[1, 1, 1]], [5.0])
        assert X.nnz_lookup((1, 1, 1)) == 0
        assert X.nnz_lookup((2, 1, 1)) is None

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(7)
        X = random_sparse(rng, (10, 10, 10), 50)
        stored = {tuple(r) for r in X.subs().tolist()}
        for idx in box((10, 10, 10)):
            one_based = tuple(i + 1 for i in idx)
            ordinal = X.nnz_lookup(one_based)
            if one_based in stored:
                assert tuple(X.subs()[ordinal]) == one_based
            else:
                assert ordinal is None

    def test_out_of_bounds_raises(self):
        X = SparseTensor((2, 2), [[1, 1]], [1.0])
        with pytest.raises(IndexError):
            X.nnz_lookup((3, 1))


class TestSliceView:
    def test_empty_and_full_slices(self):
        X = SparseTensor((2, 2, 3), [[1, 1, 2], [2, 2, 2]], [1.0, 2.0])
        assert X.slice_view(1).nnz == 0
        s2 = X.slice_view(2)
        assert s2.dims == (2, 2)
        assert sorted(map(tuple, s2.subs().tolist())) == [(1, 1), (2, 2)]

    def test_slices_partition_entries(self):
        rng = np.random.default_rng(3)
        X = random_sparse(rng, (4, 5, 6), 40)
        slices = [X.slice_view(t) for t in range(1, 7)]
        assert sum(s.nnz for s in slices) == X.nnz
        rebuilt = np.zeros(X.dims)
        for t, s in enumerate(slices):
            rebuilt[:, :, t] = dense_from_sparse(s)
        np.testing.assert_array_equal(rebuilt, dense_from_sparse(X))

    def test_out_of_range_slice(self):
        X = SparseTensor((2, 2), [[1, 1]], [1.0])
        with pytest.raises(IndexError):
            X.slice_view(3)


class TestConstruction:
    def test_duplicate_coordinates_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            SparseTensor((2, 2), [[1, 1], [1, 1]], [1.0, 2.0])

    def test_stored_zero_rejected_unless_allowed(self):
        with pytest.raises(DataError, match="zero"):
            SparseTensor((2, 2), [[1, 1]], [0.0])
        X = SparseTensor((2, 2), [[1, 1]], [0.0], allow_zero_values=True)
        assert X.vals[0] == 0.0

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            SparseTensor((2, 2), [[1, 1]], [np.inf])

    def test_bounds_checked(self):
        with pytest.raises(DataError):
            SparseTensor((2, 2), [[3, 1]], [1.0])
        with pytest.raises(DataError):
            SparseTensor((2, 2), [[0, 1]], [1.0])

    def test_linearization_overflow_rejected(self):
        with pytest.raises(DataError, match="2\\*\\*63"):
            SparseTensor((2**40, 2**40), np.empty((0, 2)), [])

    def test_immutable_after_construction(self):
        X = SparseTensor((2, 2), [[1, 1]], [1.0])
        with pytest.raises(ValueError):
            X.vals[0] = 2.0
        M = KTensor([1.0], [np.ones((2, 1))])
        with pytest.raises(ValueError):
            M.factors[0][0, 0] = 3.0


class TestKTensorInvariants:
    def test_entry_sq_sum_equals_inner(self):
        rng = np.random.default_rng(11)
        for dims in [(2, 3), (3, 2, 2), (2, 2, 2, 2)]:
            M = random_ktensor(rng, dims, 2)
            total = sum(M.model_entry(tuple(i + 1 for i in idx)) ** 2
                        for idx in box(dims))
            assert total == pytest.approx(ktensor_inner(M, M), rel=1e-10)

    def test_factor_rank_mismatch_rejected(self):
        with pytest.raises(DataError):
            KTensor([1.0, 2.0], [np.ones((2, 2)), np.ones((2, 1))])
