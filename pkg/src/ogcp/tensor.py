"""Sparse COO tensors and Kruskal (CP) tensors.

Coordinates are 1-based at every public interface, matching the ``.tns``
file convention. Internally entries are stored 0-based in numpy arrays;
the internal arrays are exposed read-only for the numeric kernels.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import DataError

_MAX_LINEAR = 2**63 - 1


def _check_dims(dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if len(dims) == 0 or any(d <= 0 for d in dims):
        raise DataError(f"dims must be positive integers, got {dims}")
    total = 1
    for d in dims:
        total *= d
    if total > _MAX_LINEAR:
        raise DataError(
            f"index space of size prod{dims} exceeds 2**63-1; cannot linearize"
        )
    return dims


def linear_strides(dims: Sequence[int]) -> np.ndarray:
    """Mixed-radix strides so that ``subs0 @ strides`` linearizes coordinates."""
    strides = np.ones(len(dims), dtype=np.int64)
    for k in range(len(dims) - 2, -1, -1):
        strides[k] = strides[k + 1] * dims[k + 1]
    return strides


class SparseTensor:
    """A d-way sparse tensor in coordinate (COO) form.

    Parameters
    ----------
    dims : sequence of int
        Mode sizes (I_1, ..., I_d).
    subs : array-like, shape (n, d)
        1-based coordinates of the stored entries.
    vals : array-like, shape (n,)
        Entry values. Must be finite; exact zeros are rejected unless
        ``allow_zero_values`` is set (the sampled-gradient accumulator
        legitimately stores zeros for drawn coordinates).

    Duplicate coordinates are rejected loudly; use
    :func:`ogcp.io.read_tns` with ``merge_duplicates=True`` for data that
    needs a pre-merge pass.
    """

    __slots__ = ("dims", "subs0", "vals", "_strides", "_lin", "_lin_sorted",
                 "_sort_order", "_lookup")

    def __init__(self, dims, subs, vals, allow_zero_values: bool = False):
        dims = _check_dims(dims)
        subs = np.asarray(subs, dtype=np.int64)
        if subs.size == 0:
            subs = subs.reshape(0, len(dims))
        if subs.ndim != 2 or subs.shape[1] != len(dims):
            raise DataError(
                f"subs must have shape (n, {len(dims)}), got {subs.shape}"
            )
        self._init_internal(dims, subs - 1, np.asarray(vals, dtype=np.float64),
                            allow_zero_values)

    @classmethod
    def from_zero_based(cls, dims, subs0, vals,
                        allow_zero_values: bool = False) -> "SparseTensor":
        """Construct from 0-based coordinates (internal producers)."""
        self = cls.__new__(cls)
        dims = _check_dims(dims)
        subs0 = np.ascontiguousarray(subs0, dtype=np.int64)
        if subs0.size == 0:
            subs0 = subs0.reshape(0, len(dims))
        self._init_internal(dims, subs0, np.asarray(vals, dtype=np.float64),
                            allow_zero_values)
        return self

    def _init_internal(self, dims, subs0, vals, allow_zero_values):
        if vals.ndim != 1 or vals.shape[0] != subs0.shape[0]:
            raise DataError("vals must be a vector matching the entry count")
        if subs0.size and (subs0.min(axis=0).min() < 0
                           or (subs0 >= np.asarray(dims)).any()):
            bad = np.argwhere((subs0 < 0) | (subs0 >= np.asarray(dims)))[0, 0]
            raise DataError(
                f"entry {bad}: coordinate {tuple(subs0[bad] + 1)} out of "
                f"bounds for dims {dims}"
            )
        if vals.size and not np.isfinite(vals).all():
            raise DataError("stored values must be finite")
        if vals.size and not allow_zero_values and (vals == 0.0).any():
            raise DataError(
                "stored values of exactly 0 are disallowed (zeros are implicit)"
            )
        self.dims = dims
        self.subs0 = subs0
        self.vals = vals
        self._strides = linear_strides(dims)
        self._lin = subs0 @ self._strides if subs0.size else np.empty(0, np.int64)
        order = np.argsort(self._lin, kind="stable")
        lin_sorted = self._lin[order]
        if lin_sorted.size > 1 and (np.diff(lin_sorted) == 0).any():
            where = int(np.argmax(np.diff(lin_sorted) == 0))
            dup = tuple(subs0[order[where]] + 1)
            raise DataError(f"duplicate coordinate {dup} in entry list")
        self._lin_sorted = lin_sorted
        self._sort_order = order
        self._lookup = None
        self.subs0.flags.writeable = False
        self.vals.flags.writeable = False

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def nnz(self) -> int:
        """Number of stored entries (eta in the sampling formulas)."""
        return self.vals.shape[0]

    @property
    def num_cells(self) -> int:
        """Total number of cells prod(I_k) (omega in the sampling formulas)."""
        total = 1
        for d in self.dims:
            total *= d
        return total

    @property
    def frobenius_sq(self) -> float:
        """Sum of squared stored values; implicit zeros contribute nothing."""
        return float(self.vals @ self.vals)

    def subs(self) -> np.ndarray:
        """Stored coordinates, 1-based, shape (nnz, d)."""
        return self.subs0 + 1

    def _check_index(self, i) -> np.ndarray:
        i0 = np.asarray(i, dtype=np.int64) - 1
        if i0.shape != (self.ndim,):
            raise IndexError(f"index must have {self.ndim} coordinates, got {i}")
        if (i0 < 0).any() or (i0 >= np.asarray(self.dims)).any():
            raise IndexError(f"index {tuple(i)} out of bounds for dims {self.dims}")
        return i0

    def nnz_lookup(self, i) -> Optional[int]:
        """Entry ordinal of 1-based coordinate ``i``, or None if implicit zero."""
        i0 = self._check_index(i)
        if self._lookup is None:
            # Built on first use; the bulk membership path below never needs it.
            self._lookup = {int(l): int(o) for o, l in enumerate(self._lin)}
        return self._lookup.get(int(i0 @ self._strides))

    def contains_linear(self, lin: np.ndarray) -> np.ndarray:
        """Vectorized membership for already-linearized coordinates."""
        pos = np.searchsorted(self._lin_sorted, lin)
        pos = np.minimum(pos, max(self._lin_sorted.size - 1, 0))
        if self._lin_sorted.size == 0:
            return np.zeros(lin.shape, dtype=bool)
        return self._lin_sorted[pos] == lin

    def linearize(self, subs0: np.ndarray) -> np.ndarray:
        return subs0 @ self._strides

    def value_at(self, i) -> float:
        """Value at 1-based coordinate ``i`` (0.0 for implicit zeros)."""
        ordinal = self.nnz_lookup(i)
        return 0.0 if ordinal is None else float(self.vals[ordinal])

    def slice_view(self, t: int) -> "SparseTensor":
        """Hyperslice at last-mode index ``t`` (1-based), last coordinate dropped."""
        if self.ndim < 2:
            raise IndexError("slice_view requires a tensor with at least 2 modes")
        if not 1 <= t <= self.dims[-1]:
            raise IndexError(
                f"slice index {t} out of range 1..{self.dims[-1]}"
            )
        mask = self.subs0[:, -1] == t - 1
        return SparseTensor.from_zero_based(
            self.dims[:-1], self.subs0[mask, :-1], self.vals[mask]
        )

    def dense(self) -> np.ndarray:
        """Dense ndarray of the tensor (small tensors only)."""
        out = np.zeros(self.dims)
        if self.nnz:
            out[tuple(self.subs0.T)] = self.vals
        return out

    def __repr__(self) -> str:
        return (f"SparseTensor(dims={self.dims}, nnz={self.nnz})")


def model_values(factors: Sequence[np.ndarray], weights: np.ndarray,
                 subs0: np.ndarray) -> np.ndarray:
    """CP model values at 0-based coordinates: m_i = sum_j w_j prod_k A(k)[i_k,j]."""
    if subs0.shape[0] == 0:
        return np.empty(0)
    prod = factors[0][subs0[:, 0], :].copy()
    for k in range(1, len(factors)):
        prod *= factors[k][subs0[:, k], :]
    return prod @ weights


class KTensor:
    """Kruskal tensor: weights plus one factor matrix per mode.

    The model is M = sum_j weights[j] * a_j(1) o ... o a_j(d) with
    factors[k] of shape (I_k, R). Arrays are copied and frozen; a KTensor
    is immutable after construction and safe to share across threads.
    """

    __slots__ = ("weights", "factors")

    def __init__(self, weights, factors: Iterable[np.ndarray]):
        self.weights = np.array(weights, dtype=np.float64)
        self.factors = [np.array(a, dtype=np.float64) for a in factors]
        if self.weights.ndim != 1:
            raise DataError("weights must be a vector")
        rank = self.weights.shape[0]
        for k, a in enumerate(self.factors):
            if a.ndim != 2 or a.shape[1] != rank:
                raise DataError(
                    f"factor {k} must have shape (I_{k + 1}, {rank}), got {a.shape}"
                )
            if a.size and not np.isfinite(a).all():
                raise DataError(f"factor {k} contains non-finite entries")
        if self.weights.size and not np.isfinite(self.weights).all():
            raise DataError("weights contain non-finite entries")
        self.weights.flags.writeable = False
        for a in self.factors:
            a.flags.writeable = False

    @property
    def rank(self) -> int:
        return self.weights.shape[0]

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.factors)

    def model_entry(self, i) -> float:
        """Model value at 1-based coordinate ``i``."""
        i0 = np.asarray(i, dtype=np.int64) - 1
        if i0.shape != (self.ndim,):
            raise IndexError(f"index must have {self.ndim} coordinates, got {i}")
        if (i0 < 0).any() or (i0 >= np.asarray(self.dims)).any():
            raise IndexError(f"index {tuple(i)} out of bounds for dims {self.dims}")
        return float(model_values(self.factors, self.weights, i0[None, :])[0])

    def values_at(self, subs0: np.ndarray) -> np.ndarray:
        """Model values at 0-based coordinate rows (kernel entry point)."""
        return model_values(self.factors, self.weights, subs0)

    def full(self, max_elements: int = 50_000_000) -> np.ndarray:
        """Densify the model. Guarded against accidental huge allocations."""
        total = 1
        for d in self.dims:
            total *= d
        if total > max_elements:
            raise DataError(
                f"refusing to densify {total} elements (cap {max_elements})"
            )
        letters = [chr(ord("a") + k) for k in range(self.ndim)]
        script = ",".join(f"{c}r" for c in letters) + ",r->" + "".join(letters)
        return np.einsum(script, *self.factors, self.weights)

    def __repr__(self) -> str:
        return f"KTensor(dims={self.dims}, rank={self.rank})"
