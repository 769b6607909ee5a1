"""Multilinear algebra primitives.

All Gram-type quantities (Z_k' Z_k and cross variants) are computed via
the Hadamard-of-Grams identity, never materializing Khatri-Rao products:
memory stays O(R^2) instead of O(prod I_m / I_k * R).

Modes are 0-based here and throughout the numeric layers; 1-based
indexing applies to tensor coordinates only.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .exceptions import DataError
from .tensor import KTensor, SparseTensor, model_values


def _check_factor_shapes(Y: SparseTensor, factors: Sequence[np.ndarray]):
    if len(factors) != Y.ndim:
        raise DataError(
            f"tensor has {Y.ndim} modes but {len(factors)} factors given"
        )
    for k, a in enumerate(factors):
        if a.shape[0] != Y.dims[k]:
            raise DataError(
                f"factor {k} has {a.shape[0]} rows, tensor dim is {Y.dims[k]}"
            )


def sampled_mttkrp(Y: SparseTensor, factors: Sequence[np.ndarray],
                   mode: int) -> np.ndarray:
    """Mode-``mode`` MTTKRP of a sparse tensor with the factor list.

    out[i, j] = sum over stored entries with mode coordinate i of
    y * prod_{m != mode} A(m)[i_m, j]. Stored zeros contribute nothing
    but are permitted (sampled gradient tensors carry them).
    """
    _check_factor_shapes(Y, factors)
    if not 0 <= mode < Y.ndim:
        raise IndexError(f"mode {mode} out of range for {Y.ndim}-way tensor")
    rank = factors[0].shape[1]
    out = np.zeros((Y.dims[mode], rank))
    if Y.nnz == 0:
        return out
    terms = np.broadcast_to(Y.vals[:, None], (Y.nnz, rank)).copy()
    for m, a in enumerate(factors):
        if m != mode:
            terms *= a[Y.subs0[:, m], :]
    rows = Y.subs0[:, mode]
    for j in range(rank):
        out[:, j] = np.bincount(rows, weights=terms[:, j],
                                minlength=Y.dims[mode])
    return out


def weight_gradient_mttkrp(Y: SparseTensor,
                           factors: Sequence[np.ndarray]) -> np.ndarray:
    """Z' vec(Y) over stored entries: g[j] = sum_i y_i prod_k A(k)[i_k, j].

    Equivalent to the MTTKRP of Y in a virtual trailing mode of size 1.
    """
    _check_factor_shapes(Y, factors)
    rank = factors[0].shape[1]
    if Y.nnz == 0:
        return np.zeros(rank)
    terms = factors[0][Y.subs0[:, 0], :].copy()
    for m in range(1, len(factors)):
        terms *= factors[m][Y.subs0[:, m], :]
    return Y.vals @ terms


def gram(factors: Sequence[np.ndarray], mode: Optional[int] = None,
         other_factors: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """Hadamard product of per-mode Grams, skipping ``mode`` if given.

    Returns hadamard_{m != mode} B(m)' A(m) with B = other_factors
    (defaults to factors), which equals Z_B' Z_A for the corresponding
    Khatri-Rao matrices. With mode=None the product runs over all modes.
    """
    others = factors if other_factors is None else other_factors
    if len(others) != len(factors):
        raise DataError("factor lists must have the same number of modes")
    out = None
    for m, (b, a) in enumerate(zip(others, factors)):
        if m == mode:
            continue
        if b.shape[0] != a.shape[0]:
            raise DataError(
                f"mode {m}: row counts differ ({b.shape[0]} vs {a.shape[0]})"
            )
        g = b.T @ a
        out = g if out is None else out * g
    if out is None:
        raise DataError("gram over zero modes is undefined")
    return out


def ktensor_inner(M1: KTensor, M2: KTensor) -> float:
    """Exact inner product <M1, M2> = s1' (hadamard_k A1(k)'A2(k)) s2."""
    if M1.dims != M2.dims:
        raise DataError(f"dims differ: {M1.dims} vs {M2.dims}")
    g = gram(M2.factors, other_factors=M1.factors)
    return float(M1.weights @ g @ M2.weights)


def history_penalty(M_old: KTensor, M_new: KTensor) -> float:
    """Exact ||M_old - M_new||_F^2, clamped at 0 to absorb roundoff."""
    val = (ktensor_inner(M_old, M_old)
           - 2.0 * ktensor_inner(M_old, M_new)
           + ktensor_inner(M_new, M_new))
    return max(val, 0.0)


def dense_gaussian_mttkrp_gradient(X: SparseTensor,
                                   factors: Sequence[np.ndarray],
                                   weights: np.ndarray,
                                   mode: int) -> np.ndarray:
    """Exact Gaussian gradient dF/dA(mode) for F = sum over all cells (x-m)^2.

    Zeros of X enter through the Gram term; only the data term touches
    stored entries:

        2 (A(mode) diag(s) Gram_mode diag(s) - mttkrp(X, mode) diag(s))
    """
    g = gram(factors, mode)
    ss = np.outer(weights, weights)
    model_term = factors[mode] @ (g * ss)
    data_term = sampled_mttkrp(X, factors, mode) * weights[None, :]
    return 2.0 * (model_term - data_term)


def gaussian_sum_sq_residual(X: SparseTensor, factors: Sequence[np.ndarray],
                             weights: np.ndarray) -> float:
    """Exact sum over all cells of (x - m)^2, zeros included.

    Expands to ||X||^2 - 2 <X, M> + ||M||^2; the model norm comes from
    the all-modes Gram so no cell enumeration happens.
    """
    m_at_nnz = model_values(factors, weights, X.subs0)
    cross = float(X.vals @ m_at_nnz) if X.nnz else 0.0
    g = gram(factors)
    model_sq = float(weights @ g @ weights)
    return X.frobenius_sq - 2.0 * cross + model_sq
