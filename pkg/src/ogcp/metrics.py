"""Reconstruction losses and the K-tensor congruence score."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import DataError
from .losses import LossFunction
from .sampling import draw_samples, estimate_objective, resolve_counts
from .tensor import KTensor, SparseTensor


@dataclass
class SliceMetrics:
    """Per-slice diagnostics recorded by the streaming driver."""

    t: int
    local_loss_sampled: float
    local_loss_exact: float
    epochs_weights: int
    epochs_factors: int
    wall_ms: float


@dataclass
class LocalLoss:
    """Loss total divided by ||X||_F^2; unnormalized when the slice is empty."""

    value: float
    normalized: bool


def local_loss(X: SparseTensor, model: KTensor, loss: LossFunction, *,
               mode: str = "exact", p: Optional[int] = None,
               q: Optional[int] = None, rng=None,
               max_rejects: Optional[int] = None,
               max_elements: int = 50_000_000) -> LocalLoss:
    """Reconstruction loss of one slice against its model.

    Exact mode sums f over every cell (zeros included); sampled mode is
    the stratified objective estimate with no history or regularization
    terms. Both are divided by the squared norm of the stored data; an
    empty slice cannot be normalized and is flagged instead.
    """
    if X.dims != model.dims:
        raise DataError(f"dims differ: {X.dims} vs {model.dims}")
    if mode == "exact":
        if X.num_cells > max_elements:
            raise DataError(
                f"exact local loss over {X.num_cells} cells exceeds cap "
                f"{max_elements}; use sampled mode")
        dense_m = model.full(max_elements)
        dense_x = X.dense()
        total = float(np.sum(loss.value(dense_x.ravel(), dense_m.ravel())))
    elif mode == "sampled":
        if rng is None:
            raise DataError("sampled local loss needs an rng")
        pp, qq = resolve_counts(p, 0 if q is None else q, X)
        samples = draw_samples(X, pp, qq, rng, max_rejects)
        total = estimate_objective(X, model.factors, model.weights, loss,
                                   samples)
    else:
        raise DataError(f"unknown local loss mode {mode!r}")
    norm = X.frobenius_sq
    if norm > 0:
        return LocalLoss(total / norm, True)
    return LocalLoss(total, False)


def global_loss(slices: Sequence[SparseTensor],
                factors: Sequence[np.ndarray],
                weights_log: Sequence[np.ndarray],
                loss: LossFunction) -> float:
    """Back-test of the final factors against all observed slices.

    Average over t of the exact local loss of [[s_t; final factors]];
    order-independent given fixed factors and weights.
    """
    if len(weights_log) < len(slices):
        raise DataError(
            f"{len(slices)} slices but only {len(weights_log)} weight "
            f"vectors recorded")
    if not slices:
        raise DataError("global loss over an empty stream is undefined")
    total = 0.0
    for t, X_t in enumerate(slices, start=1):
        model = KTensor(weights_log[t - 1], factors)
        total += local_loss(X_t, model, loss, mode="exact").value
    return total / len(slices)


def _normalize_components(model: KTensor):
    """Unit-norm columns with norms (and signs) absorbed into the weights.

    A negative absorbed weight flips the first mode's column so weights
    end up nonnegative without changing the model.
    """
    lam = model.weights.copy()
    units = []
    for a in model.factors:
        norms = np.linalg.norm(a, axis=0)
        safe = np.where(norms > 0, norms, 1.0)
        units.append(a / safe)
        lam = lam * norms
    flip = lam < 0
    if flip.any():
        lam = np.abs(lam)
        units[0] = units[0] * np.where(flip, -1.0, 1.0)[None, :]
    return lam, units


def congruence_score(M1: KTensor, M2: KTensor) -> float:
    """Component-matched similarity of two K-tensors, in [-1, 1].

    Columns are normalized to unit norm (norms absorbed into weights),
    components are greedily paired by descending product of signed
    cosines, and each matched pair contributes

        (1 - |l1 - l2| / max(l1, l2)) * prod_k cos(a1(k), a2(k)).

    The score averages over the min(R1, R2) matched pairs; it is 1.0 for
    identical models and invariant to component permutation and to
    rebalancing weight against column scales. A zero column scores 0 for
    its component. Cosines are signed, so a flipped column in a Gaussian
    model shows up as a negative contribution.
    """
    if M1.dims != M2.dims:
        raise DataError(f"dims differ: {M1.dims} vs {M2.dims}")
    lam1, u1 = _normalize_components(M1)
    lam2, u2 = _normalize_components(M2)
    cosprod = np.ones((M1.rank, M2.rank))
    for a, b in zip(u1, u2):
        cosprod *= a.T @ b
    n_pairs = min(M1.rank, M2.rank)
    masked = cosprod.copy()
    total = 0.0
    for _ in range(n_pairs):
        i, j = np.unravel_index(np.argmax(masked), masked.shape)
        top = max(lam1[i], lam2[j])
        if top > 0:
            penalty = 1.0 - abs(lam1[i] - lam2[j]) / top
            total += penalty * cosprod[i, j]
        masked[i, :] = -np.inf
        masked[:, j] = -np.inf
    return total / n_pairs
