"""Stratified sampling over nonzeros and zeros.

Gradient and objective estimators draw uniformly with replacement from
the stored nonzeros (p draws, scaled by eta/p) and from the implicit
zeros (q draws via rejection against the nonzero index, scaled by
(omega-eta)/q), which makes both estimators unbiased.

Reproducibility: every consumer derives its generator through
:func:`rng_at` keyed by (slice, phase, epoch, iteration), so sequential
runs with the same seed and configuration are bitwise identical and a
resumed stream re-derives exactly the draws it would have made.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import DataError, SamplingError
from .kernels import gram
from .losses import LossFunction
from .tensor import SparseTensor, model_values

# Phase tags for rng_at keys; one stream per (t, phase[, epoch, iteration]).
PHASE_INIT = 0
PHASE_WEIGHT_GRAD = 1
PHASE_WEIGHT_OBJ = 2
PHASE_FACTOR_GRAD = 3
PHASE_FACTOR_OBJ = 4
PHASE_WINDOW = 5
PHASE_METRICS = 6
PHASE_STATIC_GRAD = 7
PHASE_STATIC_OBJ = 8
PHASE_RESTART_EVAL = 9


def rng_at(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (slice, phase, epoch, iteration) key."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class SamplerConfig:
    """Stratified draw counts. ``None`` nonzero counts mean "all of eta"."""

    grad_nonzeros: Optional[int] = 1000    # p
    grad_zeros: int = 1000                 # q
    obj_nonzeros: Optional[int] = 10000    # p'
    obj_zeros: int = 10000                 # q'
    seed: int = 0
    max_rejects: Optional[int] = None      # default 1000 * q at draw time

    def __post_init__(self):
        for name in ("grad_nonzeros", "grad_zeros", "obj_nonzeros", "obj_zeros"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise DataError(f"{name} must be >= 0, got {v}")
        if self.max_rejects is not None and self.max_rejects <= 0:
            raise DataError("max_rejects must be positive")

    def gradient_counts(self, X: SparseTensor) -> tuple[int, int]:
        return resolve_counts(self.grad_nonzeros, self.grad_zeros, X)

    def objective_counts(self, X: SparseTensor) -> tuple[int, int]:
        return resolve_counts(self.obj_nonzeros, self.obj_zeros, X)


def resolve_counts(nonzeros: Optional[int], zeros: int,
                   X: SparseTensor) -> tuple[int, int]:
    """Concrete (p, q) for one slice: None -> eta, empty slice -> p = 0."""
    p = X.nnz if nonzeros is None else int(nonzeros)
    if X.nnz == 0:
        p = 0
    return p, int(zeros)


@dataclass
class SampleSet:
    """One stratified draw; scales satisfy nz_scale*p = eta, zero_scale*q = omega-eta."""

    nz_ordinals: np.ndarray
    nz_subs0: np.ndarray
    nz_vals: np.ndarray
    zero_subs0: np.ndarray
    eta: int
    omega: int

    @property
    def p(self) -> int:
        return self.nz_ordinals.shape[0]

    @property
    def q(self) -> int:
        return self.zero_subs0.shape[0]

    @property
    def nz_scale(self) -> float:
        return self.eta / self.p if self.p else 0.0

    @property
    def zero_scale(self) -> float:
        return (self.omega - self.eta) / self.q if self.q else 0.0


def draw_samples(X: SparseTensor, p: int, q: int, rng: np.random.Generator,
                 max_rejects: Optional[int] = None) -> SampleSet:
    """Draw p nonzeros and q zeros uniformly with replacement.

    Zero candidates are drawn from the full index box and redrawn while
    they collide with a stored nonzero; rejected candidates consume RNG
    draws but never the accepted-sample counter. The rejection budget
    (default 1000*q) turns a dense tensor plus q > 0 into a loud error
    instead of an endless loop.
    """
    eta, omega = X.nnz, X.num_cells
    d = X.ndim
    if p > 0 and eta == 0:
        raise SamplingError("cannot draw nonzero samples: slice has no nonzeros")
    if q > 0 and omega == eta:
        raise SamplingError("cannot draw zero samples: tensor has no zeros")
    if p > 0:
        ordinals = rng.integers(0, eta, size=p)
        nz_subs0 = X.subs0[ordinals]
        nz_vals = X.vals[ordinals]
    else:
        ordinals = np.empty(0, dtype=np.int64)
        nz_subs0 = np.empty((0, d), dtype=np.int64)
        nz_vals = np.empty(0)

    budget = (1000 * q if q else 0) if max_rejects is None else max_rejects
    dims_arr = np.asarray(X.dims, dtype=np.int64)
    accepted = []
    need, rejected = q, 0
    while need > 0:
        cand = rng.integers(0, dims_arr, size=(need, d), dtype=np.int64)
        hit = X.contains_linear(X.linearize(cand))
        keep = cand[~hit]
        if keep.shape[0]:
            accepted.append(keep)
            need -= keep.shape[0]
        rejected += int(hit.sum())
        if need > 0 and rejected > budget:
            raise SamplingError(
                f"zero sampling exhausted {budget} rejects; nonzero density "
                f"is {eta / omega:.4g}, set the zero sample count to 0 for "
                f"dense data"
            )
    zero_subs0 = (np.concatenate(accepted, axis=0) if accepted
                  else np.empty((0, d), dtype=np.int64))
    return SampleSet(ordinals, nz_subs0, nz_vals, zero_subs0, eta, omega)


def weighted_history_penalty(old_factors: Sequence[np.ndarray],
                             factors: Sequence[np.ndarray],
                             window: Sequence[tuple[int, np.ndarray]],
                             decay: float, t: int) -> float:
    """sum_h decay^(t-h) ||[[s_h; old factors]] - [[s_h; factors]]||_F^2.

    Computed from three all-mode Grams shared across the window; each
    per-step term is clamped at 0 against roundoff.
    """
    if not window:
        return 0.0
    g_oo = gram(old_factors)
    g_on = gram(factors, other_factors=old_factors)
    g_nn = gram(factors)
    quad = g_oo - (g_on + g_on.T) + g_nn
    total = 0.0
    for h, s_h in window:
        total += decay ** (t - h) * max(float(s_h @ quad @ s_h), 0.0)
    return total


def estimate_objective(X: SparseTensor, factors: Sequence[np.ndarray],
                       weights: np.ndarray, loss: LossFunction,
                       samples: SampleSet, *,
                       old_factors: Optional[Sequence[np.ndarray]] = None,
                       window: Sequence[tuple[int, np.ndarray]] = (),
                       hist_weight: float = 0.0, hist_decay: float = 1.0,
                       t: int = 0, reg_factors: float = 0.0,
                       reg_weights: float = 0.0) -> float:
    """Stratified estimate of the streaming objective at the given model.

    The data term is sampled; history and regularization terms are exact
    (computed via Gram identities, never densified).
    """
    total = 0.0
    if samples.p:
        m = model_values(factors, weights, samples.nz_subs0)
        total += samples.nz_scale * float(np.sum(loss.value(samples.nz_vals, m)))
    if samples.q:
        m = model_values(factors, weights, samples.zero_subs0)
        total += samples.zero_scale * float(np.sum(loss.value(np.zeros(samples.q), m)))
    if hist_weight and len(window):
        if old_factors is None:
            raise DataError("history terms require the previous-step factors")
        total += 0.5 * hist_weight * weighted_history_penalty(
            old_factors, factors, window, hist_decay, t)
    if reg_factors:
        total += 0.5 * reg_factors * sum(float(np.sum(a * a)) for a in factors)
    if reg_weights:
        total += 0.5 * reg_weights * float(weights @ weights)
    return total


def sampled_gradient_tensor(X: SparseTensor, factors: Sequence[np.ndarray],
                            weights: np.ndarray, loss: LossFunction,
                            p: int, q: int, rng: np.random.Generator,
                            max_rejects: Optional[int] = None) -> SparseTensor:
    """Sparse stratified approximation of the dense gradient tensor Y.

    Each drawn coordinate contributes scale * df/dm(x, m); repeated draws
    accumulate additively and are merged into a single stored entry
    (possibly exactly zero, e.g. at a stationary Gaussian fit).
    """
    s = draw_samples(X, p, q, rng, max_rejects)
    parts_subs, parts_vals = [], []
    if s.p:
        m = model_values(factors, weights, s.nz_subs0)
        parts_subs.append(s.nz_subs0)
        parts_vals.append(s.nz_scale * loss.deriv(s.nz_vals, m))
    if s.q:
        m = model_values(factors, weights, s.zero_subs0)
        parts_subs.append(s.zero_subs0)
        parts_vals.append(s.zero_scale * loss.deriv(np.zeros(s.q), m))
    if not parts_subs:
        return SparseTensor.from_zero_based(
            X.dims, np.empty((0, X.ndim), dtype=np.int64), np.empty(0),
            allow_zero_values=True)
    subs0 = np.concatenate(parts_subs, axis=0)
    vals = np.concatenate(parts_vals)
    lin = X.linearize(subs0)
    uniq, first, inverse = np.unique(lin, return_index=True, return_inverse=True)
    merged_vals = np.bincount(inverse, weights=vals, minlength=uniq.size)
    return SparseTensor.from_zero_based(X.dims, subs0[first], merged_vals,
                                        allow_zero_values=True)
