"""Synthetic data generators for the Gaussian and Poisson experiments.

Both generators return the data tensor together with the ground-truth
K-tensor so recovered models can be scored against it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError
from .tensor import KTensor, SparseTensor, linear_strides

_TINY = 1e-300


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings; ``noise`` is Gaussian only, ``density`` Poisson only."""

    kind: str
    dims: tuple
    rank: int
    noise: float = 0.2
    density: float = 0.032
    seed: int = 0
    cell_cap: int = 100_000_000

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson"):
            raise DataError(f"unknown synthetic kind {self.kind!r}")
        if self.rank < 1 or any(d < 1 for d in self.dims):
            raise DataError("dims and rank must be positive")
        if self.noise < 0:
            raise DataError("noise must be >= 0")
        if not 0.0 < self.density <= 1.0:
            raise DataError("density must lie in (0, 1]")


def _num_cells(dims) -> int:
    total = 1
    for d in dims:
        total *= d
    return total


def gen_gaussian(spec: SyntheticSpec) -> tuple[SparseTensor, KTensor]:
    """Dense planted model plus N(0, noise) perturbation on every cell.

    Factor entries are uniform(0, 1) with unit weights. The result is a
    SparseTensor enumerating every cell; a cell landing exactly at zero
    after noise (measure zero, but possible) is nudged to +/-1e-300
    toward the sign of its model value so no stored zero appears.
    """
    if spec.kind != "gaussian":
        raise DataError("spec.kind must be 'gaussian'")
    omega = _num_cells(spec.dims)
    if omega > spec.cell_cap:
        raise DataError(
            f"{omega} cells exceed the dense generator cap {spec.cell_cap}")
    rng = np.random.default_rng(spec.seed)
    factors = [rng.uniform(size=(d, spec.rank)) for d in spec.dims]
    truth = KTensor(np.ones(spec.rank), factors)
    dense = truth.full(max_elements=spec.cell_cap)
    if spec.noise > 0:
        dense = dense + rng.normal(0.0, spec.noise, size=spec.dims)
    flat = dense.ravel()
    zero_hits = flat == 0.0
    if zero_hits.any():
        signs = np.where(truth.full(spec.cell_cap).ravel()[zero_hits] < 0,
                         -1.0, 1.0)
        flat[zero_hits] = _TINY * signs
    subs0 = np.indices(spec.dims).reshape(len(spec.dims), -1).T
    data = SparseTensor.from_zero_based(spec.dims, subs0, flat)
    return data, truth


def _dominant_stochastic_factors(rng, dims, rank, boost=25.0, frac=0.08):
    """Per-mode column distributions with a boosted minority of entries.

    The boosted rows keep cross-component column cosines low, so the
    planted components stay identifiable at low densities.
    """
    factors = []
    for d in dims:
        a = rng.uniform(0.05, 0.4, size=(d, rank))
        n_dom = max(1, int(np.ceil(frac * d)))
        for j in range(rank):
            dom = rng.choice(d, size=n_dom, replace=False)
            a[dom, j] *= boost
        factors.append(a / a.sum(axis=0, keepdims=True))
    return factors


def gen_poisson(spec: SyntheticSpec) -> tuple[SparseTensor, KTensor]:
    """Sparse count tensor from a planted probability model.

    Nonnegative factors with a dominant minority per column define
    per-mode distributions; events pick a component by weight and then
    one coordinate per mode from that component's column. The total
    event count is grown until the stored-cell fraction reaches the
    density target (within 10 calibration rounds), so the sum of all
    entry values equals the number of drawn events.
    """
    if spec.kind != "poisson":
        raise DataError("spec.kind must be 'poisson'")
    omega = _num_cells(spec.dims)
    rng = np.random.default_rng(spec.seed)
    factors = _dominant_stochastic_factors(rng, spec.dims, spec.rank)
    mix = rng.uniform(0.5, 1.5, size=spec.rank)
    mix = mix / mix.sum()
    cdfs = [np.cumsum(a, axis=0) for a in factors]
    strides = linear_strides(spec.dims)

    if spec.density >= 1.0:
        n_events = 20 * omega
    else:
        # Uniform-box estimate; the concentrated model undershoots it,
        # so calibration only ever adds events.
        n_events = max(1, int(-omega * np.log1p(-spec.density)))
    counts = {}
    total_events = 0
    target = spec.density * omega
    # Saturation (density 1.0) must hit every cell, not just the +/-30%
    # band, so extra rounds re-draw the full current total.
    goal = omega if spec.density >= 1.0 else 0.77 * target
    for _ in range(10):
        lin = _draw_events(rng, n_events, mix, cdfs, strides)
        for l, c in zip(*np.unique(lin, return_counts=True)):
            counts[int(l)] = counts.get(int(l), 0) + int(c)
        total_events += n_events
        achieved = len(counts)
        if achieved >= goal or achieved == omega:
            break
        if spec.density >= 1.0:
            n_events = total_events
        else:
            gap = (target - achieved) / max(achieved, 1)
            n_events = max(1, int(total_events * min(gap, 1.0)))
    else:
        raise DataError(
            f"could not reach density {spec.density:.4g} in 10 rounds; "
            f"achieved {len(counts) / omega:.4g}")
    if len(counts) > 1.3 * target and len(counts) != omega:
        raise DataError(
            f"overshot density target {spec.density:.4g}: achieved "
            f"{len(counts) / omega:.4g}")

    lin_sorted = np.array(sorted(counts), dtype=np.int64)
    vals = np.array([counts[int(l)] for l in lin_sorted], dtype=np.float64)
    subs0 = _unlinearize(lin_sorted, spec.dims)
    data = SparseTensor.from_zero_based(spec.dims, subs0, vals)
    truth = KTensor(total_events * mix, factors)
    return data, truth


def _draw_events(rng, n, mix, cdfs, strides):
    comp = rng.choice(mix.size, size=n, p=mix)
    lin = np.zeros(n, dtype=np.int64)
    for k, cdf in enumerate(cdfs):
        u = rng.random(n)
        coords = np.empty(n, dtype=np.int64)
        for j in range(mix.size):
            sel = comp == j
            if sel.any():
                coords[sel] = np.searchsorted(cdf[:, j], u[sel])
        np.minimum(coords, cdf.shape[0] - 1, out=coords)
        lin += coords * strides[k]
    return lin


def _unlinearize(lin: np.ndarray, dims) -> np.ndarray:
    strides = linear_strides(dims)
    out = np.empty((lin.size, len(dims)), dtype=np.int64)
    rem = lin.copy()
    for k, s in enumerate(strides):
        out[:, k] = rem // s
        rem = rem % s
    return out
