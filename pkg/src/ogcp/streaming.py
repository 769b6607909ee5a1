"""Streaming driver: per-slice solves, history window, checkpoints.

Processing a slice runs the temporal-weight solve against the previous
factors, then the factor solve anchored to those previous factors and
the reservoir-sampled history window, then snapshots the factors for the
next step. Algorithm state stays O(sum I_k * R + H * R) regardless of
stream length; only the metrics log (one weight vector per step, kept
for back-testing) grows with t.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .adam import Adam
from .exceptions import DataError, OgcpError
from .losses import LossFunction
from .metrics import SliceMetrics, local_loss
from .sampling import PHASE_METRICS, PHASE_WINDOW, rng_at
from .solvers import (SolverConfig, solve_factors, solve_static, solve_weights,
                      solve_weights_least_squares)
from .tensor import KTensor, SparseTensor

CHECKPOINT_VERSION = 1


@dataclass
class HistoryWindow:
    """Reservoir-sampled set of past steps with their frozen weights."""

    capacity: int
    entries: list = field(default_factory=list)

    def observe(self, t: int, s_t: np.ndarray, rng: np.random.Generator):
        """Fold the just-processed step into the window.

        Below capacity the step is appended, so the window is {1..t} for
        t <= capacity. Beyond that, a uniform j in {1..t} replaces entry
        j when j <= capacity, keeping membership uniform over the past.
        """
        if self.capacity <= 0:
            return
        if len(self.entries) < self.capacity:
            self.entries.append((int(t), np.array(s_t)))
            return
        j = int(rng.integers(1, t + 1))
        if j <= self.capacity:
            self.entries[j - 1] = (int(t), np.array(s_t))

    def step_ids(self) -> list:
        return [h for h, _ in self.entries]


@dataclass
class StreamState:
    """Everything the driver carries between slices."""

    factors: list
    old_factors: list
    window: HistoryWindow
    adam_factors: Adam
    iteration: int = 0
    t: int = 0
    weights_log: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    # per-slice (t, weight-epoch objectives, factor-epoch objectives);
    # diagnostics only, not checkpointed
    trace_log: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def dims(self) -> tuple:
        return tuple(a.shape[0] for a in self.factors)

    def model_at(self, t: int) -> KTensor:
        """Model [[s_t; current factors]] for a processed step t (1-based)."""
        if not 1 <= t <= len(self.weights_log):
            raise DataError(f"no weights recorded for step {t}")
        return KTensor(self.weights_log[t - 1], self.factors)

    def stacked_model(self) -> KTensor:
        """(d+1)-way model: spatial factors plus the temporal weight rows."""
        temporal = np.vstack(self.weights_log)
        return KTensor(np.ones(self.rank), list(self.factors) + [temporal])


def fresh_state(dims: Sequence[int], rank: int, loss: LossFunction,
                cfg: SolverConfig,
                factors: Optional[Sequence[np.ndarray]] = None) -> StreamState:
    """Stream state with given (or uniform random) factors and empty window."""
    if factors is None:
        rng = rng_at(cfg.samples.seed, 0, PHASE_WINDOW)
        factors = [rng.uniform(size=(d, rank)) for d in dims]
    factors = [np.array(a, dtype=np.float64) for a in factors]
    adam = cfg.make_adam(cfg.rate_factors, loss)
    adam.init(factors)
    return StreamState(
        factors=[a.copy() for a in factors],
        old_factors=[a.copy() for a in factors],
        window=HistoryWindow(capacity=0),
        adam_factors=adam,
    )


def warm_start(X_block: SparseTensor, rank: int, loss: LossFunction,
               cfg: SolverConfig, history_capacity: int, *,
               max_epochs: Optional[int] = None,
               iters_per_epoch: Optional[int] = None,
               rate: Optional[float] = None,
               tol: Optional[float] = None,
               restarts: int = 1) -> StreamState:
    """Static fit on the first slices; seeds factors, weights, and window.

    The block's last mode is time. Static component weights are absorbed
    into the temporal rows, and so are the spatial column norms (spatial
    factors are handed off with unit-norm columns): both rescalings keep
    the model identical while giving the streamed temporal solves a
    well-scaled starting point.
    """
    if X_block.ndim < 2:
        raise DataError("warm-start block must have a temporal mode")
    n_init = X_block.dims[-1]
    static = solve_static(X_block, rank, loss, cfg, max_epochs=max_epochs,
                          iters_per_epoch=iters_per_epoch, rate=rate, tol=tol,
                          restarts=restarts)
    model = static.model
    temporal = model.factors[-1] * model.weights[None, :]
    spatial = []
    for a in model.factors[:-1]:
        norms = np.linalg.norm(a, axis=0)
        safe = np.where(norms > 0, norms, 1.0)
        spatial.append(a / safe)
        temporal = temporal * safe[None, :]

    state = fresh_state(X_block.dims[:-1], rank, loss, cfg, factors=spatial)
    state.window = HistoryWindow(capacity=history_capacity)
    for h in range(1, n_init + 1):
        s_h = temporal[h - 1].copy()
        state.weights_log.append(s_h)
        state.window.observe(h, s_h,
                             rng_at(cfg.samples.seed, h, PHASE_WINDOW))
    state.t = n_init
    return state


def process_slice(state: StreamState, X_t: SparseTensor, loss: LossFunction,
                  cfg: SolverConfig, exact_loss: bool = True) -> SliceMetrics:
    """Advance the stream by one slice; the state is updated in place.

    Solver errors propagate with the slice index attached; the caller is
    expected to halt the stream rather than skip the slice.
    """
    if X_t.dims != state.dims:
        raise DataError(
            f"slice dims {X_t.dims} do not match stream dims {state.dims}")
    t = state.t + 1
    started = time.perf_counter()
    try:
        factors = [a.copy() for a in state.old_factors]
        if cfg.temporal_solver == "least-squares":
            if loss.kind != "gaussian":
                raise DataError(
                    "least-squares temporal solve requires gaussian loss")
            s_t = solve_weights_least_squares(X_t, factors, cfg.reg_weights)
            epochs_w = 0
            weight_trace = []
        else:
            s_prev = state.weights_log[-1] if state.weights_log else None
            wres = solve_weights(X_t, factors, loss, cfg, t=t, s_init=s_prev)
            s_t = wres.weights
            epochs_w = wres.trace.epochs
            weight_trace = wres.trace.objective
        fres = solve_factors(X_t, factors, s_t, state.old_factors,
                             state.window.entries, cfg, loss,
                             state.adam_factors, state.iteration, t=t)
    except OgcpError as exc:
        raise type(exc)(f"slice {t}: {exc}") from exc
    state.trace_log.append((t, list(weight_trace),
                            list(fres.trace.objective)))
    state.factors = fres.factors
    state.iteration = fres.iteration
    state.window.observe(t, s_t, rng_at(cfg.samples.seed, t, PHASE_WINDOW))
    state.old_factors = [a.copy() for a in state.factors]
    state.weights_log.append(np.array(s_t))
    state.t = t
    wall_ms = (time.perf_counter() - started) * 1000.0

    model = KTensor(s_t, state.factors)
    sampled = local_loss(X_t, model, loss, mode="sampled",
                         p=cfg.samples.obj_nonzeros, q=cfg.samples.obj_zeros,
                         rng=rng_at(cfg.samples.seed, t, PHASE_METRICS),
                         max_rejects=cfg.samples.max_rejects)
    exact_val = (local_loss(X_t, model, loss, mode="exact").value
                 if exact_loss else float("nan"))
    row = SliceMetrics(t=t, local_loss_sampled=sampled.value,
                       local_loss_exact=exact_val, epochs_weights=epochs_w,
                       epochs_factors=fres.trace.epochs, wall_ms=wall_ms)
    state.metrics.append(row)
    return row


def run_stream(state: StreamState, slices: Iterable[SparseTensor],
               loss: LossFunction, cfg: SolverConfig,
               exact_loss: bool = True) -> list:
    """Process slices in arrival order; returns the new metrics rows."""
    return [process_slice(state, X_t, loss, cfg, exact_loss=exact_loss)
            for X_t in slices]


def save_checkpoint(state: StreamState, path) -> None:
    """Versioned binary snapshot sufficient to resume exactly (same config)."""
    header = {
        "version": CHECKPOINT_VERSION,
        "t": state.t,
        "iteration": state.iteration,
        "ndim": len(state.factors),
        "rank": state.rank,
        "window_capacity": state.window.capacity,
        "adam_rate": state.adam_factors.rate,
    }
    arrays = {"header": np.frombuffer(
        json.dumps(header).encode(), dtype=np.uint8)}
    for k, a in enumerate(state.factors):
        arrays[f"factor_{k}"] = a
    for k, a in enumerate(state.old_factors):
        arrays[f"old_factor_{k}"] = a
    arrays["window_ids"] = np.array(state.window.step_ids(), dtype=np.int64)
    arrays["window_weights"] = (
        np.vstack([s for _, s in state.window.entries])
        if state.window.entries else np.empty((0, state.rank)))
    arrays["weights_log"] = (np.vstack(state.weights_log)
                             if state.weights_log
                             else np.empty((0, state.rank)))
    arrays["metrics"] = np.array(
        [[m.t, m.local_loss_sampled, m.local_loss_exact, m.epochs_weights,
          m.epochs_factors, m.wall_ms] for m in state.metrics])
    for name, parts in state.adam_factors.state_arrays().items():
        for k, a in enumerate(parts):
            arrays[f"adam_{name}_{k}"] = a
    np.savez(path, **arrays)


def load_checkpoint(path, loss: LossFunction, cfg: SolverConfig) -> StreamState:
    """Rebuild a StreamState written by :func:`save_checkpoint`."""
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header["version"] != CHECKPOINT_VERSION:
            raise DataError(
                f"checkpoint version {header['version']} not supported")
        ndim = header["ndim"]
        factors = [np.array(data[f"factor_{k}"]) for k in range(ndim)]
        old_factors = [np.array(data[f"old_factor_{k}"]) for k in range(ndim)]
        window = HistoryWindow(capacity=header["window_capacity"])
        ids = data["window_ids"]
        wrows = data["window_weights"]
        window.entries = [(int(h), np.array(wrows[i]))
                          for i, h in enumerate(ids)]
        adam = cfg.make_adam(header["adam_rate"], loss)
        adam.load_state_arrays(
            {name: [np.array(data[f"adam_{name}_{k}"]) for k in range(ndim)]
             for name in ("u", "v", "u_o", "v_o", "a_o")}, single=False)
        weights_log = [np.array(r) for r in data["weights_log"]]
        metrics = [SliceMetrics(t=int(r[0]), local_loss_sampled=r[1],
                                local_loss_exact=r[2], epochs_weights=int(r[3]),
                                epochs_factors=int(r[4]), wall_ms=r[5])
                   for r in data["metrics"]]
    return StreamState(factors=factors, old_factors=old_factors,
                       window=window, adam_factors=adam,
                       iteration=header["iteration"], t=header["t"],
                       weights_log=weights_log, metrics=metrics)
