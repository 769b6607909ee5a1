"""GCP-SGD subsolvers.

Two streaming subsolvers (temporal weights, factor matrices) plus the
static whole-tensor solver used for warm starts and baselines. Each
solver runs epochs of a fixed number of ADAM iterations; after every
epoch the objective is re-estimated on an epoch-persistent sample set
and the epoch is rolled back (with a learning-rate cut) if the estimate
rose, so recorded objective values are non-increasing.

The factor-solver ADAM moments and iteration counter persist across
stream slices; the weight solver resets per slice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .adam import Adam
from .exceptions import DataError, DivergenceError
from .kernels import (dense_gaussian_mttkrp_gradient, gaussian_sum_sq_residual,
                      gram, sampled_mttkrp, weight_gradient_mttkrp)
from .losses import LossFunction
from .sampling import (PHASE_FACTOR_GRAD, PHASE_FACTOR_OBJ, PHASE_INIT,
                       PHASE_RESTART_EVAL, PHASE_STATIC_GRAD, PHASE_STATIC_OBJ,
                       PHASE_WEIGHT_GRAD, PHASE_WEIGHT_OBJ, SamplerConfig,
                       draw_samples, estimate_objective, rng_at,
                       sampled_gradient_tensor, weighted_history_penalty)
from .tensor import KTensor, SparseTensor

TEMPORAL_SOLVERS = ("sgd", "least-squares")
GRADIENT_MODES = ("sampled", "dense-gaussian")

Window = Sequence[tuple[int, np.ndarray]]


@dataclass(frozen=True)
class SolverConfig:
    """Epoch-loop, regularization, history, and ADAM settings."""

    tol_weights: float = 0.0
    tol_factors: float = 0.0
    max_epochs_weights: int = 20        # kappa_w
    max_epochs_factors: int = 5         # kappa_f
    iters_weights: int = 100            # tau_w
    iters_factors: int = 100            # tau_f
    reg_factors: float = 0.0            # lambda
    reg_weights: float = 0.0            # mu
    hist_weight: float = 0.0            # w
    hist_decay: float = 1.0             # theta
    temporal_solver: str = "sgd"
    gradient_mode: str = "sampled"
    # Start each temporal solve from the previous step's weights instead
    # of the zero vector. Off by default (the zero init is the reference
    # behavior), but valuable for Poisson/Bernoulli fits where a zero
    # model value spikes the epsilon-guarded derivative on every nonzero
    # draw and saturates the ADAM second moment.
    warm_start_weights: bool = False
    rate_weights: float = 0.1
    rate_factors: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    rate_decay: float = 0.1
    lower_bound: Optional[float] = None  # None: take the loss's bound
    samples: SamplerConfig = SamplerConfig()

    def __post_init__(self):
        if self.tol_weights < 0 or self.tol_factors < 0:
            raise DataError("tolerances must be >= 0")
        if min(self.max_epochs_weights, self.max_epochs_factors,
               self.iters_weights, self.iters_factors) < 1:
            raise DataError("epoch and iteration counts must be >= 1")
        if not 0.0 < self.hist_decay <= 1.0:
            raise DataError("hist_decay must lie in (0, 1]")
        if min(self.reg_factors, self.reg_weights, self.hist_weight) < 0:
            raise DataError("regularization and history weights must be >= 0")
        if self.temporal_solver not in TEMPORAL_SOLVERS:
            raise DataError(f"temporal_solver must be one of {TEMPORAL_SOLVERS}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise DataError(f"gradient_mode must be one of {GRADIENT_MODES}")

    def bound_for(self, loss: LossFunction) -> float:
        return loss.lower_bound if self.lower_bound is None else self.lower_bound

    def make_adam(self, rate: float, loss: LossFunction) -> Adam:
        return Adam(rate, self.beta1, self.beta2, self.adam_eps,
                    self.bound_for(loss), self.rate_decay)


@dataclass
class EpochTrace:
    """Objective estimates at epoch boundaries; index 0 is the entry value."""

    objective: list = field(default_factory=list)
    epochs: int = 0
    rejections: int = 0


@dataclass
class WeightSolve:
    weights: np.ndarray
    trace: EpochTrace


@dataclass
class FactorSolve:
    factors: list
    iteration: int
    trace: EpochTrace


@dataclass
class StaticSolve:
    model: KTensor
    trace: EpochTrace


def _check_gradient_mode(cfg: SolverConfig, loss: LossFunction):
    if cfg.gradient_mode == "dense-gaussian" and loss.kind != "gaussian":
        raise DataError("gradient_mode 'dense-gaussian' requires gaussian loss")


def factor_gradients(Y: SparseTensor, factors: Sequence[np.ndarray],
                     weights: np.ndarray, *,
                     old_factors: Optional[Sequence[np.ndarray]] = None,
                     window: Window = (), hist_weight: float = 0.0,
                     hist_decay: float = 1.0, t: int = 0,
                     reg_factors: float = 0.0) -> list:
    """Full factor-gradient assembly from a (sampled or exact) gradient tensor.

    G_k = mttkrp(Y, k) diag(s) + lambda A(k)
          + sum_h w theta^(t-h) (A(k) diag(s_h) Gram_k diag(s_h)
                                 - A_old(k) diag(s_h) CrossGram_k diag(s_h))
    """
    out = [sampled_mttkrp(Y, factors, k) * weights[None, :]
           for k in range(len(factors))]
    return _add_reg_and_history(out, factors, old_factors, window,
                                hist_weight, hist_decay, t, reg_factors)


def dense_gaussian_factor_gradients(X: SparseTensor,
                                    factors: Sequence[np.ndarray],
                                    weights: np.ndarray, *,
                                    old_factors=None, window: Window = (),
                                    hist_weight: float = 0.0,
                                    hist_decay: float = 1.0, t: int = 0,
                                    reg_factors: float = 0.0) -> list:
    """Exact Gaussian factor gradients plus regularization/history terms."""
    out = [dense_gaussian_mttkrp_gradient(X, factors, weights, k)
           for k in range(len(factors))]
    return _add_reg_and_history(out, factors, old_factors, window,
                                hist_weight, hist_decay, t, reg_factors)


def _add_reg_and_history(grads, factors, old_factors, window, hist_weight,
                         hist_decay, t, reg_factors):
    if reg_factors:
        for k, a in enumerate(factors):
            grads[k] = grads[k] + reg_factors * a
    if hist_weight and len(window):
        if old_factors is None:
            raise DataError("history terms require the previous-step factors")
        # diag(s) G diag(s) = G * (s s'); the window collapses to one
        # decay-weighted sum of outer products shared by every mode.
        rank = factors[0].shape[1]
        s_outer = np.zeros((rank, rank))
        for h, s_h in window:
            s_outer += hist_decay ** (t - h) * np.outer(s_h, s_h)
        for k in range(len(factors)):
            g_cur = gram(factors, k)
            g_cross = gram(factors, k, other_factors=old_factors)
            grads[k] = grads[k] + hist_weight * (
                factors[k] @ (g_cur * s_outer)
                - old_factors[k] @ (g_cross * s_outer))
    return grads


def _dense_gaussian_weight_gradient(X, factors, weights, reg_weights):
    g = gram(factors)
    b = weight_gradient_mttkrp(X, factors)
    return 2.0 * (g @ weights - b) + reg_weights * weights


def _ensure_finite(variables, what: str, t):
    parts = variables if isinstance(variables, list) else [variables]
    for a in parts:
        if not np.isfinite(a).all():
            raise DivergenceError(
                f"{what} produced non-finite values at slice {t}; "
                f"lower the learning rate")


def solve_weights(X: SparseTensor, factors: Sequence[np.ndarray],
                  loss: LossFunction, cfg: SolverConfig, t: int = 0,
                  s_init: Optional[np.ndarray] = None) -> WeightSolve:
    """Temporal-weight GCP-SGD solve with the factor matrices held fixed.

    The weights start at zero (or at ``s_init`` when weight warm starts
    are enabled) and a fresh ADAM stepper is used; history and factor
    regularization do not enter (they are constant in s), so the gated
    objective is the sampled data term plus (mu/2)||s||^2.
    """
    _check_gradient_mode(cfg, loss)
    rank = factors[0].shape[1]
    seed = cfg.samples.seed
    if cfg.warm_start_weights and s_init is not None:
        s = np.array(s_init, dtype=np.float64)
        if s.shape != (rank,):
            raise DataError("s_init must match the model rank")
    else:
        s = np.zeros(rank)
    adam = cfg.make_adam(cfg.rate_weights, loss)
    adam.init(s)
    s = adam.update(s, True)  # rollback target for a first-epoch rejection

    if cfg.gradient_mode == "dense-gaussian":
        def fest_fn(s_):
            return (gaussian_sum_sq_residual(X, factors, s_)
                    + 0.5 * cfg.reg_weights * float(s_ @ s_))
    else:
        p_obj, q_obj = cfg.samples.objective_counts(X)
        obj_samples = draw_samples(X, p_obj, q_obj,
                                   rng_at(seed, t, PHASE_WEIGHT_OBJ),
                                   cfg.samples.max_rejects)

        def fest_fn(s_):
            return estimate_objective(X, factors, s_, loss, obj_samples,
                                      reg_weights=cfg.reg_weights)

    p, q = cfg.samples.gradient_counts(X)
    trace = EpochTrace()
    fest = fest_fn(s)
    trace.objective.append(fest)
    i = 0
    for epoch in range(cfg.max_epochs_weights):
        if not fest > cfg.tol_weights:
            break
        fest_old = fest
        for it in range(cfg.iters_weights):
            if cfg.gradient_mode == "dense-gaussian":
                g = _dense_gaussian_weight_gradient(X, factors, s,
                                                    cfg.reg_weights)
            else:
                rng = rng_at(seed, t, PHASE_WEIGHT_GRAD, epoch, it)
                Y = sampled_gradient_tensor(X, factors, s, loss, p, q, rng,
                                            cfg.samples.max_rejects)
                g = weight_gradient_mttkrp(Y, factors) + cfg.reg_weights * s
            s = adam.step(s, g, i + 1)
            i += 1
            _ensure_finite(s, "temporal weight solve", t)
        fest = fest_fn(s)
        if not math.isfinite(fest):
            raise DivergenceError(
                f"temporal weight solve diverged at slice {t}")
        if fest > fest_old:
            s = adam.update(s, False)
            fest = fest_old
            i -= cfg.iters_weights
            trace.rejections += 1
        else:
            s = adam.update(s, True)
        trace.epochs += 1
        trace.objective.append(fest)
    return WeightSolve(s, trace)


def solve_weights_least_squares(X: SparseTensor,
                                factors: Sequence[np.ndarray],
                                reg_weights: float = 0.0) -> np.ndarray:
    """Single Gaussian least-squares solve for the temporal weights.

    Solves (hadamard_k Gram_k + mu I) s = b with b_j the data MTTKRP;
    implicit zeros of X participate as explicit zero residuals.
    """
    rank = factors[0].shape[1]
    lhs = gram(factors) + reg_weights * np.eye(rank)
    rhs = weight_gradient_mttkrp(X, factors)
    try:
        return np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise DataError(
            "temporal least-squares system is singular; set a positive "
            "weight regularization (mu)") from exc


def solve_factors(X: SparseTensor, factors: Sequence[np.ndarray],
                  weights: np.ndarray, old_factors: Sequence[np.ndarray],
                  window: Window, cfg: SolverConfig, loss: LossFunction,
                  adam: Adam, iteration: int, t: int = 0) -> FactorSolve:
    """Factor-matrix GCP-SGD solve with the temporal weights held fixed.

    The ADAM stepper and the iteration counter are persistent across
    slices: moments accumulate over the whole stream, and a rejected
    epoch rewinds the counter by the epoch length.
    """
    _check_gradient_mode(cfg, loss)
    seed = cfg.samples.seed
    factors = [np.array(a) for a in factors]
    # Snapshot entry state so a first-epoch rejection restores it (the
    # zeroed snapshot from Init is never a valid rollback target).
    factors = adam.update(factors, True)

    if cfg.gradient_mode == "dense-gaussian":
        def fest_fn(fs):
            val = gaussian_sum_sq_residual(X, fs, weights)
            if cfg.hist_weight and len(window):
                val += 0.5 * cfg.hist_weight * weighted_history_penalty(
                    old_factors, fs, window, cfg.hist_decay, t)
            if cfg.reg_factors:
                val += 0.5 * cfg.reg_factors * sum(
                    float(np.sum(a * a)) for a in fs)
            return val
    else:
        p_obj, q_obj = cfg.samples.objective_counts(X)
        obj_samples = draw_samples(X, p_obj, q_obj,
                                   rng_at(seed, t, PHASE_FACTOR_OBJ),
                                   cfg.samples.max_rejects)

        def fest_fn(fs):
            return estimate_objective(
                X, fs, weights, loss, obj_samples, old_factors=old_factors,
                window=window, hist_weight=cfg.hist_weight,
                hist_decay=cfg.hist_decay, t=t, reg_factors=cfg.reg_factors)

    p, q = cfg.samples.gradient_counts(X)
    trace = EpochTrace()
    fest = fest_fn(factors)
    trace.objective.append(fest)
    for epoch in range(cfg.max_epochs_factors):
        if not fest > cfg.tol_factors:
            break
        fest_old = fest
        for it in range(cfg.iters_factors):
            if cfg.gradient_mode == "dense-gaussian":
                grads = dense_gaussian_factor_gradients(
                    X, factors, weights, old_factors=old_factors,
                    window=window, hist_weight=cfg.hist_weight,
                    hist_decay=cfg.hist_decay, t=t,
                    reg_factors=cfg.reg_factors)
            else:
                rng = rng_at(seed, t, PHASE_FACTOR_GRAD, epoch, it)
                Y = sampled_gradient_tensor(X, factors, weights, loss, p, q,
                                            rng, cfg.samples.max_rejects)
                grads = factor_gradients(
                    Y, factors, weights, old_factors=old_factors,
                    window=window, hist_weight=cfg.hist_weight,
                    hist_decay=cfg.hist_decay, t=t,
                    reg_factors=cfg.reg_factors)
            factors = adam.step(factors, grads, iteration + 1)
            iteration += 1
            _ensure_finite(factors, "factor solve", t)
        fest = fest_fn(factors)
        if not math.isfinite(fest):
            raise DivergenceError(f"factor solve diverged at slice {t}")
        if fest > fest_old:
            factors = adam.update(factors, False)
            fest = fest_old
            iteration -= cfg.iters_factors
            trace.rejections += 1
        else:
            factors = adam.update(factors, True)
        trace.epochs += 1
        trace.objective.append(fest)
    return FactorSolve(factors, iteration, trace)


def solve_static(X: SparseTensor, rank: int, loss: LossFunction,
                 cfg: SolverConfig, init: Optional[KTensor] = None, *,
                 max_epochs: Optional[int] = None,
                 iters_per_epoch: Optional[int] = None,
                 rate: Optional[float] = None,
                 tol: Optional[float] = None,
                 restarts: int = 1,
                 seed_key: int = 0) -> StaticSolve:
    """Static GCP-SGD fit updating weights and all factor matrices jointly.

    Used for warm starts and whole-tensor baselines; no history and no
    temporal split. Initialization is uniform(0, 1) unless given. The
    epoch-loop knobs default to the factor-solver settings.

    With ``restarts`` > 1 the fit runs from that many distinct random
    initializations and the model with the lowest objective on a shared
    evaluation sample set is returned (deterministic given the seed).
    """
    if restarts > 1:
        if init is not None:
            raise DataError("restarts > 1 and an explicit init conflict")
        candidates = [
            solve_static(X, rank, loss, cfg, max_epochs=max_epochs,
                         iters_per_epoch=iters_per_epoch, rate=rate, tol=tol,
                         seed_key=seed_key + r)
            for r in range(restarts)
        ]
        if cfg.gradient_mode == "dense-gaussian":
            scores = [gaussian_sum_sq_residual(X, c.model.factors,
                                               c.model.weights)
                      for c in candidates]
        else:
            p_eval, q_eval = cfg.samples.objective_counts(X)
            eval_samples = draw_samples(
                X, p_eval, q_eval,
                rng_at(cfg.samples.seed, seed_key, PHASE_RESTART_EVAL),
                cfg.samples.max_rejects)
            scores = [estimate_objective(X, c.model.factors, c.model.weights,
                                         loss, eval_samples,
                                         reg_factors=cfg.reg_factors,
                                         reg_weights=cfg.reg_weights)
                      for c in candidates]
        return candidates[int(np.argmin(scores))]
    _check_gradient_mode(cfg, loss)
    seed = cfg.samples.seed
    max_epochs = cfg.max_epochs_factors if max_epochs is None else max_epochs
    iters = cfg.iters_factors if iters_per_epoch is None else iters_per_epoch
    rate = cfg.rate_factors if rate is None else rate
    tol = cfg.tol_factors if tol is None else tol

    if init is None:
        rng0 = rng_at(seed, seed_key, PHASE_INIT)
        factors = [rng0.uniform(size=(d, rank)) for d in X.dims]
        weights = rng0.uniform(size=rank)
    else:
        if init.dims != X.dims or init.rank != rank:
            raise DataError("init model does not match tensor dims/rank")
        factors = [a.copy() for a in init.factors]
        weights = init.weights.copy()

    adam = cfg.make_adam(rate, loss)
    variables = [weights] + factors
    adam.init(variables)
    variables = adam.update(variables, True)

    if cfg.gradient_mode == "dense-gaussian":
        def fest_fn(vs):
            val = gaussian_sum_sq_residual(X, vs[1:], vs[0])
            val += 0.5 * cfg.reg_factors * sum(
                float(np.sum(a * a)) for a in vs[1:])
            val += 0.5 * cfg.reg_weights * float(vs[0] @ vs[0])
            return val
    else:
        p_obj, q_obj = cfg.samples.objective_counts(X)
        obj_samples = draw_samples(X, p_obj, q_obj,
                                   rng_at(seed, seed_key, PHASE_STATIC_OBJ),
                                   cfg.samples.max_rejects)

        def fest_fn(vs):
            return estimate_objective(X, vs[1:], vs[0], loss, obj_samples,
                                      reg_factors=cfg.reg_factors,
                                      reg_weights=cfg.reg_weights)

    p, q = cfg.samples.gradient_counts(X)
    trace = EpochTrace()
    fest = fest_fn(variables)
    trace.objective.append(fest)
    i = 0
    for epoch in range(max_epochs):
        if not fest > tol:
            break
        fest_old = fest
        for it in range(iters):
            weights, factors = variables[0], variables[1:]
            if cfg.gradient_mode == "dense-gaussian":
                g_s = _dense_gaussian_weight_gradient(X, factors, weights,
                                                      cfg.reg_weights)
                g_f = dense_gaussian_factor_gradients(
                    X, factors, weights, reg_factors=cfg.reg_factors)
            else:
                rng = rng_at(seed, seed_key, PHASE_STATIC_GRAD, epoch, it)
                Y = sampled_gradient_tensor(X, factors, weights, loss, p, q,
                                            rng, cfg.samples.max_rejects)
                g_s = (weight_gradient_mttkrp(Y, factors)
                       + cfg.reg_weights * weights)
                g_f = factor_gradients(Y, factors, weights,
                                       reg_factors=cfg.reg_factors)
            variables = adam.step(variables, [g_s] + g_f, i + 1)
            i += 1
            _ensure_finite(variables, "static solve", seed_key)
        fest = fest_fn(variables)
        if not math.isfinite(fest):
            raise DivergenceError("static solve diverged")
        if fest > fest_old:
            variables = adam.update(variables, False)
            fest = fest_old
            i -= iters
            trace.rejections += 1
        else:
            variables = adam.update(variables, True)
        trace.epochs += 1
        trace.objective.append(fest)
    return StaticSolve(KTensor(variables[0], variables[1:]), trace)
