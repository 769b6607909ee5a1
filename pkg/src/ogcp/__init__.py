"""Streaming generalized CP tensor decomposition.

Library layout mirrors the pipeline: tensor/losses are the data model,
sampling/kernels the estimators, adam/solvers the optimizers, streaming
the per-slice driver, metrics/io/synthetic/report the surrounding
tooling, and cli the command-line front end.
"""

from .adam import Adam
from .exceptions import DataError, DivergenceError, OgcpError, SamplingError
from .io import (leading_block, read_ktensor, read_tns, stream_slices,
                 write_ktensor, write_tns)
from .kernels import (dense_gaussian_mttkrp_gradient, gram, history_penalty,
                      ktensor_inner, sampled_mttkrp, weight_gradient_mttkrp)
from .losses import LossFunction, make_loss
from .metrics import (LocalLoss, SliceMetrics, congruence_score, global_loss,
                      local_loss)
from .sampling import (SamplerConfig, SampleSet, draw_samples,
                       estimate_objective, rng_at, sampled_gradient_tensor)
from .solvers import (SolverConfig, solve_factors, solve_static, solve_weights,
                      solve_weights_least_squares)
from .streaming import (HistoryWindow, StreamState, load_checkpoint,
                        process_slice, run_stream, save_checkpoint, warm_start)
from .synthetic import SyntheticSpec, gen_gaussian, gen_poisson
from .tensor import KTensor, SparseTensor

__version__ = "0.1.0"

__all__ = [
    "Adam", "DataError", "DivergenceError", "OgcpError", "SamplingError",
    "HistoryWindow", "KTensor", "LocalLoss", "LossFunction", "SampleSet",
    "SamplerConfig", "SliceMetrics", "SolverConfig", "SparseTensor",
    "StreamState", "SyntheticSpec", "congruence_score",
    "dense_gaussian_mttkrp_gradient", "draw_samples", "estimate_objective",
    "gen_gaussian", "gen_poisson", "global_loss", "gram", "history_penalty",
    "ktensor_inner", "leading_block", "load_checkpoint", "local_loss",
    "make_loss",
    "process_slice", "read_ktensor", "read_tns", "rng_at", "run_stream",
    "sampled_gradient_tensor", "sampled_mttkrp", "save_checkpoint",
    "solve_factors", "solve_static", "solve_weights",
    "solve_weights_least_squares", "stream_slices", "warm_start",
    "weight_gradient_mttkrp", "write_ktensor", "write_tns",
]
