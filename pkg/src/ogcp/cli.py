"""Command-line front end.

Subcommands: ``stream`` (warm start + OnlineGCP over a .tns file),
``static`` (whole-tensor GCP fit), ``gen`` (synthetic data), ``score``
(congruence of two K-tensor files). Exit codes: 0 success, 2 usage
error, 3 data error, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import os
import sys
from pathlib import Path

from . import io as tns_io
from .exceptions import DataError, DivergenceError, OgcpError
from .losses import make_loss
from .metrics import SliceMetrics, congruence_score, global_loss, local_loss
from .sampling import PHASE_METRICS, SamplerConfig, rng_at
from .solvers import SolverConfig, solve_static
from .streaming import (load_checkpoint, process_slice, save_checkpoint,
                        warm_start)
from .synthetic import SyntheticSpec, gen_gaussian, gen_poisson
from .tensor import KTensor, SparseTensor

METRICS_HEADER = ["t", "local_loss_sampled", "local_loss_exact",
                  "epochs_w", "epochs_f", "wall_ms"]

# Hyperparameter presets for the reference experiments. All presets use
# theta=1, lambda=mu=0, 100 iterations per epoch, and stock ADAM moment
# parameters; sampling counts follow each experiment's setup ("all"
# means every stored nonzero of the current slice).
PRESETS = {
    "synthetic-gaussian": dict(
        loss="gaussian", rank=20, rate_w=10.0, epochs_w=20, rate_f=1e-4,
        epochs_f=5, hist_weight=1.0, hist_size=50, warm_slices=10,
        fsamp_nz="10000", fsamp_z=0, gsamp_nz="10000", gsamp_z=0),
    "synthetic-poisson": dict(
        loss="poisson", rank=20, rate_w=1.0, epochs_w=20, rate_f=1e-4,
        epochs_f=10, hist_weight=10.0, hist_size=50, warm_slices=10,
        fsamp_nz="all", fsamp_z=50000, gsamp_nz="all", gsamp_z=10000),
    "taxi-poisson": dict(
        loss="poisson", rank=50, rate_w=10.0, epochs_w=1, rate_f=1e-3,
        epochs_f=1, hist_weight=1.0, hist_size=30, warm_slices=20,
        fsamp_nz="50000", fsamp_z=50000, gsamp_nz="10000", gsamp_z=10000),
    "chicago-binary": dict(
        loss="bernoulli", rank=50, rate_w=0.1, epochs_w=5, rate_f=1e-3,
        epochs_f=5, hist_weight=10.0, hist_size=500, warm_slices=20,
        fsamp_nz="all", fsamp_z=10000, gsamp_nz="all", gsamp_z=1000),
}

DEFAULTS = dict(
    loss="gaussian", eps=1e-10, rank=None,
    tol_w=0.0, tol_f=0.0, epochs_w=20, epochs_f=5, iters_w=100, iters_f=100,
    reg_factors=0.0, reg_weights=0.0, hist_weight=0.0, hist_decay=1.0,
    temporal_solver="sgd", gradient="sampled",
    rate_w=0.1, rate_f=1e-3, adam_beta1=0.9, adam_beta2=0.999,
    adam_eps=1e-8, rate_decay=0.1, lower_bound=None,
    fsamp_nz="10000", fsamp_z=10000, gsamp_nz="1000", gsamp_z=1000,
    seed=0, hist_size=50, warm_slices=10, warm_weights=False,
    warm_epochs=50, warm_iters=None, warm_rate=None, warm_restarts=1,
)


def _add_solver_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("model and loss")
    g.add_argument("--loss", choices=("gaussian", "poisson", "bernoulli"))
    g.add_argument("--eps", type=float, help="epsilon inside loss logarithms")
    g.add_argument("--rank", type=int, help="CP rank R")

    g = p.add_argument_group("solver")
    g.add_argument("--tol-w", type=float, help="temporal objective tolerance")
    g.add_argument("--tol-f", type=float, help="factor objective tolerance")
    g.add_argument("--epochs-w", type=int, help="max temporal epochs kappa_w")
    g.add_argument("--epochs-f", type=int, help="max factor epochs kappa_f")
    g.add_argument("--iters-w", type=int, help="iterations per temporal epoch")
    g.add_argument("--iters-f", type=int, help="iterations per factor epoch")
    g.add_argument("--reg-factors", type=float, help="lambda regularization")
    g.add_argument("--reg-weights", type=float, help="mu regularization")
    g.add_argument("--hist-weight", type=float, help="history multiplier w")
    g.add_argument("--hist-decay", type=float, help="history decay theta")
    g.add_argument("--temporal-solver", choices=("sgd", "ls"))
    g.add_argument("--gradient", choices=("sampled", "dense-gaussian"))
    g.add_argument("--warm-weights", action="store_const", const=True,
                   default=None,
                   help="start each temporal solve from the previous step's "
                        "weights instead of zero")

    g = p.add_argument_group("ADAM")
    g.add_argument("--rate-w", type=float, help="temporal learning rate")
    g.add_argument("--rate-f", type=float, help="factor learning rate")
    g.add_argument("--adam-beta1", type=float)
    g.add_argument("--adam-beta2", type=float)
    g.add_argument("--adam-eps", type=float)
    g.add_argument("--rate-decay", type=float,
                   help="learning-rate cut on a rejected epoch")
    g.add_argument("--lower-bound", choices=("0", "-inf"),
                   help="entry lower bound (default: 0 unless gaussian)")

    g = p.add_argument_group("sampling")
    g.add_argument("--fsamp-nz", help="objective nonzero samples (int or 'all')")
    g.add_argument("--fsamp-z", type=int, help="objective zero samples")
    g.add_argument("--gsamp-nz", help="gradient nonzero samples (int or 'all')")
    g.add_argument("--gsamp-z", type=int, help="gradient zero samples")
    g.add_argument("--seed", type=int, help="base RNG seed")

    p.add_argument("--threads", type=int, default=None,
                   help="cap kernel threads (env OGCP_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ogcp",
        description="Streaming generalized CP tensor decomposition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stream", help="warm-start and stream a .tns tensor")
    p.add_argument("--input", help="(d+1)-way .tns file, last mode is time")
    p.add_argument("--output", default="ogcp-out", help="output directory")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--hist-size", type=int, help="history window capacity H")
    p.add_argument("--warm-slices", type=int,
                   help="slices consumed by the warm start")
    p.add_argument("--warm-epochs", type=int,
                   help="max epochs for the warm-start static fit")
    p.add_argument("--warm-iters", type=int,
                   help="iterations per warm-start epoch")
    p.add_argument("--warm-rate", type=float,
                   help="learning rate for the warm-start static fit")
    p.add_argument("--warm-restarts", type=int,
                   help="random restarts for the warm-start fit (best kept)")
    p.add_argument("--slices", type=int, default=None,
                   help="number of slices to stream after the warm start")
    p.add_argument("--score-against", help="ground-truth .ktns to score")
    p.add_argument("--score-every", type=int, default=0,
                   help="score cadence in slices (0: final only)")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--resume", help="checkpoint file to resume from")
    p.add_argument("--merge-duplicates", action="store_true")
    p.add_argument("--no-exact-loss", action="store_true",
                   help="skip the exact per-slice loss column")
    p.add_argument("--no-timing", action="store_true",
                   help="write wall_ms as 0 so metrics.csv is reproducible")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--show-config", action="store_true",
                   help="print the resolved configuration and exit")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("static", help="static GCP fit of a .tns tensor")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="ogcp-out")
    p.add_argument("--out", help="model export path (.ktns)")
    p.add_argument("--merge-duplicates", action="store_true")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--show-config", action="store_true")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_static)

    p = sub.add_parser("gen", help="generate synthetic data")
    p.add_argument("--kind", choices=("gaussian", "poisson"), required=True)
    p.add_argument("--dims", required=True, help="comma-separated, e.g. 50,50,100")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.2,
                   help="gaussian noise standard deviation")
    p.add_argument("--sparsity", type=float, default=0.032,
                   help="poisson target nonzero fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output .tns path")
    p.add_argument("--truth-out", help="ground-truth .ktns path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("score", help="congruence of two .ktns files")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.set_defaults(func=cmd_score)
    return parser


def _resolve_config(args) -> dict:
    """Layer resolution: explicit flag > preset > default."""
    preset = PRESETS.get(getattr(args, "preset", None) or "", {})
    resolved = {}
    for key, default in DEFAULTS.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            resolved[key] = cli_val
        elif key in preset:
            resolved[key] = preset[key]
        else:
            resolved[key] = default
    if resolved["temporal_solver"] == "ls":
        resolved["temporal_solver"] = "least-squares"
    return resolved


def _parse_count(value) -> int | None:
    if value is None or value == "all":
        return None
    return int(value)


def _solver_config(rc: dict) -> SolverConfig:
    lower = rc["lower_bound"]
    if isinstance(lower, str):
        lower = 0.0 if lower == "0" else -math.inf
    samples = SamplerConfig(
        grad_nonzeros=_parse_count(rc["gsamp_nz"]),
        grad_zeros=rc["gsamp_z"],
        obj_nonzeros=_parse_count(rc["fsamp_nz"]),
        obj_zeros=rc["fsamp_z"],
        seed=rc["seed"])
    return SolverConfig(
        tol_weights=rc["tol_w"], tol_factors=rc["tol_f"],
        max_epochs_weights=rc["epochs_w"], max_epochs_factors=rc["epochs_f"],
        iters_weights=rc["iters_w"], iters_factors=rc["iters_f"],
        reg_factors=rc["reg_factors"], reg_weights=rc["reg_weights"],
        hist_weight=rc["hist_weight"], hist_decay=rc["hist_decay"],
        temporal_solver=rc["temporal_solver"], gradient_mode=rc["gradient"],
        warm_start_weights=rc["warm_weights"],
        rate_weights=rc["rate_w"], rate_factors=rc["rate_f"],
        beta1=rc["adam_beta1"], beta2=rc["adam_beta2"],
        adam_eps=rc["adam_eps"], rate_decay=rc["rate_decay"],
        lower_bound=lower, samples=samples)


def _show_config(rc: dict) -> int:
    printable = {k: (v if v is None or isinstance(v, (int, float, str, bool))
                     else str(v)) for k, v in sorted(rc.items())}
    print(json.dumps(printable, indent=2))
    return 0


def _write_metrics(rows, path, timing: bool = True):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for m in rows:
            writer.writerow([m.t, "%.17g" % m.local_loss_sampled,
                             "%.17g" % m.local_loss_exact, m.epochs_weights,
                             m.epochs_factors,
                             "%.3f" % (m.wall_ms if timing else 0.0)])


def _truncate_truth(truth: KTensor, steps: int) -> KTensor:
    if truth.dims[-1] == steps:
        return truth
    if truth.dims[-1] < steps:
        raise DataError(
            f"reference model has {truth.dims[-1]} temporal rows, stream "
            f"observed {steps}")
    factors = list(truth.factors[:-1]) + [truth.factors[-1][:steps]]
    return KTensor(truth.weights, factors)


def cmd_stream(args) -> int:
    rc = _resolve_config(args)
    if args.show_config:
        return _show_config(rc)
    if not args.input:
        raise DataError("--input is required")
    if rc["rank"] is None:
        raise DataError("--rank is required (or select a preset)")
    cfg = _solver_config(rc)
    loss = make_loss(rc["loss"], rc["eps"])
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)

    X = tns_io.read_tns(args.input, merge_duplicates=args.merge_duplicates)
    if X.ndim < 2:
        raise DataError("streaming needs a tensor with a temporal mode")
    total_slices = X.dims[-1]
    n_warm = rc["warm_slices"]
    exact_loss = not args.no_exact_loss

    truth = tns_io.read_ktensor(args.score_against) if args.score_against else None
    scores = []

    if args.resume:
        state = load_checkpoint(args.resume, loss, cfg)
        if state.dims != X.dims[:-1]:
            raise DataError("checkpoint dims do not match the input tensor")
    else:
        if not 1 <= n_warm <= total_slices:
            raise DataError(
                f"warm start needs 1..{total_slices} slices, got {n_warm}")
        block = tns_io.leading_block(X, n_warm)
        import time as _time
        t0 = _time.perf_counter()
        state = warm_start(block, rc["rank"], loss, cfg,
                           history_capacity=rc["hist_size"],
                           max_epochs=rc["warm_epochs"],
                           iters_per_epoch=rc["warm_iters"],
                           rate=rc["warm_rate"],
                           restarts=rc["warm_restarts"])
        warm_ms = (_time.perf_counter() - t0) * 1000.0
        for h in range(1, n_warm + 1):
            X_h = X.slice_view(h)
            model = state.model_at(h)
            sampled = local_loss(
                X_h, model, loss, mode="sampled",
                p=cfg.samples.obj_nonzeros, q=cfg.samples.obj_zeros,
                rng=rng_at(cfg.samples.seed, h, PHASE_METRICS))
            exact = (local_loss(X_h, model, loss, mode="exact").value
                     if exact_loss else float("nan"))
            state.metrics.append(SliceMetrics(
                t=h, local_loss_sampled=sampled.value, local_loss_exact=exact,
                epochs_weights=0, epochs_factors=0,
                wall_ms=warm_ms / n_warm))

    n_stream = total_slices - state.t
    if args.slices is not None:
        n_stream = min(n_stream, args.slices)
    last = state.t + n_stream
    while state.t < last:
        t = state.t + 1
        process_slice(state, X.slice_view(t), loss, cfg, exact_loss=exact_loss)
        if args.checkpoint_every and (t % args.checkpoint_every == 0):
            save_checkpoint(state, outdir / f"checkpoint_{t:06d}.npz")
        if truth is not None and args.score_every and (t % args.score_every == 0):
            score = congruence_score(state.stacked_model(),
                                     _truncate_truth(truth, state.t))
            scores.append((t, score))
            print(f"score t={t} congruence={score:.6f}")

    _write_metrics(state.metrics, outdir / "metrics.csv",
                   timing=not args.no_timing)
    tns_io.write_ktensor(state.stacked_model(), outdir / "final.ktns")

    observed = [X.slice_view(t) for t in range(1, state.t + 1)]
    gl = global_loss(observed, state.factors, state.weights_log, loss)
    print(f"global_loss {gl:.10g}")
    if truth is not None:
        score = congruence_score(state.stacked_model(),
                                 _truncate_truth(truth, state.t))
        scores.append((state.t, score))
        print(f"congruence {score:.6f}")
    if not args.no_plots:
        from .report import render_stream_figures
        render_stream_figures(state.metrics, outdir, scores=scores or None)
    return 0


def cmd_static(args) -> int:
    rc = _resolve_config(args)
    if args.show_config:
        return _show_config(rc)
    if rc["rank"] is None:
        raise DataError("--rank is required")
    cfg = _solver_config(rc)
    loss = make_loss(rc["loss"], rc["eps"])
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)

    X = tns_io.read_tns(args.input, merge_duplicates=args.merge_duplicates)
    result = solve_static(X, rc["rank"], loss, cfg)
    out_path = Path(args.out) if args.out else outdir / "model.ktns"
    tns_io.write_ktensor(result.model, out_path)
    with open(outdir / "objective.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "objective"])
        for e, v in enumerate(result.trace.objective):
            writer.writerow([e, "%.17g" % v])
    print(f"objective {result.trace.objective[-1]:.10g}")
    if X.num_cells <= 50_000_000:
        ll = local_loss(X, result.model, loss, mode="exact")
        print(f"local_loss {ll.value:.10g}")
    if not args.no_plots:
        from .report import render_static_figure
        render_static_figure(result.trace.objective, outdir)
    return 0


def cmd_gen(args) -> int:
    dims = tuple(int(v) for v in args.dims.split(","))
    spec = SyntheticSpec(kind=args.kind, dims=dims, rank=args.rank,
                         noise=args.noise, density=args.sparsity,
                         seed=args.seed)
    data, truth = gen_gaussian(spec) if args.kind == "gaussian" \
        else gen_poisson(spec)
    tns_io.write_tns(data, args.out)
    if args.truth_out:
        tns_io.write_ktensor(truth, args.truth_out)
    print(f"generated dims={dims} nnz={data.nnz} "
          f"density={data.nnz / data.num_cells:.4g}")
    return 0


def cmd_score(args) -> int:
    a = tns_io.read_ktensor(args.model_a)
    b = tns_io.read_ktensor(args.model_b)
    print(f"{congruence_score(a, b):.6f}")
    return 0


def _thread_limit(n):
    if n is None:
        env = os.environ.get("OGCP_THREADS", "")
        n = int(env) if env.strip() else None
    if n is None:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
        return threadpool_limits(limits=n)
    except ImportError:
        return contextlib.nullcontext()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit(getattr(args, "threads", None)):
            return args.func(args)
    except DivergenceError as exc:
        print(f"ERROR divergence: {exc}", file=sys.stderr)
        return 4
    except (DataError, OgcpError, OSError) as exc:
        print(f"ERROR data: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
