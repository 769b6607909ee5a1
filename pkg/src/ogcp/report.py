"""Figure rendering for stream and static runs.

Figures are written next to the delimited metrics output; the renderer
uses the Agg backend so it works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_stream_figures(rows, outdir, scores=None) -> list:
    """Loss and epoch curves from per-slice metrics rows.

    ``scores`` is an optional list of (t, congruence) pairs from scoring
    against a reference model.
    """
    outdir = Path(outdir)
    written = []
    ts = [m.t for m in rows]

    fig, ax = plt.subplots(figsize=(7, 4))
    sampled = [m.local_loss_sampled for m in rows]
    exact = [m.local_loss_exact for m in rows]
    ax.plot(ts, sampled, color="tab:blue", lw=1.2, label="sampled")
    if any(e == e for e in exact):  # any non-nan
        ax.plot(ts, exact, color="tab:orange", lw=1.2, ls="--", label="exact")
    if all(v > 0 for v in sampled if v == v):
        ax.set_yscale("log")
    ax.set_xlabel("slice t")
    ax.set_ylabel("local loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = outdir / "local_loss.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(ts, [m.epochs_weights for m in rows], color="tab:green",
            lw=1.0, label="weight epochs")
    ax.plot(ts, [m.epochs_factors for m in rows], color="tab:red",
            lw=1.0, label="factor epochs")
    ax.set_xlabel("slice t")
    ax.set_ylabel("epochs")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = outdir / "epochs.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    if scores:
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot([s[0] for s in scores], [s[1] for s in scores],
                color="tab:purple", marker="o", lw=1.0)
        ax.set_xlabel("slice t")
        ax.set_ylabel("congruence")
        ax.set_ylim(-1.05, 1.05)
        fig.tight_layout()
        path = outdir / "congruence.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def render_static_figure(trace, outdir) -> Path:
    """Objective estimate across accepted epochs."""
    outdir = Path(outdir)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(range(len(trace)), trace, color="tab:blue", lw=1.2)
    if all(v > 0 for v in trace):
        ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("objective estimate")
    fig.tight_layout()
    path = outdir / "objective.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
