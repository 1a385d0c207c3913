"""Figures written next to the CSV outputs of ``report`` and ``project``."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STATUS_STYLE = {
    "unlabelled": dict(c="0.7", marker=".", s=12, label="unlabelled"),
    "labelled": dict(c="tab:red", marker="o", s=14, label="labelled"),
    "selected": dict(c="k", marker="x", s=28, label="selected"),
}

_RC = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_learning_curves(rows: Sequence, out_prefix) -> list[Path]:
    """One PNG per metric: mean +/- std over seeds against labelled count.

    Uses the labelled fraction on the x axis when the rows carry one.
    """
    out_prefix = Path(out_prefix)
    written = []
    metrics = list(dict.fromkeys(r.metric for r in rows))
    with plt.rc_context(_RC):
        for metric in metrics:
            fig, ax = plt.subplots(figsize=(5.0, 3.4))
            sub = [r for r in rows if r.metric == metric]
            use_frac = all(r.fraction is not None for r in sub)
            for strategy in dict.fromkeys(r.strategy for r in sub):
                pts = sorted((r for r in sub if r.strategy == strategy),
                             key=lambda r: r.labelled_count)
                xs = [r.fraction if use_frac else r.labelled_count for r in pts]
                ax.errorbar(xs, [r.mean for r in pts], yerr=[r.std for r in pts],
                            marker="o", ms=3, capsize=2, lw=1.2, label=strategy)
            ax.set_xlabel("fraction of data labelled" if use_frac else "labelled examples")
            ax.set_ylabel(metric)
            ax.legend(frameon=False)
            fig.tight_layout()
            path = out_prefix.with_name(f"{out_prefix.name}_{metric}.png")
            fig.savefig(path)
            plt.close(fig)
            written.append(path)
    return written


def plot_projection(points: Sequence, path) -> Path:
    path = Path(path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 4.0))
        for status in ("unlabelled", "labelled", "selected"):
            pts = [p for p in points if p.status == status]
            if pts:
                ax.scatter([p.x for p in pts], [p.y for p in pts], **STATUS_STYLE[status])
        ax.set_xlabel("PC 1")
        ax.set_ylabel("PC 2")
        ax.legend(frameon=False, loc="best")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
