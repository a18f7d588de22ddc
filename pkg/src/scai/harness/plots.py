"""Figures drawn from a batch summary, written as PNG files."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from scai.harness.stats import BatchSummary  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "figure.dpi": 120,
}
COLORS = {"users": "#4c72b0", "assistant": "#dd8452"}


def _band(ax, epochs, s, label, color):
    pts = [(e, m, lo, hi) for e, m, lo, hi in zip(epochs, s.mean, s.ci_low, s.ci_high) if m is not None]
    if not pts:
        return
    xs = [p[0] for p in pts]
    ax.plot(xs, [p[1] for p in pts], marker="o", ms=3, lw=1.2, color=color, label=label)
    ci = [p for p in pts if p[2] is not None]
    if ci:
        ax.fill_between([p[0] for p in ci], [p[2] for p in ci], [p[3] for p in ci], color=color, alpha=0.2, lw=0)


def offer_figure(summary: BatchSummary, title: str = ""):
    """Mean offered share per epoch with 95% CI bands."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.8))
        _band(ax, summary.epochs, summary.users, "users", COLORS["users"])
        _band(ax, summary.epochs, summary.assistant, "assistant", COLORS["assistant"])
        ax.set_xlabel("epoch")
        ax.set_ylabel("offered share (%)")
        ax.set_ylim(-5, 105)
        ax.set_xticks(summary.epochs)
        if title:
            ax.set_title(title, fontsize=9)
        ax.legend(loc="best")
        fig.tight_layout()
    return fig


def test_figure(summary: BatchSummary, title: str = ""):
    """Assistant test-phase offers per currency."""
    names = list(summary.test)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.2, 2.8))
        means = [summary.test[c]["mean"] or 0.0 for c in names]
        err = [
            (summary.test[c]["mean"] - summary.test[c]["ci_low"]) if summary.test[c]["ci_low"] is not None else 0.0
            for c in names
        ]
        ax.bar(range(len(names)), means, yerr=err, color=COLORS["assistant"], capsize=3, width=0.6)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=15)
        ax.set_ylabel("offered share (%)")
        ax.set_ylim(0, 105)
        if title:
            ax.set_title(title, fontsize=9)
        fig.tight_layout()
    return fig


def render_figures(summary: BatchSummary, out_dir, title: str = "") -> list[Path]:
    fig_dir = Path(out_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []
    fig = offer_figure(summary, title)
    path = fig_dir / "offers.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)
    if summary.test:
        fig = test_figure(summary, title)
        path = fig_dir / "test_offers.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written
