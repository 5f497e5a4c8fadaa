"""Figure rendering for the report paths.

Each CLI command that writes delimited output can also render a matching
PNG next to it. Everything goes through the Agg backend; nothing opens a
display.
"""
from __future__ import annotations

from typing import Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricReport


def save_rounds_figure(rounds: Sequence[int], accuracy: Sequence[float],
                       seconds: Sequence[float], path) -> None:
    """Accuracy per round with the per-round exchange time on a twin axis."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(rounds, accuracy, marker="o", color="tab:blue", label="accuracy")
    ax.set_xlabel("round")
    ax.set_ylabel("test accuracy", color="tab:blue")
    ax.set_ylim(0.0, 1.0)
    ax2 = ax.twinx()
    ax2.plot(rounds, [s * 1e3 for s in seconds], marker=".",
             color="tab:orange", alpha=0.7, label="exchange time")
    ax2.set_ylabel("exchange ms", color="tab:orange")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_attack_figure(traces: Sequence[Sequence[float]],
                       s_p_values: Sequence[float], path) -> None:
    """Per-sample gradient-match loss curves and the S_p distribution."""
    fig, (ax_l, ax_r) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for trace in traces:
        if trace:
            ax_l.plot(range(1, len(trace) + 1), trace, alpha=0.5, lw=0.9)
    ax_l.set_yscale("log")
    ax_l.set_xlabel("iteration")
    ax_l.set_ylabel("gradient-match loss")
    ax_r.bar(range(len(s_p_values)), s_p_values, color="tab:green")
    ax_r.axhline(sum(s_p_values) / max(len(s_p_values), 1),
                 color="black", ls="--", lw=1, label="mean")
    ax_r.set_xlabel("sample")
    ax_r.set_ylabel("privacy score")
    ax_r.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_bench_figure(sides: Sequence[int], millis: Sequence[float], path) -> None:
    """Granulation time against image side length, log-log."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(sides, millis, marker="o")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("image side (px)")
    ax.set_ylabel("granulation time (ms)")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_report_figure(report: MetricReport, path) -> None:
    """Bar chart of the four headline metrics."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    names = ["accuracy", "CE", "S_p", "PEUM"]
    values = [report.accuracy, report.ce, report.s_p, report.peum]
    bars = ax.bar(names, values,
                  color=["tab:blue", "tab:orange", "tab:green", "tab:red"])
    for bar, value in zip(bars, values):
        ax.annotate(f"{value:.3f}", (bar.get_x() + bar.get_width() / 2, value),
                    ha="center", va="bottom", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
