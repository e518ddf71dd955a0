"""Figure rendering for report outputs.

Everything draws through the Agg backend and writes PNG files next to the
delimited report output; no interactive windows are ever opened.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

import numpy as np  # noqa: E402


def _finish(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def loss_curve(values, path: str, title: str = "loss",
               ylabel: str = "loss", xlabel: str = "step") -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(values)), values, lw=1.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def bar_chart(labels, values, path: str, title: str = "",
              ylabel: str = "") -> str:
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(labels)), 4))
    ax.bar(range(len(labels)), values, color="steelblue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels([str(l) for l in labels], rotation=20, ha="right")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    return _finish(fig, path)


def grouped_bars(group_labels, series: dict, path: str, title: str = "",
                 ylabel: str = "") -> str:
    """One bar group per label; one color per series entry."""
    names = list(series)
    width = 0.8 / max(len(names), 1)
    x = np.arange(len(group_labels), dtype=float)
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(group_labels)), 4))
    for i, name in enumerate(names):
        ax.bar(x + (i - (len(names) - 1) / 2) * width, series[name],
               width=width, label=str(name))
    ax.set_xticks(x)
    ax.set_xticklabels([str(l) for l in group_labels], rotation=20, ha="right")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    return _finish(fig, path)


def error_trend(token_counts, red_values, path: str,
                title: str = "error reduction by prompt budget") -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(token_counts, red_values, marker="o")
    ax.set_xlabel("prompt tokens")
    ax.set_ylabel("RED (%)")
    ax.set_title(title)
    ax.set_ylim(0, 100)
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)
