"""Presentation-only SVG plots. Nothing in the pipeline reads these back."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scoring import ScoreTable


def plot_score_histogram(table: ScoreTable, path: str | Path, bins: int = 50) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(np.asarray(table.scores), bins=bins, color="#4878b0", edgecolor="white", linewidth=0.3)
    ax.set_xlabel(f"{table.metric} score")
    ax.set_ylabel("examples")
    ax.set_title(f"{table.metric} distribution (n={table.scores.size})")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_class_counts(counts, path: str | Path, title: str = "class counts") -> None:
    counts = np.asarray(counts, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(np.arange(counts.size), counts, color="#b05048", edgecolor="white", linewidth=0.3)
    ax.set_xlabel("class")
    ax.set_ylabel("count")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
