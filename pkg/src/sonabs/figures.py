"""Figure rendering for the CLI report paths.

Each helper takes the plot-ready data produced elsewhere and writes a PNG
next to the delimited output. Nothing here feeds back into computation.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from sonabs.evaluate import EvaluationReport, ScenarioComparison
from sonabs.network.training import EpochRecord

DPI = 150


def save_transfer_function_figure(grid_f, h12, path) -> Path:
    fig, axes = plt.subplots(2, 1, figsize=(6.5, 5.5), sharex=True)
    axes[0].plot(grid_f, np.real(h12), color="tab:blue")
    axes[0].set_ylabel("Re $H_{12}$")
    axes[1].plot(grid_f, np.imag(h12), color="tab:orange")
    axes[1].set_ylabel("Im $H_{12}$")
    axes[1].set_xlabel("Frequency [Hz]")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def save_absorption_figure(grid_f, curves: dict, path, title: str | None = None) -> Path:
    """curves: label -> alpha array; draws all on one axis with a zero line."""
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    styles = {
        "reference": dict(color="black", lw=1.8),
        "traditional": dict(color="tab:green", lw=1.2),
        "network": dict(color="tab:red", ls="--", lw=1.5),
    }
    for label, alpha in curves.items():
        ax.plot(grid_f, alpha, label=label, **styles.get(label, {}))
    ax.axhline(0.0, color="gray", lw=0.6)
    ax.set_xlabel("Frequency [Hz]")
    ax.set_ylabel(r"Absorption coefficient $\alpha$")
    ax.set_ylim(min(-0.3, min(a.min() for a in curves.values()) - 0.05), 1.05)
    ax.grid(alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def save_history_figure(history: list[EpochRecord], path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    epochs = [r.epoch for r in history]
    ax.semilogy(epochs, [r.train_loss for r in history], label="training loss")
    ax.semilogy(epochs, [r.val_loss for r in history], label="validation loss")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("MSE")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def save_mse_histogram_figure(report: EvaluationReport, path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    edges = report.histogram_bins
    centers = np.sqrt(edges[:-1] * edges[1:])
    width = np.diff(edges)
    ax.bar(centers, report.histogram_2mic, width=width, alpha=0.55,
           label="two-microphone", color="tab:green")
    ax.bar(centers, report.histogram_nn, width=width, alpha=0.55,
           label="network", color="tab:red")
    ax.set_xscale("log")
    ax.set_xlabel("MSE per sample")
    ax.set_ylabel("Count")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def save_comparison_figure(comp: ScenarioComparison, path) -> Path:
    return save_absorption_figure(
        comp.frequency_hz,
        {
            "reference": comp.alpha_miki,
            "traditional": comp.alpha_2mic,
            "network": comp.alpha_nn,
        },
        path,
        title=comp.name,
    )
