"""Render PNG figures for run artifacts (headless backend)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _finite_pairs(xs, ys):
    pairs = [(x, y) for x, y in zip(xs, ys) if not math.isnan(y)]
    return ([p[0] for p in pairs], [p[1] for p in pairs])


def render_balance_figure(epochs, scores, out_path) -> None:
    xs, ys = _finite_pairs(epochs, scores)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(xs, ys, marker="o", markersize=3, color="tab:purple")
    ax.set_xlabel("epoch")
    ax.set_ylabel("modality balance score")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_consistency_figure(epochs, dots: dict[str, list], out_path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for name, series in dots.items():
        xs, ys = _finite_pairs(epochs, series)
        ax.plot(xs, ys, marker="o", markersize=3, label=f"user - {name}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean dot product")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_sweep_figure(values, means, stds, param: str, metric: str, out_path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.errorbar(values, means, yerr=stds, marker="o", markersize=4, capsize=3)
    ax.set_xlabel(param)
    ax.set_ylabel(metric)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
