"""Matplotlib rendering of harness outputs (imported lazily by the CLI)."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def render_edge_surface(csv_path, png_path=None):
    rows = _read(csv_path)
    r1 = np.array([float(r["rate1"]) for r in rows])
    r2 = np.array([float(r["rate2"]) for r in rows])
    lam = np.array([float(r["lambda_plus"]) for r in rows])
    k = len(np.unique(r1))
    fig, ax = plt.subplots(figsize=(4.5, 3.8))
    cs = ax.contourf(r1.reshape(k, -1), r2.reshape(k, -1), lam.reshape(k, -1), levels=20, cmap="viridis")
    fig.colorbar(cs, ax=ax, label=r"$\lambda_+$")
    ax.plot([r1.min(), r1.max()], [r1.min(), r1.max()], "w--", lw=0.8)
    ax.set_xlabel("rate of block 1")
    ax.set_ylabel("rate of block 2")
    fig.tight_layout()
    png_path = Path(png_path or Path(csv_path).with_suffix(".png"))
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path


def render_scree(csv_path, png_path=None, threshold=None):
    rows = _read(csv_path)
    idx = [int(r["index"]) for r in rows]
    lam = [float(r["eigenvalue"]) for r in rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(idx, lam, "o", ms=3)
    if threshold is not None:
        ax.axhline(threshold, color="C3", lw=1, label="threshold")
        ax.legend(frameon=False)
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    fig.tight_layout()
    png_path = Path(png_path or Path(csv_path).with_suffix(".png"))
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path


def render_directory(out):
    """Render every ``edge_*.csv`` and ``scree_*.csv`` in ``out``."""
    out = Path(out)
    paths = {}
    for p in sorted(out.glob("edge_*.csv")):
        paths[p.stem + "_png"] = render_edge_surface(p)
    for p in sorted(out.glob("scree_*.csv")):
        paths[p.stem + "_png"] = render_scree(p)
    return paths


def render_report(report, png_path):
    """Mean estimated count per setting and estimator, with the true count marked."""
    labels = list(dict.fromkeys(r["label"] for r in report))
    names = list(dict.fromkeys(r["estimator"] for r in report))
    width = 0.8 / max(len(names), 1)
    fig, ax = plt.subplots(figsize=(max(4.5, 0.9 * len(labels) + 1.5), 3.6))
    x = np.arange(len(labels))
    for j, name in enumerate(names):
        means = [
            next((r["mean"] for r in report if r["label"] == lab and r["estimator"] == name), math.nan)
            for lab in labels
        ]
        ax.bar(x + (j - (len(names) - 1) / 2) * width, means, width, label=name)
    truth = [next(r["r_true"] for r in report if r["label"] == lab) for lab in labels]
    ax.scatter(x, truth, marker="_", s=400, color="k", zorder=3, label="true r")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("mean estimate")
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    png_path = Path(png_path)
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path
