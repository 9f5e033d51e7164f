"""Figure data: edge surfaces over rate pairs and scree plots.

Only CSV grids and a standalone render script are produced here; the PNGs
come from :mod:`mate.plotting`, which is the sole matplotlib user.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..edges import DiscreteMeasure, feature_edge, sample_edge

RENDER_SCRIPT = '''"""Render the CSV grids in this directory to PNG files."""
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent

for path in sorted(here.glob("edge_*.csv")):
    rows = list(csv.DictReader(open(path)))
    r1 = np.array([float(r["rate1"]) for r in rows])
    r2 = np.array([float(r["rate2"]) for r in rows])
    lam = np.array([float(r["lambda_plus"]) for r in rows])
    k = len(np.unique(r1))
    fig, ax = plt.subplots(figsize=(4.5, 3.8))
    cs = ax.contourf(r1.reshape(k, -1), r2.reshape(k, -1), lam.reshape(k, -1), levels=20)
    fig.colorbar(cs, ax=ax, label="rightmost edge")
    ax.set_xlabel("rate 1")
    ax.set_ylabel("rate 2")
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)

for path in sorted(here.glob("scree_*.csv")):
    rows = list(csv.DictReader(open(path)))
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot([int(r["index"]) for r in rows], [float(r["eigenvalue"]) for r in rows], "o", ms=3)
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
'''


def edge_grid(gamma: float, rates1: Sequence[float], rates2: Sequence[float], kind: str = "feature", sigma2: float = 1.0):
    """Rows ``(rate1, rate2, lambda_plus)`` for two equal blocks at each rate pair."""
    rows = []
    for a in rates1:
        for b in rates2:
            m = DiscreteMeasure((a * sigma2, b * sigma2) if kind == "feature" else (a, b), (0.5, 0.5))
            if kind == "feature":
                lam = feature_edge(gamma, m).lambda_plus
            elif kind == "sample":
                lam = sample_edge(gamma, m, sigma2).lambda_plus
            else:
                raise ValueError(f"kind must be feature or sample, got {kind!r}")
            rows.append((float(a), float(b), float(lam)))
    return rows


def write_edge_grid(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("rate1", "rate2", "lambda_plus"))
        for row in rows:
            w.writerow([repr(v) for v in row])
    return Path(path)


def write_scree(path, eigenvalues, top: Optional[int] = 100):
    lam = np.asarray(eigenvalues)[:top]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "eigenvalue"))
        for i, v in enumerate(lam, start=1):
            w.writerow((i, repr(float(v))))
    return Path(path)


def emit_figures(
    out,
    gamma_feature: float = 0.5,
    gamma_sample: float = 2.0,
    grid: int = 10,
    spectrum=None,
    render: bool = True,
):
    """Write edge-surface grids, an optional scree CSV and the render script.

    The default gammas mirror the two edge figures: feature blocks at
    ``gamma = 0.5`` and sample blocks at ``gamma = 2``.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rates = np.round(np.linspace(0.1, 1.0, grid), 10)
    paths = {
        "edge_feature": write_edge_grid(out / "edge_feature.csv", edge_grid(gamma_feature, rates, rates, "feature")),
        "edge_sample": write_edge_grid(out / "edge_sample.csv", edge_grid(gamma_sample, rates, rates, "sample")),
    }
    if spectrum is not None:
        eig = getattr(spectrum, "eigenvalues", spectrum)
        paths["scree"] = write_scree(out / "scree_data.csv", eig)
    script = out / "render_figures.py"
    script.write_text(RENDER_SCRIPT)
    paths["script"] = script
    if render:
        from .. import plotting

        paths.update(plotting.render_directory(out))
    return paths
