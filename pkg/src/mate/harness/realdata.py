"""Real-data pipeline and principal-component imputation RMSE."""

from __future__ import annotations

import csv
import time
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from ..datagen import Homogeneous, IncompleteMatrix, ingest_csv, standardize, write_csv
from ..errors import DegenerateFeatureError, GridError, ParameterError
from ..estimators import MateConfig, baseline_m_ed, baseline_m_er, baseline_m_gr, mate_anisotropic, mate_isotropic
from ..spectra import sample_cov_eigs

REALDATA_ESTIMATORS = ("mate", "mate-aniso", "m-er", "m-gr", "m-ed")


def mask_entries(x: IncompleteMatrix, missing_rate: float, seed) -> IncompleteMatrix:
    """Hide each observed entry independently with probability ``missing_rate``."""
    if not 0 <= missing_rate < 1:
        raise ParameterError(f"missing rate must lie in [0, 1), got {missing_rate}")
    if missing_rate == 0:
        return IncompleteMatrix(x.values.copy(), x.mask.copy())
    keep = np.random.default_rng(seed).random(x.shape) >= missing_rate
    mask = x.mask & keep
    return IncompleteMatrix(np.where(mask, x.values, 0.0), mask)


def _check_features(x: IncompleteMatrix, minimum: int = 2):
    counts = x.mask.sum(axis=1)
    bad = np.nonzero(counts < minimum)[0]
    if bad.size:
        raise DegenerateFeatureError(f"feature keeps {int(counts[bad[0]])} observed entries after masking", int(bad[0]))


def run_estimators(x: IncompleteMatrix, names: Iterable[str], cfg: MateConfig, seed) -> list:
    """Apply each named estimator to one dataset; returns rows with r_hat and seconds."""
    rows = []
    spec = None
    for name in names:
        t0 = time.perf_counter()
        extra = {}
        if name == "mate":
            res = mate_isotropic(x, Homogeneous(), cfg, seed)
            r, extra = res.r_hat, dict(v=res.v, epsilon_n=res.epsilon_n, sigma2_hat=res.sigma2_hat)
        elif name == "mate-aniso":
            res = mate_anisotropic(x, cfg, seed)
            r = res.r_hat
            extra = dict(v=res.v, epsilon_n=res.epsilon_n, sigma2_hat=res.sigma2_hat, theta_hat=res.theta_hat)
        else:
            spec = spec if spec is not None else sample_cov_eigs(x)
            fn = {"m-er": baseline_m_er, "m-gr": baseline_m_gr, "m-ed": baseline_m_ed}.get(name)
            if fn is None:
                raise ParameterError(f"unknown estimator {name!r}; choose from {REALDATA_ESTIMATORS}")
            r = fn(spec, x.observed_fraction, cfg.r_max)
        rows.append(dict(estimator=name, r_hat=int(r), seconds=time.perf_counter() - t0, **extra))
    return rows


def real_data_pipeline(
    path,
    missing_rate: float = 0.3,
    seed=10,
    estimators: Sequence[str] = REALDATA_ESTIMATORS,
    cfg: MateConfig = MateConfig(M=200),
    out: Optional[Path] = None,
    transpose: bool = False,
    skip_header: bool = False,
    missing_token: str = "NA",
) -> Dict:
    """Ingest, standardize, mask and estimate the factor count of a CSV panel.

    Rows of the CSV are features unless ``transpose`` is set.  Returns the
    masked matrix and one result row per estimator; with ``out`` the results
    table and the masked matrix are written there.
    """
    x = ingest_csv(path, missing_token=missing_token, skip_header=skip_header, transpose=transpose)
    x = standardize(x)
    xm = mask_entries(x, missing_rate, seed)
    _check_features(xm)
    rows = run_estimators(xm, estimators, cfg, seed)
    result = dict(matrix=xm, standardized=x, rows=rows)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        fields = ("estimator", "r_hat", "seconds")
        with open(out / "realdata.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for row in rows:
                w.writerow([row["estimator"], row["r_hat"], f"{row['seconds']:.4f}"])
        write_csv(xm, out / "masked.csv")
        result["paths"] = dict(report=out / "realdata.csv", masked=out / "masked.csv")
    return result


def pc_impute(x: IncompleteMatrix, r: int, rescale: bool = True) -> np.ndarray:
    """Rank-``r`` principal-component reconstruction of a zero-filled matrix.

    Loadings are ``sqrt(d)`` times the top eigenvectors of ``X0 X0^T / n``
    and factors ``L^T X0 / (d p)``, so the fit is ``V V^T X0 / p``.
    ``rescale=False`` drops the ``1/p`` inverse-probability factor.
    """
    d, n = x.shape
    if not 1 <= r < min(d, n):
        raise GridError(f"rank {r} outside [1, {min(d, n) - 1}]")
    p = x.observed_fraction if rescale else 1.0
    g = x.values @ x.values.T / n
    _, vecs = np.linalg.eigh(g)
    v = vecs[:, ::-1][:, :r]
    loadings = np.sqrt(d) * v
    factors = loadings.T @ x.values / (d * p)
    return loadings @ factors


def rmse_rank_validation(
    x_true,
    x_masked: IncompleteMatrix,
    r_grid: Sequence[int],
    repeats: int = 20,
    seed=0,
    rescale: bool = True,
) -> Dict[int, float]:
    """Average imputation RMSE over repeated maskings for each candidate rank.

    Repeat 0 uses the mask of ``x_masked``; later repeats draw fresh masks at
    its observed fraction.  RMSE is taken over the hidden cells.
    """
    x_true = np.asarray(x_true, dtype=float)
    d, n = x_true.shape
    if x_masked.shape != x_true.shape:
        raise GridError(f"shape mismatch {x_masked.shape} vs {x_true.shape}")
    if not r_grid:
        raise GridError("empty rank grid")
    bad = [r for r in r_grid if not 1 <= r < min(d, n)]
    if bad:
        raise GridError(f"ranks {bad} outside [1, {min(d, n) - 1}]")
    p = x_masked.observed_fraction
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(repeats)]
    totals = {r: 0.0 for r in r_grid}
    for k in range(repeats):
        if k == 0:
            mask = x_masked.mask
        else:
            mask = rngs[k].random((d, n)) < p
        xm = IncompleteMatrix(np.where(mask, x_true, 0.0), mask)
        hidden = ~mask if (~mask).any() else np.ones_like(mask)
        for r in r_grid:
            fit = pc_impute(xm, r, rescale)
            totals[r] += float(np.sqrt(np.mean((fit[hidden] - x_true[hidden]) ** 2)))
    return {r: totals[r] / repeats for r in r_grid}
