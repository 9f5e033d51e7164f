"""Monte Carlo simulation sweeps: generate, mask, estimate, aggregate.

Every replication draws its data, mask and estimator randomness from
``SeedSequence([seed, setting_index, rep, stream])``, so results do not depend
on worker count, completion order or which other settings are in the sweep.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from ..datagen import FeatureBlocks, Homogeneous, SampleBlocks, apply_mcar, generate_complete
from ..edges import DiscreteMeasure, adjusted_spikes, count_identifiable, feature_edge, mp_edge, sample_edge
from ..estimators import (
    MateConfig,
    baseline_m_ed,
    baseline_m_er,
    baseline_m_gr,
    mate_anisotropic,
    mate_isotropic,
    population_threshold,
)
from ..spectra import sample_cov_eigs
from .config import ExperimentConfig, Setting

log = logging.getLogger(__name__)

LOG_FIELDS = (
    "setting", "label", "rep", "estimator", "status", "r_hat", "r_true",
    "theta_hat", "sigma2_hat", "v", "epsilon_n", "iterations", "converged", "error",
)
REPORT_FIELDS = (
    "setting", "label", "estimator", "r_true", "r_identifiable", "n_ok", "failures",
    "mean", "mse", "under", "over", "mean_theta", "mean_sigma2", "converged_rate",
)


def _seed(master, si, rep, stream):
    return [int(master), int(si), int(rep), int(stream)]


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------


def _mate(x, setting: Setting, cfg: MateConfig, seed, spectrum):
    if setting.preset.anisotropic:
        grouping = setting.grouping if isinstance(setting.missingness, SampleBlocks) else None
        return mate_anisotropic(x, cfg, seed, grouping=grouping)
    if setting.epsilon_override is not None:
        cfg = replace(cfg, epsilon_override=setting.epsilon_override)
    if setting.population_threshold:
        spec = setting.spec
        v = population_threshold(setting.missingness, spec.d / spec.n, spec.noise.sigma2)
        cfg = replace(cfg, v_override=v)
    return mate_isotropic(x, setting.grouping, cfg, seed)


def _baseline(fn):
    def run(x, setting, cfg, seed, spectrum):
        return fn(spectrum(), x.observed_fraction, cfg.r_max)

    return run


ESTIMATORS: Dict[str, Callable] = {
    "mate": _mate,
    "m-er": _baseline(baseline_m_er),
    "m-gr": _baseline(baseline_m_gr),
    "m-ed": _baseline(baseline_m_ed),
}


def identifiable_count(setting: Setting) -> float:
    """Population count ``r_1`` for isotropic settings; NaN when undefined."""
    preset, spec = setting.preset, setting.spec
    if preset.anisotropic:
        return math.nan
    s2 = spec.noise.sigma2
    lam = [s + s2 for s in spec.spikes] if spec.spike_mode == "loading" else list(spec.spikes)
    gamma, m = spec.gamma, setting.missingness
    if isinstance(m, Homogeneous):
        return count_identifiable(lam, mp_edge(1.0, s2, gamma).alpha_plus)
    if isinstance(m, FeatureBlocks):
        edge = feature_edge(gamma, DiscreteMeasure.from_blocks(m.rates, m.sizes, s2))
        return count_identifiable(adjusted_spikes(lam, m.rates, m.sizes), edge.alpha_plus)
    edge = sample_edge(gamma, DiscreteMeasure.from_blocks(m.rates, m.sizes), s2)
    return count_identifiable(lam, edge.population_threshold)


# --------------------------------------------------------------------------
# replications
# --------------------------------------------------------------------------


def _row(si, setting, rep, name, **kw):
    row = dict.fromkeys(LOG_FIELDS, "")
    row.update(setting=si, label=setting.label, rep=rep, estimator=name, r_true=setting.spec.r)
    row.update(kw)
    return row


def run_replication(task):
    """Run every estimator on one replication; returns ``(rows, seconds_by_estimator)``."""
    si, setting, rep, cfg = task
    mate_cfg = replace(cfg.mate, r_max=cfg.r_max or setting.preset.r_max)
    rows, seconds = [], {}
    try:
        x = generate_complete(setting.spec, _seed(cfg.seed, si, rep, 0))
        xo = apply_mcar(x, setting.missingness, _seed(cfg.seed, si, rep, 1))
    except Exception as exc:  # noqa: BLE001 - isolate generation failures too
        for name in cfg.estimators:
            rows.append(_row(si, setting, rep, name, status="error", error=f"generation: {exc}"))
        return rows, seconds
    cache = {}

    def spectrum():
        if "eigs" not in cache:
            cache["eigs"] = sample_cov_eigs(xo)
        return cache["eigs"]

    for name in cfg.estimators:
        t0 = time.perf_counter()
        try:
            out = ESTIMATORS[name](xo, setting, mate_cfg, _seed(cfg.seed, si, rep, 2), spectrum)
        except Exception as exc:  # noqa: BLE001 - one failure must not abort the sweep
            log.warning("%s rep %d %s failed: %s", setting.label, rep, name, exc)
            rows.append(_row(si, setting, rep, name, status="error", error=f"{type(exc).__name__}: {exc}"))
        else:
            if isinstance(out, (int, np.integer)):
                rows.append(_row(si, setting, rep, name, status="ok", r_hat=int(out)))
            else:
                rows.append(
                    _row(
                        si, setting, rep, name, status="ok", r_hat=out.r_hat, theta_hat=out.theta_hat,
                        sigma2_hat=out.sigma2_hat, v=out.v, epsilon_n=out.epsilon_n,
                        iterations=out.iterations, converged=int(out.converged),
                    )
                )
        seconds[name] = time.perf_counter() - t0
    return rows, seconds


# --------------------------------------------------------------------------
# aggregation and output
# --------------------------------------------------------------------------


def _num(v):
    if v in ("", None):
        return math.nan
    return float(v)


def aggregate(rows: List[dict], r_identifiable: Dict[int, float] = None) -> List[dict]:
    """Mean, MSE and under/over-estimation rates per (setting, estimator)."""
    groups: Dict[tuple, list] = {}
    for row in rows:
        groups.setdefault((int(row["setting"]), row["estimator"]), []).append(row)
    out = []
    for (si, name), grp in sorted(groups.items(), key=lambda kv: kv[0][0]):
        ok = [g for g in grp if g["status"] == "ok"]
        r_true = int(grp[0]["r_true"])
        r = np.array([int(g["r_hat"]) for g in ok], dtype=float)
        theta = np.array([_num(g["theta_hat"]) for g in ok])
        s2 = np.array([_num(g["sigma2_hat"]) for g in ok])
        conv = np.array([_num(g["converged"]) for g in ok])
        finite_theta = theta[np.isfinite(theta)]
        out.append(
            dict(
                setting=si,
                label=grp[0]["label"],
                estimator=name,
                r_true=r_true,
                r_identifiable=(r_identifiable or {}).get(si, math.nan),
                n_ok=len(ok),
                failures=len(grp) - len(ok),
                mean=float(r.mean()) if len(r) else math.nan,
                mse=float(np.mean((r - r_true) ** 2)) if len(r) else math.nan,
                under=float(np.mean(r < r_true)) if len(r) else math.nan,
                over=float(np.mean(r > r_true)) if len(r) else math.nan,
                mean_theta=float(finite_theta.mean()) if len(finite_theta) else math.nan,
                mean_sigma2=float(np.nanmean(s2)) if np.any(np.isfinite(s2)) else math.nan,
                converged_rate=float(np.nanmean(conv)) if np.any(np.isfinite(conv)) else math.nan,
            )
        )
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in fields})


def read_log(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def format_table(report: List[dict]) -> str:
    """Aligned text version of the report: mean (MSE) with under/over rates."""
    head = ("setting", "estimator", "r", "r1", "mean (MSE)", "under", "over", "theta", "sigma2", "fail")
    lines = []
    for row in report:
        r1 = row["r_identifiable"]
        lines.append(
            (
                row["label"],
                row["estimator"],
                str(row["r_true"]),
                "-" if math.isnan(r1) else str(int(r1)),
                f"{row['mean']:.2f} ({row['mse']:.2f})",
                f"{row['under']:.2f}",
                f"{row['over']:.2f}",
                "-" if math.isnan(row["mean_theta"]) else f"{row['mean_theta']:.2f}",
                "-" if math.isnan(row["mean_sigma2"]) else f"{row['mean_sigma2']:.3f}",
                str(row["failures"]),
            )
        )
    widths = [max(len(h), *(len(l[i]) for l in lines)) if lines else len(h) for i, h in enumerate(head)]
    fmt = "  ".join(f"{{:<{w}}}" if i < 2 else f"{{:>{w}}}" for i, w in enumerate(widths))
    return "\n".join([fmt.format(*head), fmt.format(*("-" * w for w in widths))] + [fmt.format(*l) for l in lines]) + "\n"


@dataclass
class SimulationReport:
    rows: List[dict]
    report: List[dict]
    timing: List[dict]
    paths: Dict[str, Path]

    def lookup(self, setting: int, estimator: str = "mate") -> dict:
        for row in self.report:
            if row["setting"] == setting and row["estimator"] == estimator:
                return row
        raise KeyError((setting, estimator))


def run_simulation(cfg: ExperimentConfig, write: bool = True) -> SimulationReport:
    """Run every setting for ``cfg.reps`` replications and write the report files."""
    tasks = [(si, s, rep, cfg) for si, s in enumerate(cfg.settings) for rep in range(cfg.reps)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_replication, tasks, chunksize=max(1, len(tasks) // (8 * cfg.workers))))
    else:
        results = [run_replication(t) for t in tasks]

    rows, totals = [], {}
    for (si, _, _, _), (rrows, secs) in zip(tasks, results):
        rows.extend(rrows)
        for name, sec in secs.items():
            totals[(si, name)] = totals.get((si, name), 0.0) + sec
    r1 = {si: identifiable_count(s) for si, s in enumerate(cfg.settings)}
    report = aggregate(rows, r1)
    timing = [
        dict(setting=si, label=cfg.settings[si].label, estimator=name, seconds=sec, per_rep=sec / cfg.reps)
        for (si, name), sec in sorted(totals.items())
    ]
    paths = {}
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        paths = dict(log=out / "log.csv", report=out / "report.csv", table=out / "report.txt", timing=out / "timing.csv")
        write_csv(paths["log"], LOG_FIELDS, rows)
        write_csv(paths["report"], REPORT_FIELDS, report)
        paths["table"].write_text(format_table(report))
        write_csv(paths["timing"], ("setting", "label", "estimator", "seconds", "per_rep"), timing)
        if cfg.plots:
            from .. import plotting

            paths["figure"] = plotting.render_report(report, out / "report.png")
    return SimulationReport(rows, report, timing, paths)
