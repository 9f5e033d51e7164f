"""Command-line interface: ``mate <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import FeatureBlocks, Homogeneous, SampleBlocks, apply_mcar, equal_block_sizes, generate_complete, ingest_csv, standardize
from .edges import DiscreteMeasure, feature_edge, mp_edge, sample_edge
from .errors import ConfigError, MateError
from .estimators import MateConfig

log = logging.getLogger("mate")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--reps", type=int, default=None, help="replications (simulate) or repeats (rmse-validate)")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--config", type=Path, default=None, help="TOML config file (simulate)")
    p.add_argument("--transpose", action="store_true", help="CSV rows are samples rather than features")


def _mate_opts(p, r_max=10):
    p.add_argument("--M", type=int, default=200, help="Monte Carlo null copies")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--r-max", type=int, default=r_max)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mate", description="Factor-count estimation for MCAR-incomplete data.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a simulation sweep and write report tables")
    _common(p)
    p.add_argument("--paper-tables", action="store_true", help="add every published simulation setting")
    p.add_argument("--model", default=None, help="model preset: 1-8 or example3")
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--missing", choices=("homog", "feature", "sample"), default="homog")
    p.add_argument("--rates", type=float, nargs="+", default=[1.0])
    p.add_argument("--epsilon", type=float, default=None, help="fixed margin instead of Monte Carlo selection")
    p.add_argument(
        "--population-threshold", action="store_true", help="fix v at the edge for the true rates and noise variance"
    )
    p.add_argument("--estimators", nargs="+", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--r-max", type=int, default=None, help="cap on the count (default: per model preset)")
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("estimate", help="estimate the factor count of one CSV dataset")
    _common(p)
    p.add_argument("csv", type=Path)
    p.add_argument("--grouping", choices=("homog", "feature", "sample"), default="homog")
    p.add_argument("--blocks", type=int, default=1, help="number of equal blocks for --grouping")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--skip-header", action="store_true")
    p.add_argument("--missing-token", default="NA")
    p.add_argument("--estimators", nargs="+", default=["mate", "mate-aniso", "m-er", "m-gr", "m-ed"])
    p.add_argument("--no-plots", action="store_true")
    _mate_opts(p)

    p = sub.add_parser("realdata", help="standardize, mask and estimate a real panel")
    _common(p)
    p.add_argument("csv", type=Path)
    p.add_argument("--missing-rate", type=float, default=0.3)
    p.add_argument("--skip-header", action="store_true")
    p.add_argument("--missing-token", default="NA")
    p.add_argument("--estimators", nargs="+", default=["mate", "mate-aniso", "m-er", "m-gr", "m-ed"])
    _mate_opts(p)

    p = sub.add_parser("rmse-validate", help="average imputation RMSE over a rank grid")
    _common(p)
    p.add_argument("csv", type=Path, nargs="?", help="complete data matrix; omit to use --model")
    p.add_argument("--model", default=None, help="synthetic preset instead of a CSV")
    p.add_argument("--d", type=int, default=250)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--missing-rate", type=float, default=0.3)
    p.add_argument("--ranks", type=int, nargs="+", default=list(range(1, 9)))
    p.add_argument("--skip-header", action="store_true")
    p.add_argument("--no-rescale", action="store_true", help="drop the 1/p inverse-probability factor")
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("edges", help="print the rightmost bulk edge for one configuration")
    _common(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--kind", choices=("homog", "feature", "sample"), default="homog")
    p.add_argument("--rates", type=float, nargs="+", default=[1.0])
    p.add_argument("--weights", type=float, nargs="+", default=None, help="block shares (default equal)")
    p.add_argument("--sigma2", type=float, default=1.0)

    p = sub.add_parser("figures", help="write edge-surface grids, a render script and PNGs")
    _common(p)
    p.add_argument("--gamma-feature", type=float, default=0.5)
    p.add_argument("--gamma-sample", type=float, default=2.0)
    p.add_argument("--grid", type=int, default=10)
    p.add_argument("--no-render", action="store_true")
    return parser


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .harness.config import Setting, load_config, make_missingness
    from .harness.simulate import run_simulation

    extra = ()
    if args.model is not None:
        if args.d is None or args.n is None:
            raise ConfigError("--model needs --d and --n")
        miss = make_missingness(args.missing, args.rates, args.d, args.n)
        extra = (Setting(str(args.model), args.d, args.n, miss, args.epsilon, args.population_threshold),)
    cfg = load_config(
        args.config,
        seed=args.seed,
        reps=args.reps,
        out=args.out,
        estimators=args.estimators,
        workers=args.workers,
        M=args.M,
        beta=args.beta,
        r_max=args.r_max,
        plots=False if args.no_plots else None,
        paper_tables=True if args.paper_tables else None,
        settings=extra,
    )
    res = run_simulation(cfg)
    sys.stdout.write(res.paths["table"].read_text())
    for key, path in res.paths.items():
        print(f"{key}: {path}")
    failures = sum(r["failures"] for r in res.report)
    if failures:
        print(f"note: {failures} estimator runs failed; see the log for details")
    return 0


def _grouping(kind, k, d, n):
    if kind == "homog":
        return Homogeneous()
    if kind == "feature":
        return FeatureBlocks(None, equal_block_sizes(d, k))
    return SampleBlocks(None, equal_block_sizes(n, k))


def cmd_estimate(args) -> int:
    from .estimators import mate_anisotropic, mate_isotropic
    from .harness.realdata import run_estimators
    from .spectra import sample_cov_eigs

    x = ingest_csv(args.csv, missing_token=args.missing_token, skip_header=args.skip_header, transpose=args.transpose)
    if args.standardize:
        x = standardize(x)
    cfg = MateConfig(beta=args.beta, M=args.M, r_max=args.r_max)
    seed = 0 if args.seed is None else args.seed
    names = list(args.estimators)
    rows = []
    if args.grouping != "homog" and "mate" in names:
        names.remove("mate")
        res = mate_isotropic(x, _grouping(args.grouping, args.blocks, x.d, x.n), cfg, seed)
        rows.append(dict(estimator="mate", r_hat=res.r_hat, v=res.v, epsilon_n=res.epsilon_n))
    rows += run_estimators(x, names, cfg, seed)
    print(f"d={x.d} n={x.n} observed={x.observed_fraction:.4f}")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("estimator", "r_hat", "threshold"))
    for row in rows:
        w.writerow((row["estimator"], row["r_hat"], f"{row['v']:.6g}" if "v" in row else ""))
    if args.out is not None:
        from .harness.figures import write_scree

        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "estimate.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("estimator", "r_hat"))
            for row in rows:
                w.writerow((row["estimator"], row["r_hat"]))
        scree = write_scree(args.out / "scree_data.csv", sample_cov_eigs(x).eigenvalues)
        if not args.no_plots:
            from . import plotting

            thr = next((row["v"] + row["epsilon_n"] for row in rows if row["estimator"] == "mate"), None)
            print(f"figure: {plotting.render_scree(scree, threshold=thr)}")
    return 0


def cmd_realdata(args) -> int:
    from .harness.realdata import real_data_pipeline

    cfg = MateConfig(beta=args.beta, M=args.M, r_max=args.r_max)
    res = real_data_pipeline(
        args.csv,
        missing_rate=args.missing_rate,
        seed=10 if args.seed is None else args.seed,
        estimators=args.estimators,
        cfg=cfg,
        out=args.out,
        transpose=args.transpose,
        skip_header=args.skip_header,
        missing_token=args.missing_token,
    )
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("estimator", "r_hat", "seconds"))
    for row in res["rows"]:
        w.writerow((row["estimator"], row["r_hat"], f"{row['seconds']:.4f}"))
    return 0


def cmd_rmse(args) -> int:
    from .datagen import IncompleteMatrix
    from .harness.models import get_preset
    from .harness.realdata import mask_entries, rmse_rank_validation

    seed = 0 if args.seed is None else args.seed
    if args.csv is not None:
        x = ingest_csv(args.csv, skip_header=args.skip_header, transpose=args.transpose)
        if not x.mask.all():
            raise ConfigError("rmse-validate needs a fully observed matrix")
        truth = standardize(x).values
    elif args.model is not None:
        # rotated loadings: with diagonal Sigma no cell is predictable from the others
        truth = generate_complete(get_preset(args.model).spec(args.d, args.n, rotate=True), [seed, 0])
    else:
        raise ConfigError("give a CSV path or --model")
    masked = mask_entries(IncompleteMatrix.complete(truth), args.missing_rate, [seed, 1])
    armse = rmse_rank_validation(truth, masked, args.ranks, args.reps or 20, [seed, 2], rescale=not args.no_rescale)
    best = min(armse, key=armse.get)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("rank", "armse"))
    for r, v in armse.items():
        w.writerow((r, f"{v:.6f}"))
    print(f"best rank: {best}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "armse.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("rank", "armse"))
            for r, v in armse.items():
                w.writerow((r, repr(v)))
        if not args.no_plots:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt

            fig, ax = plt.subplots(figsize=(4.5, 3.2))
            ax.plot(list(armse), list(armse.values()), "o-")
            ax.set_xlabel("rank")
            ax.set_ylabel("ARMSE")
            fig.tight_layout()
            fig.savefig(args.out / "armse.png", dpi=120)
            plt.close(fig)
    return 0


def cmd_edges(args) -> int:
    k = len(args.rates)
    weights = args.weights or [1.0 / k] * k
    if len(weights) != k:
        raise ConfigError("--weights must match --rates in length")
    total = sum(weights)
    weights = [w / total for w in weights]
    if args.kind == "homog":
        if k != 1:
            raise ConfigError("homogeneous edge takes one rate")
        res = mp_edge(args.rates[0], args.sigma2, args.gamma)
    elif args.kind == "feature":
        res = feature_edge(args.gamma, DiscreteMeasure(tuple(q * args.sigma2 for q in args.rates), tuple(weights)))
    else:
        res = sample_edge(args.gamma, DiscreteMeasure(tuple(args.rates), tuple(weights)), args.sigma2)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("kind", "gamma", "lambda_plus", "alpha_plus", "population_threshold", "method"))
    w.writerow(
        (
            args.kind,
            args.gamma,
            repr(float(res.lambda_plus)),
            "" if res.alpha_plus is None else repr(float(res.alpha_plus)),
            repr(float(res.population_threshold)),
            res.method,
        )
    )
    return 0


def cmd_figures(args) -> int:
    from .harness.figures import emit_figures

    paths = emit_figures(
        args.out or Path("figures"),
        gamma_feature=args.gamma_feature,
        gamma_sample=args.gamma_sample,
        grid=args.grid,
        render=not args.no_render,
    )
    for key, path in paths.items():
        print(f"{key}: {path}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "realdata": cmd_realdata,
    "rmse-validate": cmd_rmse,
    "edges": cmd_edges,
    "figures": cmd_figures,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (MateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
