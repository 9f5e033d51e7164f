"""Experiment configuration and its TOML file format.

A config file is flat key/value pairs plus one ``[[setting]]`` table per cell::

    seed = 7
    reps = 200
    estimators = ["mate", "m-er", "m-gr", "m-ed"]
    out = "results"

    [mate]
    beta = 0.1
    M = 200
    r_max = 10               # optional, overrides the preset cap

    [[setting]]
    model = 1
    d = 250
    n = 500
    missing = "feature"      # homog | feature | sample
    rates = [0.9, 0.8, 0.7]
    epsilon = 0.01           # optional fixed margin
    population_threshold = false

Command-line flags override file values.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from ..datagen import FactorModelSpec, FeatureBlocks, Homogeneous, MissingnessSpec, SampleBlocks
from ..errors import ConfigError, MateError
from ..estimators import MateConfig
from .models import get_preset, paper_settings

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ESTIMATOR_NAMES = ("mate", "m-er", "m-gr", "m-ed")


@dataclass(frozen=True)
class Setting:
    model: str
    d: int
    n: int
    missingness: MissingnessSpec
    epsilon_override: Optional[float] = None
    population_threshold: bool = False  # fix v at the true-rate, true-sigma2 edge

    @property
    def preset(self):
        return get_preset(self.model)

    @property
    def spec(self) -> FactorModelSpec:
        return self.preset.spec(self.d, self.n)

    @property
    def rates(self) -> tuple:
        m = self.missingness
        return (m.p,) if isinstance(m, Homogeneous) else m.rates

    @property
    def kind(self) -> str:
        return {Homogeneous: "homog", FeatureBlocks: "feature", SampleBlocks: "sample"}[type(self.missingness)]

    @property
    def grouping(self) -> MissingnessSpec:
        """Block layout without rates, handed to the estimators."""
        m = self.missingness
        return Homogeneous() if isinstance(m, Homogeneous) else type(m)(None, m.sizes)

    @property
    def label(self) -> str:
        rates = ",".join(f"{q:g}" for q in self.rates)
        tag = "" if self.kind == "homog" else f"{self.kind}:"
        return f"M{self.model}({self.d},{self.n},{tag}{rates})"


@dataclass(frozen=True)
class ExperimentConfig:
    settings: tuple
    reps: int = 200
    seed: int = 0
    estimators: tuple = ("mate",)
    mate: MateConfig = field(default_factory=lambda: MateConfig(M=200))
    out: Path = Path("results")
    workers: int = 1
    plots: bool = True
    r_max: Optional[int] = None  # None: each model preset's own cap

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError(f"reps must be at least 1, got {self.reps}")
        if not self.settings:
            raise ConfigError("no settings to run")
        bad = [e for e in self.estimators if e not in ESTIMATOR_NAMES]
        if bad:
            raise ConfigError(f"unknown estimators {bad}; choose from {ESTIMATOR_NAMES}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.r_max is not None and self.r_max < 1:
            raise ConfigError(f"r_max must be at least 1, got {self.r_max}")
        for s in self.settings:
            try:
                s.spec
            except MateError as exc:
                raise ConfigError(f"setting {s.label}: {exc}") from exc


def make_missingness(kind: str, rates, d: int, n: int) -> MissingnessSpec:
    rates = [float(q) for q in (rates if isinstance(rates, (list, tuple)) else [rates])]
    try:
        if kind == "homog":
            if len(rates) != 1:
                raise ConfigError("homogeneous missingness takes a single rate")
            return Homogeneous(rates[0])
        if kind == "feature":
            return FeatureBlocks.equal(rates, d)
        if kind == "sample":
            return SampleBlocks.equal(rates, n)
    except MateError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"missing must be homog, feature or sample, got {kind!r}")


def _setting_from_table(t: dict) -> Setting:
    try:
        model, d, n = str(t["model"]), int(t["d"]), int(t["n"])
    except KeyError as exc:
        raise ConfigError(f"setting is missing key {exc}") from exc
    miss = make_missingness(t.get("missing", "homog"), t.get("rates", [1.0]), d, n)
    eps = t.get("epsilon")
    return Setting(model, d, n, miss, None if eps is None else float(eps), bool(t.get("population_threshold", False)))


def paper_table_settings() -> tuple:
    return tuple(Setting(*cell) for cell in paper_settings())


_MATE_KEYS = {"beta", "M", "r_max", "epsilon_override", "max_iterations"}
_TOP_KEYS = {"seed", "reps", "estimators", "out", "workers", "plots", "mate", "setting", "paper_tables"}


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a TOML config (optional) and apply non-None keyword overrides."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    mate_raw = dict(raw.get("mate", {}))
    if set(mate_raw) - _MATE_KEYS:
        raise ConfigError(f"unknown [mate] keys {sorted(set(mate_raw) - _MATE_KEYS)}")
    for key in ("beta", "M", "r_max"):
        if overrides.get(key) is not None:
            mate_raw[key] = overrides.pop(key)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    mate_raw.setdefault("M", 200)
    r_max = mate_raw.pop("r_max", None)
    try:
        mate = MateConfig(**mate_raw)
    except (TypeError, MateError) as exc:
        raise ConfigError(f"invalid [mate] section: {exc}") from exc

    paper = overrides.pop("paper_tables", raw.get("paper_tables", False))
    settings = tuple(_setting_from_table(t) for t in raw.get("setting", []))
    if paper:
        settings = settings + paper_table_settings()
    extra = overrides.pop("settings", ())
    settings = settings + tuple(extra)
    kwargs = dict(
        settings=settings,
        reps=int(overrides.get("reps", raw.get("reps", 200))),
        seed=int(overrides.get("seed", raw.get("seed", 0))),
        estimators=tuple(overrides.get("estimators", raw.get("estimators", ("mate",)))),
        mate=mate,
        out=Path(overrides.get("out", raw.get("out", "results"))),
        workers=int(overrides.get("workers", raw.get("workers", 1))),
        plots=bool(overrides.get("plots", raw.get("plots", True))),
        r_max=None if r_max is None else int(r_max),
    )
    return ExperimentConfig(**kwargs)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
