"""Synthetic factor-model data, MCAR masking and CSV ingestion.

Data matrices are ``d x n``: features in rows, samples in columns.  Missing
entries are stored as literal zeros next to a boolean observation mask, which
is the form every spectral routine downstream works with.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from .errors import DegenerateFeatureError, DimensionError, IngestionError, ParameterError

DEFAULT_MISSING_TOKENS = ("", "NA", "NaN")


# --------------------------------------------------------------------------
# noise and model specifications
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Isotropic:
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ParameterError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class GammaDiagonal:
    """Diagonal noise with variances drawn from Gamma(theta, rate=theta/sigma2).

    ``t1`` and ``t2`` truncate the draws to ``[sigma2*t1, sigma2*t2]``; the
    defaults leave the distribution untruncated.
    """

    theta: float
    sigma2: float = 1.0
    t1: float = 0.0
    t2: float = math.inf

    def __post_init__(self):
        if not self.theta > 0:
            raise ParameterError(f"theta must be positive, got {self.theta}")
        if not self.sigma2 > 0:
            raise ParameterError(f"sigma2 must be positive, got {self.sigma2}")
        if self.t1 < 0 or not self.t1 < self.t2:
            raise ParameterError(f"need 0 <= t1 < t2, got t1={self.t1}, t2={self.t2}")

    @property
    def truncated(self) -> bool:
        return self.t1 > 0 or math.isfinite(self.t2)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        scale = self.sigma2 / self.theta
        if not self.truncated:
            return rng.gamma(self.theta, scale, size=size)
        dist = stats.gamma(self.theta, scale=scale)
        lo = dist.cdf(self.sigma2 * self.t1)
        hi = dist.cdf(self.sigma2 * self.t2) if math.isfinite(self.t2) else 1.0
        return dist.ppf(rng.uniform(lo, hi, size=size))


NoiseSpec = Union[Isotropic, GammaDiagonal]


@dataclass(frozen=True)
class FactorModelSpec:
    """Population model ``X = Sigma^{1/2} Y`` with a diagonal ``Sigma``.

    ``spike_mode`` says how ``spikes`` enter the diagonal of ``Sigma``:

    * ``"eigenvalue"``: the leading ``r`` variances are the spikes themselves,
      e.g. ``Sigma = diag(5, 4, 2.4, 1, ..., 1)``.
    * ``"loading"``: the spikes are factor-loading variances added on top of
      the noise variance of the same coordinate, ``lambda_i = rho_i + sigma_i^2``.
    """

    d: int
    n: int
    spikes: tuple = ()
    noise: NoiseSpec = field(default_factory=Isotropic)
    rotate: bool = False
    spike_mode: str = "eigenvalue"

    def __post_init__(self):
        object.__setattr__(self, "spikes", tuple(float(s) for s in self.spikes))
        if self.d < 1 or self.n < 1:
            raise DimensionError(f"need d >= 1 and n >= 1, got d={self.d}, n={self.n}")
        if len(self.spikes) >= self.d:
            raise DimensionError(f"{len(self.spikes)} spikes need d > {len(self.spikes)}, got d={self.d}")
        if any(s <= 0 for s in self.spikes):
            raise ParameterError("spikes must be strictly positive")
        if any(a < b for a, b in zip(self.spikes, self.spikes[1:])):
            raise ParameterError("spikes must be nonincreasing")
        if self.spike_mode not in ("eigenvalue", "loading"):
            raise ParameterError(f"unknown spike_mode {self.spike_mode!r}")

    @property
    def r(self) -> int:
        return len(self.spikes)

    @property
    def gamma(self) -> float:
        return self.d / self.n


# --------------------------------------------------------------------------
# missingness specifications
# --------------------------------------------------------------------------


def _check_rates(rates, allow_zero=False):
    for q in rates:
        if not (0.0 <= q <= 1.0) or (q == 0.0 and not allow_zero) or math.isnan(q):
            raise ParameterError(f"observation rate must lie in (0, 1], got {q}")


def equal_block_sizes(total: int, k: int) -> tuple:
    """Split ``total`` into ``k`` near-equal contiguous blocks (larger ones last)."""
    if k < 1 or k > total:
        raise DimensionError(f"cannot split {total} into {k} blocks")
    base, extra = divmod(total, k)
    return tuple(base + (1 if i >= k - extra else 0) for i in range(k))


@dataclass(frozen=True)
class Homogeneous:
    p: Optional[float] = None

    def __post_init__(self):
        if self.p is not None:
            _check_rates((self.p,), allow_zero=True)

    def probabilities(self, d: int, n: int):
        return self.p

    def rates_for(self, d: int, n: int) -> np.ndarray:
        return np.full(d, self.p, dtype=float)


@dataclass(frozen=True)
class FeatureBlocks:
    """Row blocks ``d_1, ..., d_K`` with observation rates ``p_1, ..., p_K``.

    ``rates`` may be ``None`` when the object is only used to describe a
    grouping (e.g. for :func:`estimate_rates`).
    """

    rates: Optional[tuple]
    sizes: tuple

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.rates is not None:
            object.__setattr__(self, "rates", tuple(float(q) for q in self.rates))
            if len(self.rates) != len(self.sizes):
                raise DimensionError("rates and sizes must have the same length")
        if not self.sizes or any(s < 1 for s in self.sizes):
            raise DimensionError("block sizes must be positive and K >= 1")

    @classmethod
    def equal(cls, rates: Sequence[float], d: int) -> "FeatureBlocks":
        return cls(tuple(rates), equal_block_sizes(d, len(rates)))

    def rates_for(self, d: int, n: int) -> np.ndarray:
        if sum(self.sizes) != d:
            raise DimensionError(f"feature block sizes sum to {sum(self.sizes)}, matrix has d={d}")
        return np.repeat(np.asarray(self.rates, dtype=float), self.sizes)

    def probabilities(self, d: int, n: int):
        return self.rates_for(d, n)[:, None]


@dataclass(frozen=True)
class SampleBlocks:
    """Column blocks ``n_1, ..., n_L`` with observation rates ``q_1, ..., q_L``."""

    rates: Optional[tuple]
    sizes: tuple

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.rates is not None:
            object.__setattr__(self, "rates", tuple(float(q) for q in self.rates))
            if len(self.rates) != len(self.sizes):
                raise DimensionError("rates and sizes must have the same length")
        if not self.sizes or any(s < 1 for s in self.sizes):
            raise DimensionError("block sizes must be positive and L >= 1")

    @classmethod
    def equal(cls, rates: Sequence[float], n: int) -> "SampleBlocks":
        return cls(tuple(rates), equal_block_sizes(n, len(rates)))

    def column_rates(self, d: int, n: int) -> np.ndarray:
        if sum(self.sizes) != n:
            raise DimensionError(f"sample block sizes sum to {sum(self.sizes)}, matrix has n={n}")
        return np.repeat(np.asarray(self.rates, dtype=float), self.sizes)

    def probabilities(self, d: int, n: int):
        return self.column_rates(d, n)[None, :]


MissingnessSpec = Union[Homogeneous, FeatureBlocks, SampleBlocks]


def _spec_rates(spec: MissingnessSpec) -> tuple:
    if isinstance(spec, Homogeneous):
        return (spec.p,)
    return spec.rates


# --------------------------------------------------------------------------
# incomplete matrix
# --------------------------------------------------------------------------


@dataclass(eq=False)
class IncompleteMatrix:
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.mask.shape:
            raise DimensionError(
                f"values {self.values.shape} and mask {self.mask.shape} must be equal 2-D shapes"
            )
        if np.any(self.values[~self.mask] != 0):
            raise ParameterError("unobserved entries must hold 0")

    @classmethod
    def complete(cls, x) -> "IncompleteMatrix":
        x = np.asarray(x, dtype=float)
        return cls(x, np.ones(x.shape, dtype=bool))

    @property
    def shape(self):
        return self.values.shape

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def observed_fraction(self) -> float:
        return float(self.mask.mean())

    def equals(self, other: "IncompleteMatrix") -> bool:
        return np.array_equal(self.mask, other.mask) and np.array_equal(self.values, other.values)


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------


def _streams(seed, k):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def population_variances(spec: FactorModelSpec, seed: int) -> np.ndarray:
    """Diagonal of ``Sigma`` used by :func:`generate_complete` for this seed."""
    noise_rng = _streams(seed, 3)[0]
    if isinstance(spec.noise, Isotropic):
        diag = np.full(spec.d, spec.noise.sigma2)
    else:
        diag = spec.noise.sample(spec.d, noise_rng)
    spikes = np.asarray(spec.spikes)
    if spec.spike_mode == "loading":
        diag[: spec.r] += spikes
    else:
        diag[: spec.r] = spikes
    return diag


def generate_complete(spec: FactorModelSpec, seed: int) -> np.ndarray:
    """Draw a complete ``d x n`` matrix ``X = Sigma^{1/2} Y`` with Gaussian ``Y``.

    The noise variances, ``Y`` and the optional rotation come from independent
    child streams of ``seed``, so toggling ``rotate`` leaves ``Y`` unchanged.
    """
    _, y_rng, rot_rng = _streams(seed, 3)
    diag = population_variances(spec, seed)
    x = np.sqrt(diag)[:, None] * y_rng.standard_normal((spec.d, spec.n))
    if spec.rotate:
        q = stats.ortho_group.rvs(spec.d, random_state=rot_rng) if spec.d > 1 else np.ones((1, 1))
        x = q @ x
    return x


def apply_mcar(x, spec: MissingnessSpec, seed: int) -> IncompleteMatrix:
    """Mask each entry independently with its block observation rate."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionError("x must be a 2-D matrix")
    rates = _spec_rates(spec)
    if rates is None or any(q is None for q in rates):
        raise ParameterError("missingness spec carries no rates")
    _check_rates(rates)
    d, n = x.shape
    prob = spec.probabilities(d, n)
    rng = np.random.default_rng(seed)
    mask = rng.random((d, n)) < prob
    return IncompleteMatrix(np.where(mask, x, 0.0), mask)


def feature_rates(x: IncompleteMatrix) -> np.ndarray:
    """Per-feature observed fractions, counted from the mask."""
    return x.mask.mean(axis=1)


def estimate_rates(x: IncompleteMatrix, grouping: MissingnessSpec) -> MissingnessSpec:
    """Replace the rates of ``grouping`` by mask-count estimates from ``x``."""
    if isinstance(grouping, Homogeneous):
        return Homogeneous(x.observed_fraction)
    if isinstance(grouping, FeatureBlocks):
        if sum(grouping.sizes) != x.d:
            raise DimensionError(f"feature block sizes sum to {sum(grouping.sizes)}, matrix has d={x.d}")
        edges = np.cumsum((0,) + grouping.sizes)
        rates = tuple(float(x.mask[a:b].mean()) for a, b in zip(edges[:-1], edges[1:]))
        return FeatureBlocks(rates, grouping.sizes)
    if isinstance(grouping, SampleBlocks):
        if sum(grouping.sizes) != x.n:
            raise DimensionError(f"sample block sizes sum to {sum(grouping.sizes)}, matrix has n={x.n}")
        edges = np.cumsum((0,) + grouping.sizes)
        rates = tuple(float(x.mask[:, a:b].mean()) for a, b in zip(edges[:-1], edges[1:]))
        return SampleBlocks(rates, grouping.sizes)
    raise ParameterError(f"unknown grouping {grouping!r}")


# --------------------------------------------------------------------------
# CSV input/output and standardization
# --------------------------------------------------------------------------


def ingest_csv(
    path,
    missing_token: Optional[str] = "NA",
    skip_header: bool = False,
    transpose: bool = False,
) -> IncompleteMatrix:
    """Read a rectangular numeric CSV (features in rows) into an IncompleteMatrix.

    Cells equal to ``missing_token``, empty cells, ``NA`` and ``NaN`` become
    unobserved.  Row numbers in error messages are 1-based file lines; column
    numbers are 1-based fields.
    """
    tokens = set(DEFAULT_MISSING_TOKENS)
    if missing_token is not None:
        tokens.add(missing_token)
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if skip_header and lineno == 1:
                continue
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise IngestionError(f"ragged row: expected {width} fields, found {len(row)}", row=lineno)
            parsed = []
            for col, cell in enumerate(row, start=1):
                cell = cell.strip()
                if cell in tokens:
                    parsed.append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise IngestionError(f"cannot parse {cell!r} as a number", row=lineno, column=col) from None
                if math.isinf(v):
                    raise IngestionError(f"infinite value {cell!r}", row=lineno, column=col)
                parsed.append(v)
            rows.append(parsed)
    if not rows:
        raise IngestionError(f"no data rows in {path}")
    arr = np.asarray(rows, dtype=float)
    if transpose:
        arr = arr.T
    mask = ~np.isnan(arr)
    return IncompleteMatrix(np.where(mask, arr, 0.0), mask)


def write_csv(x: IncompleteMatrix, path, missing_token: str = "NA") -> Path:
    """Write ``x`` so that :func:`ingest_csv` restores it bit for bit."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for vals, obs in zip(x.values, x.mask):
            writer.writerow([repr(float(v)) if o else missing_token for v, o in zip(vals, obs)])
    return path


def standardize(x: IncompleteMatrix) -> IncompleteMatrix:
    """Center and scale each feature to mean 0, sample variance 1 over observed entries."""
    values = np.zeros_like(x.values)
    for i in range(x.d):
        obs = x.values[i, x.mask[i]]
        if obs.size < 2:
            raise DegenerateFeatureError("feature has fewer than 2 observed entries", row=i)
        sd = obs.std(ddof=1)
        if not sd > 0:
            raise DegenerateFeatureError("feature has zero variance", row=i)
        values[i, x.mask[i]] = (obs - obs.mean()) / sd
    return IncompleteMatrix(values, x.mask.copy())
