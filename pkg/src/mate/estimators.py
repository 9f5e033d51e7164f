"""MATE estimators, Monte Carlo calibration and simplified baselines.

The null Monte Carlo uses common random numbers.  Each of the ``M`` copies
owns a child seed from which its Gaussian entries, Bernoulli mask and the
uniforms driving its noise variances are drawn.  For ``d <= n`` the masked
Gram matrix ``W_m`` of every copy is cached once, after which any diagonal
noise ``D`` only costs an eigenvalue of ``D^{1/2} W_m D^{1/2}``.  This keeps
the iterations of the anisotropic loop cheap and makes successive thresholds
comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg
from scipy import stats

from . import edges
from .datagen import (
    FeatureBlocks,
    Homogeneous,
    IncompleteMatrix,
    MissingnessSpec,
    SampleBlocks,
    estimate_rates,
    feature_rates,
)
from .errors import NumericalError, ParameterError, RatioDegenerateError, UnidentifiableBlockError
from .spectra import SpectrumResult, sample_cov_eigs, trimmed_moments

ISOTROPIC = math.inf  # theta sentinel: constant noise variance
CACHE_BYTES = 512 * 2**20


@dataclass(frozen=True)
class MateConfig:
    beta: float = 0.1
    M: int = 500
    r_max: int = 10
    epsilon_override: Optional[float] = None
    max_iterations: int = 10
    v_override: Optional[float] = None  # isotropic path only

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")
        if self.M < 1:
            raise ParameterError(f"M must be at least 1, got {self.M}")
        if self.r_max < 1:
            raise ParameterError(f"r_max must be at least 1, got {self.r_max}")
        if self.max_iterations < 1:
            raise ParameterError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if self.v_override is not None and not self.v_override > 0:
            raise ParameterError(f"v_override must be positive, got {self.v_override}")


@dataclass(frozen=True)
class MateResult:
    r_hat: int
    v: float
    epsilon_n: float
    theta_hat: float
    sigma2_hat: float
    iterations: int
    regime: str  # homog | feature | sample | anisotropic
    converged: bool = True
    oscillated: bool = False
    theta_clamped: bool = False
    history: tuple = field(default=(), compare=False)


def threshold_count(eigs, v: float, eps: float = 0.0) -> int:
    """Number of eigenvalues strictly above ``v + eps``."""
    lam = eigs.eigenvalues if isinstance(eigs, SpectrumResult) else np.asarray(eigs)
    return int(np.count_nonzero(lam > v + eps))


# --------------------------------------------------------------------------
# null Monte Carlo
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NullPattern:
    """Observation probabilities for null copies: scalar, ``(d, 1)``, ``(1, n)`` or ``(d, n)``."""

    d: int
    n: int
    prob: Union[float, np.ndarray]

    @classmethod
    def from_spec(cls, spec: MissingnessSpec, d: int, n: int) -> "NullPattern":
        return cls(d, n, spec.probabilities(d, n))

    @classmethod
    def from_feature_rates(cls, rates, n: int) -> "NullPattern":
        rates = np.asarray(rates, dtype=float)
        return cls(len(rates), n, rates[:, None])


class NullEnsemble:
    """``M`` reproducible null copies sharing one missingness pattern."""

    def __init__(self, pattern: NullPattern, M: int, seed, cache_bytes: int = CACHE_BYTES):
        if M < 1:
            raise ParameterError(f"M must be at least 1, got {M}")
        self.pattern = pattern
        self.M = M
        self._children = np.random.SeedSequence(seed).spawn(M)
        d, n = pattern.d, pattern.n
        self._cache = d <= n and M * d * d * 4 <= cache_bytes
        self._grams = None
        self._uniforms = None
        self._base_top = None

    def _draw(self, m):
        rng = np.random.default_rng(self._children[m])
        d, n = self.pattern.d, self.pattern.n
        u = rng.random(d)
        mask = rng.random((d, n), dtype=np.float32) < np.asarray(self.pattern.prob, dtype=np.float32)
        z = rng.standard_normal((d, n), dtype=np.float32)
        z *= mask
        return u, z

    def _build(self):
        if self._grams is not None:
            return
        d, n = self.pattern.d, self.pattern.n
        self._grams = np.empty((self.M, d, d), dtype=np.float32)
        self._uniforms = np.empty((self.M, d))
        for m in range(self.M):
            u, z = self._draw(m)
            self._uniforms[m] = u
            self._grams[m] = (z @ z.T) / np.float32(n)

    def uniforms(self, m) -> np.ndarray:
        if self._cache:
            self._build()
            return self._uniforms[m]
        return self._draw(m)[0]

    def top_eigenvalues(self, variances: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
        """Largest eigenvalue of each copy; ``variances`` maps a copy's uniforms to its noise variances."""
        if variances is None and self._base_top is not None:
            return self._base_top.copy()
        out = np.empty(self.M)
        n = self.pattern.n
        if self._cache:
            self._build()
        for m in range(self.M):
            if self._cache:
                g = self._grams[m]
                if variances is not None:
                    s = np.sqrt(variances(self._uniforms[m])).astype(np.float32)
                    g = g * np.outer(s, s)
            else:
                u, z = self._draw(m)
                if variances is not None:
                    z *= np.sqrt(variances(u)).astype(np.float32)[:, None]
                g = (z @ z.T if z.shape[0] <= z.shape[1] else z.T @ z) / np.float32(n)
            k = g.shape[0]
            try:
                out[m] = scipy.linalg.eigvalsh(g, subset_by_index=[k - 1, k - 1], check_finite=False)[0]
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
                raise NumericalError(f"null copy {m}: eigensolver failed") from exc
        if variances is None:
            self._base_top = out.copy()
        return out


def gamma_variances(theta: float, sigma2: float) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """Inverse-CDF map from uniforms to Gamma(theta, scale sigma2/theta) variances."""
    if math.isinf(theta):
        return None if sigma2 == 1.0 else (lambda u: np.full(u.shape, sigma2))
    return lambda u: stats.gamma.ppf(u, theta, scale=sigma2 / theta)


def _centered_quantile(draws: np.ndarray, beta: float) -> float:
    return float(np.quantile(draws - draws.mean(), 1.0 - beta))


def select_epsilon(pattern: NullPattern, sigma2: float, config: MateConfig, seed, ensemble=None) -> float:
    """Robustness margin: ``(1 - beta)``-quantile of centered null top eigenvalues under ``sigma2 I``."""
    ens = ensemble if ensemble is not None else NullEnsemble(pattern, config.M, seed)
    top = sigma2 * ens.top_eigenvalues()
    return _centered_quantile(top, config.beta)


def null_quantile_T(pattern: NullPattern, theta: float, sigma2: float, config: MateConfig, seed, ensemble=None) -> float:
    """``(1 - beta)``-quantile of null top eigenvalues with Gamma noise variances."""
    if not (theta > 0):
        raise ParameterError(f"theta must be positive or the isotropic sentinel, got {theta}")
    ens = ensemble if ensemble is not None else NullEnsemble(pattern, config.M, seed)
    if math.isinf(theta):
        top = sigma2 * ens.top_eigenvalues()
    else:
        top = ens.top_eigenvalues(gamma_variances(theta, sigma2))
    return float(np.quantile(top, 1.0 - config.beta))


# --------------------------------------------------------------------------
# moment estimators
# --------------------------------------------------------------------------


def _block_means(rates, sizes, total=None):
    rates = np.asarray(rates, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    total = sizes.sum() if total is None else total
    return float(np.sum(rates * sizes) / total), float(np.sum(rates**2 * sizes) / total)


def _theta_or_sentinel(num: float, den: float):
    if den <= 0 or not math.isfinite(den) or not math.isfinite(num / den):
        return ISOTROPIC, True
    return num / den, False


def moment_estimators_feature(b1: float, b2: float, rates, sizes, gamma: float, with_flag: bool = False):
    """``(theta_hat, sigma2_hat)`` from trimmed moments under feature-block missingness."""
    if not b1 > 0:
        raise ParameterError(f"b1 must be positive, got {b1}")
    m1, m2 = _block_means(rates, sizes)
    sigma2 = b1 / m1
    theta, clamped = _theta_or_sentinel(m2, (b2 / b1**2 - gamma) * m1**2 - m2)
    return (theta, sigma2, clamped) if with_flag else (theta, sigma2)


def moment_estimators_sample(b1: float, b2: float, rates, sizes, gamma: float, with_flag: bool = False):
    """``(theta_hat, sigma2_hat)`` from trimmed moments under sample-block missingness."""
    if not b1 > 0:
        raise ParameterError(f"b1 must be positive, got {b1}")
    m1, m2 = _block_means(rates, sizes)
    sigma2 = b1 / m1
    theta, clamped = _theta_or_sentinel(m1**2, (b2 / b1**2 - 1.0) * m1**2 - gamma * m2)
    return (theta, sigma2, clamped) if with_flag else (theta, sigma2)


# --------------------------------------------------------------------------
# MATE
# --------------------------------------------------------------------------


def _collapse(spec: MissingnessSpec) -> MissingnessSpec:
    # a single block is the homogeneous case
    if isinstance(spec, (FeatureBlocks, SampleBlocks)) and len(spec.sizes) == 1:
        return Homogeneous(spec.rates[0])
    return spec


def _check_blocks(spec: MissingnessSpec):
    rates = (spec.p,) if isinstance(spec, Homogeneous) else spec.rates
    for k, q in enumerate(rates):
        if q <= 0:
            raise UnidentifiableBlockError(f"block {k} has no observed entries; its rate is not identifiable")


def _as_incomplete(x) -> IncompleteMatrix:
    return x if isinstance(x, IncompleteMatrix) else IncompleteMatrix.complete(x)


def _unit_edge(est: MissingnessSpec, gamma: float):
    """Edge at unit noise variance and the mean observation rate; edges scale linearly in sigma2."""
    if isinstance(est, Homogeneous):
        return edges.mp_edge(est.p, 1.0, gamma).lambda_plus, est.p, "homog"
    m1, _ = _block_means(est.rates, est.sizes)
    measure = edges.DiscreteMeasure.from_blocks(est.rates, est.sizes)
    if isinstance(est, FeatureBlocks):
        return edges.feature_edge(gamma, measure).lambda_plus, m1, "feature"
    return edges.sample_edge(gamma, measure).lambda_plus, m1, "sample"


def population_threshold(missingness: MissingnessSpec, gamma: float, sigma2: float = 1.0) -> float:
    """Bulk edge at known rates and noise variance, for runs that fix ``v`` at its population value."""
    return sigma2 * _unit_edge(_collapse(missingness), gamma)[0]


def mate_isotropic(x, grouping: MissingnessSpec, config: MateConfig = MateConfig(), seed=0) -> MateResult:
    """MATE under isotropic noise with homogeneous, feature-block or sample-block missingness.

    ``sigma2`` is estimated from the first moment of the spectrum with the
    top ``r_max`` eigenvalues trimmed.  ``config.v_override`` replaces the
    estimated threshold with a fixed population value.
    """
    x = _as_incomplete(x)
    d, n = x.shape
    est = _collapse(estimate_rates(x, grouping))
    _check_blocks(est)
    spec = sample_cov_eigs(x)
    unit_v, m1, regime = _unit_edge(est, d / n)
    if config.epsilon_override is not None:
        unit_eps = None
    else:
        unit_eps = select_epsilon(NullPattern.from_spec(est, d, n), 1.0, config, seed)

    b1, _ = trimmed_moments(spec, min(config.r_max, d - 1))
    sigma2 = b1 / m1
    v = sigma2 * unit_v if config.v_override is None else float(config.v_override)
    eps = float(config.epsilon_override) if unit_eps is None else sigma2 * unit_eps
    r_hat = min(threshold_count(spec, v, eps), config.r_max)
    return MateResult(r_hat, v, eps, ISOTROPIC, sigma2, 1, regime, history=(r_hat,))


def _moment_route(x: IncompleteMatrix, grouping: Optional[MissingnessSpec]):
    """Rates, sizes, estimator and null pattern for the anisotropic loop."""
    d, n = x.shape
    if grouping is None:
        rates = feature_rates(x)
        if np.any(rates <= 0):
            raise UnidentifiableBlockError(f"feature {int(np.argmin(rates))} has no observed entries")
        return rates, np.ones(d), moment_estimators_feature, NullPattern.from_feature_rates(rates, n)
    est = estimate_rates(x, grouping)
    _check_blocks(est)
    if isinstance(est, Homogeneous):
        return (est.p,), (d,), moment_estimators_feature, NullPattern.from_spec(est, d, n)
    fn = moment_estimators_sample if isinstance(est, SampleBlocks) else moment_estimators_feature
    return est.rates, est.sizes, fn, NullPattern.from_spec(est, d, n)


def mate_anisotropic(
    x, config: MateConfig = MateConfig(), seed=0, grouping: Optional[MissingnessSpec] = None
) -> MateResult:
    """Iterative MATE for Gamma-diagonal noise.

    Starting from ``r_max + 1`` trimmed eigenvalues, alternate between moment
    estimates of ``(theta, sigma2)``, a Monte Carlo null quantile ``T_beta``
    and the count of the leading ``r_max`` eigenvalues above
    ``T_beta + epsilon_n``.  ``grouping=None`` matches the null copies to the
    per-feature observed fractions.
    """
    x = _as_incomplete(x)
    d, n = x.shape
    gamma = d / n
    spec = sample_cov_eigs(x)
    rates, sizes, moments, pattern = _moment_route(x, grouping)
    ens = NullEnsemble(pattern, config.M, seed)
    top = spec.eigenvalues[: config.r_max]

    r_prev = config.r_max + 1
    history = [r_prev]
    eps = None
    converged = oscillated = False
    theta = sigma2 = t_beta = math.nan
    clamped = False
    it = 0
    while it < config.max_iterations:
        it += 1
        b1, b2 = trimmed_moments(spec, min(r_prev, d - 1))
        theta, sigma2, clamped = moments(b1, b2, rates, sizes, gamma, with_flag=True)
        if eps is None:
            eps = (
                float(config.epsilon_override)
                if config.epsilon_override is not None
                else select_epsilon(pattern, sigma2, config, seed, ensemble=ens)
            )
        t_beta = null_quantile_T(pattern, theta, sigma2, config, seed, ensemble=ens)
        r_new = threshold_count(top, t_beta, eps)
        history.append(r_new)
        if r_new == r_prev:
            converged = True
            break
        if len(history) >= 4 and r_new == history[-3]:
            # two-cycle: settle on the smaller count
            oscillated = True
            r_new = min(r_new, r_prev)
            break
        r_prev = r_new
    return MateResult(
        r_new,
        t_beta,
        eps,
        theta,
        sigma2,
        it,
        "anisotropic",
        converged=converged,
        oscillated=oscillated,
        theta_clamped=clamped,
        history=tuple(history),
    )


# --------------------------------------------------------------------------
# baselines
# --------------------------------------------------------------------------


def _rescaled(eigs, p_hat: float) -> np.ndarray:
    if not p_hat > 0:
        raise ParameterError(f"p_hat must be positive, got {p_hat}")
    lam = eigs.eigenvalues if isinstance(eigs, SpectrumResult) else np.asarray(eigs, dtype=float)
    return lam / p_hat**2


def baseline_m_er(eigs, p_hat: float, r_max: int) -> int:
    """Eigenvalue ratio: ``argmax_{i <= r_max} lambda_i / lambda_{i+1}``."""
    lam = _rescaled(eigs, p_hat)
    if len(lam) < r_max + 1 or np.any(lam[: r_max + 1] <= 0):
        raise RatioDegenerateError(f"need {r_max + 1} positive eigenvalues for the ratio window")
    ratios = lam[:r_max] / lam[1 : r_max + 1]
    return int(np.argmax(ratios)) + 1


def baseline_m_gr(eigs, p_hat: float, r_max: int) -> int:
    """Growth ratio on tail sums ``V_i = sum_{j > i} lambda_j``."""
    lam = _rescaled(eigs, p_hat)
    tail = np.concatenate([np.cumsum(lam[::-1])[::-1], [0.0]])  # tail[i] = V_i
    if len(lam) < r_max + 2 or tail[r_max + 1] <= 0:
        raise RatioDegenerateError(f"tail sum V_{r_max + 1} must be positive")
    i = np.arange(1, r_max + 1)
    growth = np.log(tail[i - 1] / tail[i]) / np.log(tail[i] / tail[i + 1])
    return int(np.argmax(growth)) + 1


def _ed_count(lam: np.ndarray, r_max: int, delta: float) -> int:
    gaps = lam[:r_max] - lam[1 : r_max + 1]
    hits = np.nonzero(gaps >= delta)[0]
    return int(hits[-1]) + 1 if hits.size else 0


def ed_delta(lam: np.ndarray, r_max: int, rounds: int = 10):
    """Calibrate the gap threshold by regressing five eigenvalues on ``(j-1)^{2/3}``.

    Returns ``(delta, used_fallback)``.
    """
    m = min(len(lam), int(np.count_nonzero(lam > 0)))
    fallback = ((lam[0] - lam[m - 1]) / m if m > 0 else 0.0), True
    j = r_max + 1
    delta = None
    for _ in range(rounds):
        if j + 4 > m:
            return fallback
        y = lam[j - 1 : j + 4]
        x = (np.arange(j - 1, j + 4, dtype=float)) ** (2.0 / 3.0)
        slope = np.polyfit(x, y, 1)[0]
        if not math.isfinite(slope) or slope == 0:
            return fallback
        new = 2.0 * abs(slope)
        if delta is not None and new == delta:
            break
        delta = new
        j = _ed_count(lam, r_max, delta) + 1
    return delta, False


def baseline_m_ed(eigs, p_hat: float, r_max: int, seed=None) -> int:
    """Eigenvalue difference: ``max{i <= r_max: lambda_i - lambda_{i+1} >= delta}``.

    Deterministic; ``seed`` is accepted for a uniform estimator signature.
    """
    lam = _rescaled(eigs, p_hat)
    if len(lam) < r_max + 1:
        raise RatioDegenerateError(f"need {r_max + 1} eigenvalues, got {len(lam)}")
    delta, _ = ed_delta(lam, r_max)
    if delta <= 0:
        return 0
    return _ed_count(lam, r_max, delta)
