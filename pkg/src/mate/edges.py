"""Bulk edges and spike-identifiability thresholds under MCAR missingness.

Three isotropic regimes are covered:

* homogeneous rate ``p``: closed-form Marchenko-Pastur edge scaled by ``p``;
* feature blocks: edge ``psi(alpha_+)`` of the map
  ``psi(a) = a + gamma * sum_j w_j a t_j / (a - t_j)`` over the measure of
  ``Sigma P_d`` (atoms ``p_k sigma^2``, weights ``d_k / d``);
* sample blocks: the largest solution of the separable-covariance edge system
  ``f(x, s) = 0, df/ds(x, s) = 0``, obtained through ``d <-> n`` duality and
  cross-checked by solving the system directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import ConsistencyError, NonIdentifiableError, ParameterError, PoleError, SolverError

DUALITY_RTOL = 1e-6


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = tuple(float(a) for a in np.atleast_1d(self.atoms))
        weights = tuple(float(w) for w in np.atleast_1d(self.weights))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if len(atoms) == 0 or len(atoms) != len(weights):
            raise ParameterError("atoms and weights must be non-empty and of equal length")
        if any(not (math.isfinite(a) and a > 0) for a in atoms):
            raise ParameterError(f"atoms must be finite and positive, got {atoms}")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise ParameterError(f"weights must be nonnegative and sum to 1, got {weights}")

    @classmethod
    def from_blocks(cls, rates: Sequence[float], sizes: Sequence[int], sigma2: float = 1.0):
        """Measure with atoms ``rate * sigma2`` weighted by block share."""
        sizes = np.asarray(sizes, dtype=float)
        w = sizes / sizes.sum()
        w[-1] = 1.0 - w[:-1].sum()
        return cls(tuple(float(q) * sigma2 for q in rates), tuple(w))

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.atoms)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)

    @property
    def max_atom(self) -> float:
        return max(a for a, w in zip(self.atoms, self.weights) if w > 0)


@dataclass(frozen=True)
class EdgeResult:
    lambda_plus: float
    alpha_plus: Optional[float]
    method: str
    # sample-specific regime only: s2 at the edge and the population cutoff -1/s2(a1)
    s2_at_edge: Optional[float] = None
    population_threshold: Optional[float] = None


# --------------------------------------------------------------------------
# homogeneous
# --------------------------------------------------------------------------


def mp_edge(p: float, sigma2: float, gamma: float) -> EdgeResult:
    if not (0 < p <= 1) or not sigma2 > 0 or not gamma > 0:
        raise ParameterError(f"need p in (0,1], sigma2 > 0, gamma > 0; got {p}, {sigma2}, {gamma}")
    root = 1.0 + math.sqrt(gamma)
    alpha = p * sigma2 * root
    return EdgeResult(alpha * root, alpha, "closed_form", population_threshold=alpha)


# --------------------------------------------------------------------------
# feature-specific
# --------------------------------------------------------------------------


def _check_pole(alpha, m: DiscreteMeasure):
    if np.any(np.isclose(np.subtract.outer(np.atleast_1d(alpha), m.t), 0.0, rtol=0, atol=0)):
        raise PoleError(f"alpha={alpha} coincides with an atom of the measure")


def psi_feature(alpha, gamma: float, m: DiscreteMeasure):
    """``psi(a) = a + gamma * sum_j w_j a t_j / (a - t_j)``; vectorized over ``alpha``."""
    _check_pole(alpha, m)
    a = np.asarray(alpha, dtype=float)
    terms = m.w * a[..., None] * m.t / (a[..., None] - m.t)
    out = a + gamma * terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def psi_feature_prime(alpha, gamma: float, m: DiscreteMeasure):
    _check_pole(alpha, m)
    a = np.asarray(alpha, dtype=float)
    terms = m.w * m.t**2 / (a[..., None] - m.t) ** 2
    out = 1.0 - gamma * terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def feature_edge(gamma: float, m: DiscreteMeasure) -> EdgeResult:
    """Rightmost bulk edge ``psi(alpha_+)`` for feature-block missingness.

    ``alpha_+`` is the root of ``psi'`` to the right of the largest atom.  A
    geometric grid brackets the sign change and Brent's method refines it.
    """
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    tmax = m.max_atom
    lo_gap = 1e-6
    while psi_feature_prime(tmax * (1 + lo_gap), gamma, m) >= 0:
        if lo_gap < 1e-15:
            raise SolverError(f"psi' nonnegative down to {tmax * (1 + lo_gap)!r}; cannot bracket")
        lo_gap *= 1e-3
    lo = tmax * (1 + lo_gap)
    hi = tmax * (1 + math.sqrt(gamma)) ** 2 * 10
    grid = np.geomspace(lo, hi, 200)
    vals = psi_feature_prime(grid, gamma, m)
    change = np.nonzero((vals[:-1] < 0) & (vals[1:] >= 0))[0]
    if change.size == 0:
        raise SolverError(f"no sign change of psi' on [{lo!r}, {hi!r}]")
    k = change[-1]
    alpha = optimize.brentq(
        lambda a: psi_feature_prime(a, gamma, m), grid[k], grid[k + 1], xtol=1e-14 * tmax, rtol=4 * np.finfo(float).eps
    )
    return EdgeResult(psi_feature(alpha, gamma, m), alpha, "psi_root", population_threshold=alpha)


def spike_limit_feature(tilde_lambda: float, gamma: float, m: DiscreteMeasure) -> float:
    """Limiting location ``psi(tilde_lambda)`` of a sample spike."""
    edge = feature_edge(gamma, m)
    if tilde_lambda <= edge.alpha_plus:
        raise NonIdentifiableError(
            f"spike {tilde_lambda} does not exceed the identification threshold {edge.alpha_plus}"
        )
    return psi_feature(tilde_lambda, gamma, m)


# --------------------------------------------------------------------------
# sample-specific
# --------------------------------------------------------------------------


def _sample_edge_direct(gamma: float, mq: DiscreteMeasure, sigma2: float):
    """Solve ``f = 0, df/ds = 0`` for isotropic noise.

    With ``a = 1 + sigma2 s`` and ``y = x a`` the derivative condition reads
    ``gamma sigma2^2 sum_l w_l q_l^2 / (c_l - y)^2 = 1`` with poles
    ``c_l = q_l gamma sigma2``; ``f = 0`` then gives
    ``s = G / (1 - sigma2 G)`` and ``x = y (1 - sigma2 G)`` where
    ``G(y) = sum_l w_l q_l / (c_l - y)``.  Every real root ``y`` is scanned and
    the largest ``x`` is the edge.
    """
    q, w = mq.t, mq.w
    keep = w > 0
    q, w = q[keep], w[keep]
    c = q * gamma * sigma2
    k2 = gamma * sigma2**2 * w * q**2

    def h(y):
        return np.sum(k2 / (c - y) ** 2) - 1.0

    def g(y):
        return np.sum(w * q / (c - y))

    poles = np.unique(c)
    reach = math.sqrt(k2.sum()) * 2 + 1e-12
    roots = []
    # right of the largest pole: h decreases from +inf to -1
    top = poles[-1]
    gap = 1e-9 * max(top, 1.0)
    while h(top + gap) <= 0 and gap > 1e-300:
        gap *= 1e-3
    roots.append(optimize.brentq(h, top + gap, top + reach, xtol=1e-15 * top, rtol=4 * np.finfo(float).eps))
    # left of the smallest pole: h increases from -1 to +inf
    bot = poles[0]
    gap = 1e-9 * max(bot, 1.0)
    while h(bot - gap) <= 0 and gap > 1e-300:
        gap *= 1e-3
    roots.append(optimize.brentq(h, bot - reach, bot - gap, xtol=1e-15 * bot, rtol=4 * np.finfo(float).eps))
    # between consecutive poles h is convex: zero or two roots
    for a, b in zip(poles[:-1], poles[1:]):
        res = optimize.minimize_scalar(h, bounds=(a, b), method="bounded", options={"xatol": 1e-14 * b})
        if res.fun < 0:
            span = (b - a) * 1e-12
            roots.append(optimize.brentq(h, a + span, res.x, xtol=1e-15 * b))
            roots.append(optimize.brentq(h, res.x, b - span, xtol=1e-15 * b))
    best = None
    for y in roots:
        gy = g(y)
        denom = 1.0 - sigma2 * gy
        if denom == 0:
            continue
        x = y * denom
        s = gy / denom
        if best is None or x > best[0]:
            best = (x, s)
    if best is None:
        raise SolverError("sample-specific edge system has no admissible real solution")
    return best


def sample_edge_residuals(x: float, s: float, gamma: float, mq: DiscreteMeasure, sigma2: float):
    """Residuals ``(f, df/ds)`` of the sample-specific edge system at ``(x, s)``."""
    q, w = mq.t, mq.w
    a = 1.0 + sigma2 * s
    den = -x + q * gamma * sigma2 / a
    f = -s + np.sum(w * q / den)
    dfds = -1.0 + np.sum(w * q**2 * gamma * sigma2**2 / (-x * a + q * gamma * sigma2) ** 2)
    return float(f), float(dfds)


def sample_edge(gamma: float, mq: DiscreteMeasure, sigma2: float = 1.0, rtol: float = DUALITY_RTOL) -> EdgeResult:
    """Rightmost edge ``a_1`` for sample-block missingness with isotropic noise.

    ``mq`` holds the column observation rates ``q_l`` with weights ``n_l / n``.
    The edge is computed by transposing the problem (feature edge at aspect
    ratio ``1/gamma`` over atoms ``sigma2 q_l``, rescaled by ``gamma``) and
    verified against the direct solution of the edge system.
    """
    if not gamma > 0 or not sigma2 > 0:
        raise ParameterError(f"need gamma > 0 and sigma2 > 0, got {gamma}, {sigma2}")
    dual = feature_edge(1.0 / gamma, DiscreteMeasure(tuple(sigma2 * q for q in mq.atoms), mq.weights))
    lam = gamma * dual.lambda_plus
    x_direct, s_edge = _sample_edge_direct(gamma, mq, sigma2)
    if abs(x_direct - lam) > rtol * abs(lam):
        raise ConsistencyError(f"duality edge {lam!r} and direct edge {x_direct!r} disagree")
    return EdgeResult(lam, None, "duality", s2_at_edge=s_edge, population_threshold=-1.0 / s_edge)


def sample_edge_direct(gamma: float, mq: DiscreteMeasure, sigma2: float = 1.0) -> EdgeResult:
    """Edge from the direct ``(f, df/ds)`` system alone."""
    x, s = _sample_edge_direct(gamma, mq, sigma2)
    return EdgeResult(x, None, "system_root", s2_at_edge=s, population_threshold=-1.0 / s)


# --------------------------------------------------------------------------
# identifiability
# --------------------------------------------------------------------------


def count_identifiable(spikes: Sequence[float], threshold: float) -> int:
    """Number of population spikes strictly above ``threshold``."""
    return int(sum(1 for s in spikes if s > threshold))


def adjusted_spikes(spikes: Sequence[float], rates: Sequence[float], sizes: Sequence[int]) -> list:
    """Leading eigenvalues of ``Sigma P_d`` for diagonal ``Sigma`` with spikes on the first coordinates."""
    row_rates = np.repeat(np.asarray(rates, dtype=float), sizes)
    if len(spikes) > len(row_rates):
        raise ParameterError("more spikes than features")
    return sorted((float(s) * row_rates[i] for i, s in enumerate(spikes)), reverse=True)
